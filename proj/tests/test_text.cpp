#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <set>

#include "helpers.hpp"
#include "mmt/rng.hpp"
#include "mmt/text.hpp"

using namespace mmt;

namespace {

std::filesystem::path temp_dir() {
  auto p = std::filesystem::temp_directory_path() / "mmt_text_test";
  std::filesystem::create_directories(p);
  return p;
}

std::vector<std::string> toks(std::initializer_list<const char*> l) {
  return std::vector<std::string>(l.begin(), l.end());
}

}  // namespace

TEST_CASE("tokenizer rules") {
  CHECK(normalize_tokenize("A man, smiling.") ==
        toks({"a", "man", ",", "smiling", "."}));
  CHECK(normalize_tokenize("Hello") == toks({"hello"}));
  CHECK(normalize_tokenize("two   spaces") == toks({"two", "spaces"}));
  CHECK(normalize_tokenize("") == std::vector<std::string>{});
  CHECK(normalize_tokenize("don't \"stop\"!") ==
        toks({"don", "'", "t", "\"", "stop", "\"", "!"}));
  CHECK(normalize_tokenize("Ärzte GRÜSSEN") == toks({"ärzte", "grüssen"}));
}

TEST_CASE("vocab build keeps cap most frequent, ties by first occurrence") {
  std::vector<std::vector<std::string>> corpus = {{"a", "a", "b"}};
  auto v2 = Vocabulary::build(corpus, 2);
  CHECK(v2.size() == 6);  // 2 + reserved
  CHECK(v2.lookup("a") == 4);
  CHECK(v2.lookup("b") == 5);

  auto v1 = Vocabulary::build(corpus, 1);
  CHECK(v1.lookup("a") == 4);
  CHECK(v1.lookup("b") == Vocabulary::kUnk);

  // Tie: c and d both once; c occurs first.
  auto vt = Vocabulary::build({{"c", "d", "c", "d"}}, 1);
  CHECK(vt.lookup("c") == 4);

  CHECK_THROWS_AS(Vocabulary::build({}, 5), DataError);
  CHECK_THROWS_AS(Vocabulary::build({{}}, 5), DataError);
}

TEST_CASE("vocab cap of 10000 on a larger corpus gives 10004 entries") {
  std::vector<std::vector<std::string>> corpus;
  for (int i = 0; i < 12000; ++i) {
    corpus.push_back({"w" + std::to_string(i)});
  }
  auto v = Vocabulary::build(corpus, 10000);
  CHECK(v.size() == 10004);
}

TEST_CASE("encode/decode round trip and UNK behavior") {
  auto v = Vocabulary::build({{"a", "b", "c"}}, 3);
  Rng rng(3);
  for (int rep = 0; rep < 30; ++rep) {
    std::vector<std::string> sent;
    int n = 1 + static_cast<int>(rng.below(8));
    for (int i = 0; i < n; ++i) {
      sent.push_back(std::string(1, static_cast<char>('a' + rng.below(3))));
    }
    CHECK(v.decode(v.encode(sent)) == sent);
  }
  CHECK(v.encode({"zz"}) == std::vector<int>{Vocabulary::kUnk});
  CHECK(v.decode({Vocabulary::kUnk}) == toks({"<unk>"}));
  CHECK_THROWS_AS(v.token(99), DataError);
}

TEST_CASE("vocab save/load round trip") {
  auto dir = temp_dir();
  auto v = Vocabulary::build({{"x", "y", "x"}}, 10);
  auto path = (dir / "vocab.txt").string();
  v.save(path);
  auto w = Vocabulary::load(path);
  CHECK(w.size() == v.size());
  CHECK(w.lookup("x") == v.lookup("x"));
  CHECK(w.lookup("y") == v.lookup("y"));
}

TEST_CASE("filter boundaries") {
  FilterLimits lim;
  CHECK_FALSE(pair_passes(2, 10, lim));   // below min
  CHECK_FALSE(pair_passes(10, 31, lim));  // ratio 3.1
  CHECK(pair_passes(3, 9, lim));          // ratio exactly 3
  CHECK(pair_passes(3, 3, lim));          // min boundary
  CHECK(pair_passes(50, 50, lim));        // max boundary
  CHECK_FALSE(pair_passes(51, 50, lim));  // above max
  FilterLimits wide{3, 500, 3.0};
  CHECK_FALSE(pair_passes(100, 301, wide));  // ratio 3.01
  CHECK(pair_passes(100, 300, wide));
}

TEST_CASE("filter_pairs is idempotent and reports kept indices") {
  std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>>
      pairs;
  auto mk = [](int n) {
    return std::vector<std::string>(static_cast<std::size_t>(n), "w");
  };
  pairs.push_back({mk(2), mk(10)});
  pairs.push_back({mk(5), mk(5)});
  pairs.push_back({mk(10), mk(31)});
  pairs.push_back({mk(3), mk(9)});
  FilterLimits lim;
  std::vector<std::size_t> kept;
  auto once = filter_pairs(pairs, lim, &kept);
  CHECK(once.size() == 2);
  CHECK(kept == std::vector<std::size_t>{1, 3});
  auto twice = filter_pairs(once, lim);
  CHECK(twice == once);
}

TEST_CASE("batches cover every example once with tail padding") {
  std::vector<ParallelExample> ex;
  for (int i = 0; i < 5; ++i) {
    ParallelExample e;
    e.src = frame(std::vector<int>(static_cast<std::size_t>(1 + i), 4));
    e.tgt = frame({4, 4});
    ex.push_back(e);
  }
  auto batches = make_batches(ex, 2, false, 123);
  CHECK(batches.size() == 3);
  CHECK(batches[0].size() == 2);
  CHECK(batches[1].size() == 2);
  CHECK(batches[2].size() == 1);

  // exactly-once coverage, identified by framed src length
  std::multiset<int> seen;
  double mask_total = 0.0;
  int token_total = 0;
  for (const auto& b : batches) {
    for (int r = 0; r < b.size(); ++r) {
      seen.insert(b.src_len[static_cast<std::size_t>(r)]);
      token_total += b.src_len[static_cast<std::size_t>(r)] +
                     b.tgt_len[static_cast<std::size_t>(r)];
      // padding strictly after the true length
      for (Eigen::Index c = 0; c < b.src.cols(); ++c) {
        bool real = c < b.src_len[static_cast<std::size_t>(r)];
        CHECK(b.src_mask(r, c) == (real ? 1.0 : 0.0));
        if (!real) CHECK(b.src(r, c) == Vocabulary::kPad);
      }
    }
    mask_total += b.src_mask.sum() + b.tgt_mask.sum();
  }
  CHECK(seen == std::multiset<int>{3, 4, 5, 6, 7});
  CHECK(mask_total == doctest::Approx(token_total));
}

TEST_CASE("equal-length batch has all-ones mask") {
  std::vector<ParallelExample> ex(4);
  for (auto& e : ex) {
    e.src = frame({4, 5});
    e.tgt = frame({5});
  }
  auto batches = make_batches(ex, 4, false, 1);
  CHECK(batches.size() == 1);
  CHECK(batches[0].src_mask.minCoeff() == 1.0);
  CHECK(batches[0].tgt_mask.minCoeff() == 1.0);
}

TEST_CASE("batching is deterministic for a fixed seed") {
  std::vector<ParallelExample> ex;
  for (int i = 0; i < 17; ++i) {
    ParallelExample e;
    e.src = frame({4 + i, 4});
    e.tgt = frame({4});
    ex.push_back(e);
  }
  auto a = make_batches(ex, 4, false, 99);
  auto b = make_batches(ex, 4, false, 99);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].src == b[i].src);
    CHECK(a[i].tgt == b[i].tgt);
  }
  auto c = make_batches(ex, 4, false, 100);
  bool same = true;
  for (std::size_t i = 0; i < a.size() && same; ++i) {
    same = a[i].src == c[i].src;
  }
  CHECK_FALSE(same);

  CHECK_THROWS_AS(make_batches({}, 4, false, 1), DataError);
}

TEST_CASE("sorted batches are nondecreasing in source length") {
  Rng rng(5);
  std::vector<ParallelExample> ex;
  for (int i = 0; i < 23; ++i) {
    ParallelExample e;
    e.src = frame(std::vector<int>(1 + rng.below(10), 4));
    e.tgt = frame({4});
    ex.push_back(e);
  }
  auto batches = make_batches(ex, 5, true, 7);
  int prev = 0;
  for (const auto& b : batches) {
    for (int l : b.src_len) {
      CHECK(l >= prev);
      prev = l;
    }
  }
}

TEST_CASE("feature file round trip and validation") {
  auto dir = temp_dir();
  auto path = (dir / "feat.bin").string();
  Rng rng(8);
  std::vector<Mat> feats;
  for (int i = 0; i < 3; ++i) feats.push_back(test::rand_mat(rng, 4, 6));
  write_features(path, feats);

  auto f = read_features(path, 4, 6);
  CHECK(f.examples.size() == 3);
  CHECK(f.n_regions == 4);
  CHECK(f.dim == 6);
  // f32 round trip: compare at float precision
  for (int i = 0; i < 3; ++i) {
    CHECK(test::max_abs_diff(f.examples[static_cast<std::size_t>(i)],
                             feats[static_cast<std::size_t>(i)]) <= 1e-7);
  }

  CHECK_THROWS_AS(read_features(path, 196, 6), DataError);
  CHECK_THROWS_AS(read_features(path, 4, 1024), DataError);
  CHECK_THROWS_AS(read_features((dir / "missing.bin").string(), 4, 6),
                  DataError);

  // truncated payload
  auto bad = (dir / "bad.bin").string();
  {
    std::filesystem::copy_file(path, bad,
                               std::filesystem::copy_options::overwrite_existing);
    std::filesystem::resize_file(bad, std::filesystem::file_size(bad) - 7);
  }
  CHECK_THROWS_AS(read_features(bad, 4, 6), DataError);
}
