#include "mmt/text.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>

#include "mmt/rng.hpp"

namespace mmt {

namespace {

bool is_split_punct(char c) {
  static const std::string kPunct = ".,;:!?\"'()";
  return kPunct.find(c) != std::string::npos;
}

// Lowercase ASCII and the Latin-1 supplement (covers German/French input).
void append_lowered(std::string& out, const std::string& s, std::size_t i,
                    std::size_t& advance) {
  unsigned char c = static_cast<unsigned char>(s[i]);
  if (c < 0x80) {
    out.push_back(static_cast<char>(std::tolower(c)));
    advance = 1;
    return;
  }
  if (c == 0xC3 && i + 1 < s.size()) {
    unsigned char d = static_cast<unsigned char>(s[i + 1]);
    // U+00C0..U+00DE -> U+00E0..U+00FE, skipping the multiplication sign
    if (d >= 0x80 && d <= 0x9E && d != 0x97) d += 0x20;
    out.push_back(static_cast<char>(c));
    out.push_back(static_cast<char>(d));
    advance = 2;
    return;
  }
  out.push_back(s[i]);
  advance = 1;
}

}  // namespace

std::vector<std::string> normalize_tokenize(const std::string& line) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  };
  for (std::size_t i = 0; i < line.size();) {
    char c = line[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
      ++i;
      continue;
    }
    if (is_split_punct(c)) {
      flush();
      tokens.push_back(std::string(1, c));
      ++i;
      continue;
    }
    std::size_t advance = 1;
    append_lowered(cur, line, i, advance);
    i += advance;
  }
  flush();
  return tokens;
}

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<bos>");
  add("<eos>");
  add("<unk>");
}

void Vocabulary::add(const std::string& token) {
  token_to_id_.emplace(token, static_cast<int>(id_to_token_.size()));
  id_to_token_.push_back(token);
}

Vocabulary Vocabulary::build(
    const std::vector<std::vector<std::string>>& corpus, std::size_t cap) {
  if (cap < 1) throw DataError("build_vocab: cap must be at least 1");
  struct Entry {
    std::int64_t count = 0;
    std::size_t first = 0;
  };
  std::unordered_map<std::string, Entry> freq;
  std::size_t pos = 0;
  std::size_t total = 0;
  Vocabulary reserved_probe;
  for (const auto& sent : corpus) {
    for (const auto& tok : sent) {
      ++total;
      if (tok == "<pad>" || tok == "<bos>" || tok == "<eos>" ||
          tok == "<unk>") {
        ++pos;
        continue;
      }
      auto [it, inserted] = freq.try_emplace(tok);
      if (inserted) it->second.first = pos;
      ++it->second.count;
      ++pos;
    }
  }
  if (total == 0) throw DataError("build_vocab: empty corpus");

  std::vector<std::pair<std::string, Entry>> items(freq.begin(), freq.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second.count != b.second.count) {
      return a.second.count > b.second.count;
    }
    return a.second.first < b.second.first;
  });

  Vocabulary v;
  for (std::size_t i = 0; i < items.size() && i < cap; ++i) {
    v.add(items[i].first);
  }
  return v;
}

int Vocabulary::lookup(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= static_cast<int>(id_to_token_.size())) {
    throw DataError("vocabulary: id " + std::to_string(id) + " out of range");
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(
    const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(lookup(t));
  return ids;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids) const {
  std::vector<std::string> tokens;
  tokens.reserve(ids.size());
  for (int id : ids) tokens.push_back(token(id));
  return tokens;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("vocabulary: cannot write " + path);
  for (std::size_t i = kReserved; i < id_to_token_.size(); ++i) {
    out << id_to_token_[i] << '\n';
  }
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("vocabulary: cannot read " + path);
  Vocabulary v;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (v.token_to_id_.count(line)) {
      throw DataError("vocabulary: duplicate token '" + line + "' in " + path);
    }
    v.add(line);
  }
  return v;
}

std::vector<int> frame(std::vector<int> ids) {
  std::vector<int> out;
  out.reserve(ids.size() + 2);
  out.push_back(Vocabulary::kBos);
  out.insert(out.end(), ids.begin(), ids.end());
  out.push_back(Vocabulary::kEos);
  return out;
}

bool pair_passes(std::size_t src_len, std::size_t tgt_len,
                 const FilterLimits& lim) {
  auto in_range = [&](std::size_t n) {
    return n >= static_cast<std::size_t>(lim.min_len) &&
           n <= static_cast<std::size_t>(lim.max_len);
  };
  if (!in_range(src_len) || !in_range(tgt_len)) return false;
  std::size_t lo = std::min(src_len, tgt_len);
  std::size_t hi = std::max(src_len, tgt_len);
  if (lo == 0) return false;
  return static_cast<double>(hi) <= lim.max_ratio * static_cast<double>(lo);
}

std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>>
filter_pairs(
    const std::vector<std::pair<std::vector<std::string>,
                                std::vector<std::string>>>& pairs,
    const FilterLimits& lim, std::vector<std::size_t>* kept_indices) {
  std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>>
      kept;
  if (kept_indices) kept_indices->clear();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pair_passes(pairs[i].first.size(), pairs[i].second.size(), lim)) {
      kept.push_back(pairs[i]);
      if (kept_indices) kept_indices->push_back(i);
    }
  }
  return kept;
}

std::vector<Batch> make_batches(const std::vector<ParallelExample>& examples,
                                int batch_size, bool sort_by_src_len,
                                std::uint64_t shuffle_seed) {
  if (examples.empty()) throw DataError("make_batches: empty example list");
  if (batch_size < 1) throw DataError("make_batches: batch_size must be >= 1");

  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(shuffle_seed);
  rng.shuffle(order);
  if (sort_by_src_len) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a,
                                                     std::size_t b) {
      return examples[a].src.size() < examples[b].src.size();
    });
  }

  bool with_images = examples[order[0]].image != nullptr;
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size();
       start += static_cast<std::size_t>(batch_size)) {
    std::size_t end =
        std::min(order.size(), start + static_cast<std::size_t>(batch_size));
    Batch b;
    Eigen::Index rows = static_cast<Eigen::Index>(end - start);
    Eigen::Index src_cols = 0, tgt_cols = 0;
    for (std::size_t k = start; k < end; ++k) {
      const auto& ex = examples[order[k]];
      src_cols = std::max<Eigen::Index>(
          src_cols, static_cast<Eigen::Index>(ex.src.size()));
      tgt_cols = std::max<Eigen::Index>(
          tgt_cols, static_cast<Eigen::Index>(ex.tgt.size()));
    }
    b.src = MatI::Constant(rows, src_cols, Vocabulary::kPad);
    b.tgt = MatI::Constant(rows, tgt_cols, Vocabulary::kPad);
    b.src_mask = Mat::Zero(rows, src_cols);
    b.tgt_mask = Mat::Zero(rows, tgt_cols);
    for (std::size_t k = start; k < end; ++k) {
      const auto& ex = examples[order[k]];
      Eigen::Index r = static_cast<Eigen::Index>(k - start);
      for (std::size_t j = 0; j < ex.src.size(); ++j) {
        b.src(r, static_cast<Eigen::Index>(j)) = ex.src[j];
        b.src_mask(r, static_cast<Eigen::Index>(j)) = Real(1);
      }
      for (std::size_t j = 0; j < ex.tgt.size(); ++j) {
        b.tgt(r, static_cast<Eigen::Index>(j)) = ex.tgt[j];
        b.tgt_mask(r, static_cast<Eigen::Index>(j)) = Real(1);
      }
      b.src_len.push_back(static_cast<int>(ex.src.size()));
      b.tgt_len.push_back(static_cast<int>(ex.tgt.size()));
      if (with_images) {
        if (!ex.image) {
          throw DataError("make_batches: example missing image features");
        }
        b.image.push_back(ex.image);
      }
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

namespace {

void write_u64(std::ofstream& out, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64(std::ifstream& in, const std::string& path) {
  unsigned char buf[8];
  if (!in.read(reinterpret_cast<char*>(buf), 8)) {
    throw DataError("feature file truncated: " + path);
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

FeatureFile read_features(const std::string& path, std::size_t expect_regions,
                          std::size_t expect_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read feature file " + path);
  std::uint64_t n = read_u64(in, path);
  std::uint64_t regions = read_u64(in, path);
  std::uint64_t dim = read_u64(in, path);
  if (expect_regions != 0 && regions != expect_regions) {
    throw DataError("feature file " + path + ": has " +
                    std::to_string(regions) + " regions per example, expected " +
                    std::to_string(expect_regions));
  }
  if (expect_dim != 0 && dim != expect_dim) {
    throw DataError("feature file " + path + ": feature dim " +
                    std::to_string(dim) + ", expected " +
                    std::to_string(expect_dim));
  }
  FeatureFile f;
  f.n_regions = regions;
  f.dim = dim;
  std::vector<float> buf(regions * dim);
  for (std::uint64_t e = 0; e < n; ++e) {
    if (!in.read(reinterpret_cast<char*>(buf.data()),
                 static_cast<std::streamsize>(buf.size() * sizeof(float)))) {
      throw DataError("feature file truncated: " + path);
    }
    Mat m(static_cast<Eigen::Index>(regions), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < buf.size(); ++i) {
      m(static_cast<Eigen::Index>(i)) = static_cast<Real>(buf[i]);
    }
    f.examples.push_back(std::move(m));
  }
  return f;
}

void write_features(const std::string& path, const std::vector<Mat>& examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write feature file " + path);
  std::uint64_t regions = examples.empty()
                              ? 0
                              : static_cast<std::uint64_t>(examples[0].rows());
  std::uint64_t dim =
      examples.empty() ? 0 : static_cast<std::uint64_t>(examples[0].cols());
  write_u64(out, examples.size());
  write_u64(out, regions);
  write_u64(out, dim);
  for (const Mat& m : examples) {
    if (static_cast<std::uint64_t>(m.rows()) != regions ||
        static_cast<std::uint64_t>(m.cols()) != dim) {
      throw DataError("write_features: inconsistent example shapes");
    }
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      float v = static_cast<float>(m(i));
      out.write(reinterpret_cast<const char*>(&v), sizeof(float));
    }
  }
}

}  // namespace mmt
