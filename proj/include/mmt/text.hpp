#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mmt/types.hpp"

namespace mmt {

/// Lowercase, split sentence punctuation off adjoining words, collapse
/// whitespace. Handles ASCII plus the Latin-1 range of UTF-8 for casing.
std::vector<std::string> normalize_tokenize(const std::string& line);

/// Token <-> id map with reserved ids 0..3.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kReserved = 4;

  Vocabulary();

  /// Keep the `cap` most frequent tokens of the corpus; ties broken by
  /// first occurrence. Tokens spelled like the reserved markers are
  /// skipped. Throws DataError on an empty corpus.
  static Vocabulary build(const std::vector<std::vector<std::string>>& corpus,
                          std::size_t cap);

  int lookup(const std::string& token) const;  // kUnk when absent
  const std::string& token(int id) const;
  std::size_t size() const { return id_to_token_.size(); }

  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;

  /// One token per line, line number = id - 4.
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  void add(const std::string& token);
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

/// Wrap ids in BOS/EOS.
std::vector<int> frame(std::vector<int> ids);

struct ParallelExample {
  std::vector<int> src;  // BOS/EOS framed
  std::vector<int> tgt;  // BOS/EOS framed
  const Mat* image = nullptr;  // n_regions x feat_dim, owned by the dataset
};

struct FilterLimits {
  int min_len = 3;
  int max_len = 50;
  double max_ratio = 3.0;
};

/// Keep pairs whose raw token lengths are inside [min_len, max_len] on both
/// sides and whose longer/shorter ratio is at most max_ratio. Boundary
/// values are kept.
bool pair_passes(std::size_t src_len, std::size_t tgt_len,
                 const FilterLimits& lim);

/// Filter tokenized pairs; `kept_indices`, when given, receives the original
/// index of each surviving pair.
std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>>
filter_pairs(
    const std::vector<std::pair<std::vector<std::string>,
                                std::vector<std::string>>>& pairs,
    const FilterLimits& lim, std::vector<std::size_t>* kept_indices = nullptr);

struct Batch {
  MatI src;             // B x Lmax padded with kPad
  MatI tgt;
  std::vector<int> src_len;  // framed lengths
  std::vector<int> tgt_len;
  Mat src_mask;         // 1 where a real token sits
  Mat tgt_mask;
  std::vector<const Mat*> image;  // empty or size B

  int size() const { return static_cast<int>(src_len.size()); }
};

/// Shuffle deterministically by seed, optionally stable-sort by source
/// length, then chunk. Every example appears exactly once.
std::vector<Batch> make_batches(const std::vector<ParallelExample>& examples,
                                int batch_size, bool sort_by_src_len,
                                std::uint64_t shuffle_seed);

/// UTF-8 lines of a text file. Strips a trailing '\r' per line.
std::vector<std::string> read_lines(const std::string& path);

/// Image-region features for a split: header of three little-endian u64
/// (n_examples, n_regions, dim) followed by f32 payload, example-major then
/// region-major.
struct FeatureFile {
  std::vector<Mat> examples;  // each n_regions x dim
  std::size_t n_regions = 0;
  std::size_t dim = 0;
};

FeatureFile read_features(const std::string& path,
                          std::size_t expect_regions, std::size_t expect_dim);
void write_features(const std::string& path, const std::vector<Mat>& examples);

}  // namespace mmt
