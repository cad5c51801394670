#pragma once

#include <string>
#include <vector>

#include "mmt/types.hpp"

namespace mmt {

/// Corpus-level BLEU with clipped n-gram precision and brevity penalty.
/// Scores are percentages; counts are kept so the report is self-verifying.
struct BleuReport {
  double bleu[4] = {0, 0, 0, 0};  // BLEU-1..4
  double brevity_penalty = 1.0;
  long hyp_len = 0;
  long ref_len = 0;               // closest reference length, summed
  long match[4] = {0, 0, 0, 0};   // clipped n-gram matches
  long total[4] = {0, 0, 0, 0};   // hypothesis n-gram counts
  int max_n = 4;
  bool smoothed = false;

  /// Recompute BLEU-k from the recorded counts.
  double score(int k) const;
  /// Machine-parsable key=value lines (meteor column reserved).
  std::string to_kv() const;
};

/// hyps[i] scored against refs[i] (one or more references each).
/// No smoothing by default; the add-one flag stabilizes tiny corpora.
BleuReport corpus_bleu(
    const std::vector<std::vector<std::string>>& hyps,
    const std::vector<std::vector<std::vector<std::string>>>& refs,
    int max_n = 4, bool add_one_smoothing = false);

}  // namespace mmt
