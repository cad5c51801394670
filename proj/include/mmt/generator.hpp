#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "mmt/decoder.hpp"
#include "mmt/text.hpp"

namespace mmt {

/// A (partial) decode: BOS-rooted token ids, cumulative log-probability,
/// and the decoder state after the last emitted token. Finished hypotheses
/// end in EOS and are never extended; hit_max_len flags a forced close.
struct Hypothesis {
  std::vector<int> tokens{Vocabulary::kBos};
  double log_prob = 0.0;
  Mat state;
  bool finished = false;
  bool hit_max_len = false;
};

namespace detail {

/// Ranking used everywhere: higher cumulative log-probability first, ties
/// by lexicographically smaller token sequence.
inline bool better(double lp_a, const std::vector<int>& ta, double lp_b,
                   const std::vector<int>& tb) {
  if (lp_a != lp_b) return lp_a > lp_b;
  return std::lexicographical_compare(ta.begin(), ta.end(), tb.begin(),
                                      tb.end());
}

inline bool better(const Hypothesis& a, const Hypothesis& b) {
  return better(a.log_prob, a.tokens, b.log_prob, b.tokens);
}

}  // namespace detail

/// Classical left-to-right beam search over raw cumulative log-probability
/// (no length normalization). Per step, all live hypotheses are expanded
/// over the full vocabulary, the top `beam` candidates survive, and those
/// ending in EOS move to a completed pool capped at `beam`. Search stops
/// when the pool provably dominates every live hypothesis or after max_len
/// emissions, at which point live hypotheses are closed with the
/// hit_max_len flag. The Stepper provides init_state(), vocab_size(), and
/// step(state, y_prev) -> {log_probs, state}.
template <typename Stepper>
Hypothesis beam_search(const Stepper& stepper, int beam, int max_len) {
  if (beam < 1) throw UsageError("beam_search: beam must be >= 1");
  if (max_len < 1) throw UsageError("beam_search: max_len must be >= 1");
  const int vocab = stepper.vocab_size();

  std::vector<Hypothesis> live(1);
  live[0].state = stepper.init_state();
  std::vector<Hypothesis> pool;

  struct Cand {
    std::size_t parent;
    int token;
    double log_prob;
    std::vector<int> tokens;  // parent tokens + token
  };

  for (int t = 0; t < max_len && !live.empty(); ++t) {
    std::vector<Mat> next_state(live.size());
    std::vector<Cand> cands;
    cands.reserve(live.size() * static_cast<std::size_t>(vocab));
    for (std::size_t h = 0; h < live.size(); ++h) {
      auto out = stepper.step(live[h].state, live[h].tokens.back());
      if (!out.log_probs.allFinite()) {
        throw NumericError("beam_search: non-finite log-probabilities");
      }
      next_state[h] = std::move(out.state);
      for (int v = 0; v < vocab; ++v) {
        Cand c;
        c.parent = h;
        c.token = v;
        c.log_prob = live[h].log_prob + static_cast<double>(out.log_probs(0, v));
        c.tokens = live[h].tokens;
        c.tokens.push_back(v);
        cands.push_back(std::move(c));
      }
    }
    std::size_t keep = std::min<std::size_t>(cands.size(),
                                             static_cast<std::size_t>(beam));
    std::partial_sort(cands.begin(),
                      cands.begin() + static_cast<std::ptrdiff_t>(keep),
                      cands.end(), [](const Cand& a, const Cand& b) {
                        return detail::better(a.log_prob, a.tokens, b.log_prob,
                                              b.tokens);
                      });
    cands.resize(keep);

    std::vector<Hypothesis> next_live;
    for (Cand& c : cands) {
      Hypothesis h;
      h.tokens = std::move(c.tokens);
      h.log_prob = c.log_prob;
      if (c.token == Vocabulary::kEos) {
        h.finished = true;
        pool.push_back(std::move(h));
      } else {
        h.state = next_state[c.parent];
        next_live.push_back(std::move(h));
      }
    }
    std::sort(pool.begin(), pool.end(),
              [](const Hypothesis& a, const Hypothesis& b) {
                return detail::better(a, b);
              });
    if (pool.size() > static_cast<std::size_t>(beam)) {
      pool.resize(static_cast<std::size_t>(beam));
    }
    live = std::move(next_live);

    // no live hypothesis can still beat or tie the best finished one
    if (!pool.empty() && !live.empty()) {
      double best_live = live[0].log_prob;
      for (const Hypothesis& h : live) {
        best_live = std::max(best_live, h.log_prob);
      }
      if (best_live < pool[0].log_prob) break;
    }
  }

  for (Hypothesis& h : live) {
    h.hit_max_len = true;
    pool.push_back(std::move(h));
  }
  if (pool.empty()) throw Error("beam_search: no hypothesis produced");
  auto best = std::min_element(pool.begin(), pool.end(),
                               [](const Hypothesis& a, const Hypothesis& b) {
                                 return detail::better(a, b);
                               });
  return *best;
}

/// Plain argmax decoding, ties to the smallest token id. Kept independent
/// of beam_search so the two can be checked against each other.
template <typename Stepper>
Hypothesis greedy_decode(const Stepper& stepper, int max_len) {
  Hypothesis h;
  h.state = stepper.init_state();
  for (int t = 0; t < max_len; ++t) {
    auto out = stepper.step(h.state, h.tokens.back());
    if (!out.log_probs.allFinite()) {
      throw NumericError("greedy_decode: non-finite log-probabilities");
    }
    int best = 0;
    for (int v = 1; v < stepper.vocab_size(); ++v) {
      if (out.log_probs(0, v) > out.log_probs(0, best)) best = v;
    }
    h.log_prob += static_cast<double>(out.log_probs(0, best));
    h.tokens.push_back(best);
    if (best == Vocabulary::kEos) {
      h.finished = true;
      return h;
    }
    h.state = std::move(out.state);
  }
  h.hit_max_len = true;
  return h;
}

/// Decode one framed source sentence with the real model.
Hypothesis decode_example(const ModelParams& params,
                          const std::vector<int>& framed_src, const Mat* feats,
                          bool multimodal, int beam, int max_len);

/// Content tokens of a hypothesis (BOS/EOS stripped).
std::vector<std::string> hyp_tokens(const Hypothesis& h,
                                    const Vocabulary& tgt_vocab);

bool has_unk(const Hypothesis& h);

/// Task-2 candidate: one decode of one source description.
struct Candidate {
  std::vector<std::string> tokens;
  double log_prob = 0.0;
  bool contains_unk = false;
  bool finished = true;
};

/// Pick the highest-log-probability candidate, preferring ones without an
/// UNK token; falls back to the global argmax when every candidate has one.
std::size_t select_preferred(const std::vector<Candidate>& candidates);

struct TranslateOptions {
  int beam = 12;
  int max_len = 80;
  bool multimodal = false;
  /// When set, rank by log-probability divided by emitted length instead of
  /// the raw cumulative value (applies to the multi-source selection).
  bool length_normalize = false;
};

/// One output line per input line; metadata (log-prob, unk flag, finished
/// flag) as TSV when metadata_path is given.
void translate_file(const ModelParams& params, const Vocabulary& src_vocab,
                    const Vocabulary& tgt_vocab, const std::string& src_path,
                    const std::optional<std::string>& feature_path,
                    const std::string& out_path,
                    const std::optional<std::string>& metadata_path,
                    const TranslateOptions& opts);

/// Decode group_size consecutive source lines per image and keep one output
/// line per image by the UNK-preferring rule.
void multisource_file(const ModelParams& params, const Vocabulary& src_vocab,
                      const Vocabulary& tgt_vocab, const std::string& src_path,
                      const std::string& feature_path,
                      const std::string& out_path, int group_size,
                      const TranslateOptions& opts);

/// Corpus BLEU-4 (percent) of decoded validation examples against their
/// target sides. beam == 1 uses greedy decoding.
double validation_bleu(const ModelParams& params,
                       const std::vector<ParallelExample>& valid,
                       const Vocabulary& tgt_vocab, int beam, int max_len,
                       bool multimodal);

}  // namespace mmt
