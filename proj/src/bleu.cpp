#include "mmt/bleu.hpp"

#include <cmath>
#include <cstdio>
#include <unordered_map>

namespace mmt {

namespace {

using Counts = std::unordered_map<std::string, long>;

Counts ngram_counts(const std::vector<std::string>& tokens, int n) {
  Counts out;
  if (static_cast<int>(tokens.size()) < n) return out;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size();
       ++i) {
    std::string key = tokens[i];
    for (int j = 1; j < n; ++j) {
      key.push_back('\x1f');
      key += tokens[i + static_cast<std::size_t>(j)];
    }
    ++out[key];
  }
  return out;
}

}  // namespace

double BleuReport::score(int k) const {
  if (k < 1 || k > max_n) return 0.0;
  double log_sum = 0.0;
  for (int n = 1; n <= k; ++n) {
    long m = match[n - 1];
    long t = total[n - 1];
    if (smoothed) {
      if (t == 0) return 0.0;
      log_sum += std::log((static_cast<double>(m) + 1.0) /
                          (static_cast<double>(t) + 1.0));
    } else {
      if (m == 0 || t == 0) return 0.0;
      log_sum += std::log(static_cast<double>(m) / static_cast<double>(t));
    }
  }
  return 100.0 * brevity_penalty *
         std::exp(log_sum / static_cast<double>(k));
}

std::string BleuReport::to_kv() const {
  char buf[512];
  std::snprintf(
      buf, sizeof(buf),
      "bleu1=%.2f\nbleu2=%.2f\nbleu3=%.2f\nbleu4=%.2f\nbp=%.4f\n"
      "hyp_len=%ld\nref_len=%ld\n"
      "match1=%ld total1=%ld\nmatch2=%ld total2=%ld\n"
      "match3=%ld total3=%ld\nmatch4=%ld total4=%ld\n"
      "smoothed=%d\nmeteor=-\n",
      bleu[0], bleu[1], bleu[2], bleu[3], brevity_penalty, hyp_len, ref_len,
      match[0], total[0], match[1], total[1], match[2], total[2], match[3],
      total[3], smoothed ? 1 : 0);
  return std::string(buf);
}

BleuReport corpus_bleu(
    const std::vector<std::vector<std::string>>& hyps,
    const std::vector<std::vector<std::vector<std::string>>>& refs, int max_n,
    bool add_one_smoothing) {
  if (hyps.empty()) throw DataError("corpus_bleu: empty hypothesis set");
  if (hyps.size() != refs.size()) {
    throw DataError("corpus_bleu: " + std::to_string(hyps.size()) +
                    " hypotheses vs " + std::to_string(refs.size()) +
                    " reference sets");
  }
  if (max_n < 1 || max_n > 4) {
    throw DataError("corpus_bleu: max_n must be in [1,4]");
  }

  BleuReport rep;
  rep.max_n = max_n;
  rep.smoothed = add_one_smoothing;

  for (std::size_t i = 0; i < hyps.size(); ++i) {
    const auto& hyp = hyps[i];
    const auto& rset = refs[i];
    if (rset.empty()) {
      throw DataError("corpus_bleu: sentence " + std::to_string(i) +
                      " has no reference");
    }
    long hlen = static_cast<long>(hyp.size());
    rep.hyp_len += hlen;

    // closest reference length; ties go to the shorter one
    long best_rlen = static_cast<long>(rset[0].size());
    for (const auto& r : rset) {
      long rlen = static_cast<long>(r.size());
      long d_new = std::labs(rlen - hlen);
      long d_old = std::labs(best_rlen - hlen);
      if (d_new < d_old || (d_new == d_old && rlen < best_rlen)) {
        best_rlen = rlen;
      }
    }
    rep.ref_len += best_rlen;

    for (int n = 1; n <= max_n; ++n) {
      Counts hc = ngram_counts(hyp, n);
      Counts clip;
      for (const auto& r : rset) {
        Counts rc = ngram_counts(r, n);
        for (const auto& [k, c] : rc) {
          auto it = clip.find(k);
          if (it == clip.end() || it->second < c) clip[k] = c;
        }
      }
      long matched = 0, total = 0;
      for (const auto& [k, c] : hc) {
        total += c;
        auto it = clip.find(k);
        if (it != clip.end()) matched += std::min(c, it->second);
      }
      rep.match[n - 1] += matched;
      rep.total[n - 1] += total;
    }
  }

  if (rep.hyp_len == 0) {
    rep.brevity_penalty = 0.0;
  } else if (rep.hyp_len < rep.ref_len) {
    rep.brevity_penalty = std::exp(1.0 - static_cast<double>(rep.ref_len) /
                                             static_cast<double>(rep.hyp_len));
  } else {
    rep.brevity_penalty = 1.0;
  }

  for (int k = 1; k <= max_n; ++k) rep.bleu[k - 1] = rep.score(k);
  return rep;
}

}  // namespace mmt
