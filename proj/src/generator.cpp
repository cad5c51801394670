#include "mmt/generator.hpp"

#include <fstream>

#include "mmt/bleu.hpp"

namespace mmt {

Hypothesis decode_example(const ModelParams& params,
                          const std::vector<int>& framed_src, const Mat* feats,
                          bool multimodal, int beam, int max_len) {
  EncodedMats enc = encode(params, framed_src, multimodal ? feats : nullptr);
  DecoderStepper stepper(params, std::move(enc), multimodal);
  if (beam == 1) return greedy_decode(stepper, max_len);
  return beam_search(stepper, beam, max_len);
}

std::vector<std::string> hyp_tokens(const Hypothesis& h,
                                    const Vocabulary& tgt_vocab) {
  std::vector<std::string> out;
  for (std::size_t i = 1; i < h.tokens.size(); ++i) {
    if (i + 1 == h.tokens.size() && h.tokens[i] == Vocabulary::kEos) break;
    out.push_back(tgt_vocab.token(h.tokens[i]));
  }
  return out;
}

bool has_unk(const Hypothesis& h) {
  for (std::size_t i = 1; i < h.tokens.size(); ++i) {
    if (h.tokens[i] == Vocabulary::kUnk) return true;
  }
  return false;
}

std::size_t select_preferred(const std::vector<Candidate>& candidates) {
  if (candidates.empty()) throw DataError("multisource: no candidates");
  std::size_t best = candidates.size();
  bool best_unk_free = false;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    bool unk_free = !candidates[i].contains_unk;
    if (best == candidates.size()) {
      best = i;
      best_unk_free = unk_free;
      continue;
    }
    if (unk_free != best_unk_free) {
      if (unk_free) {
        best = i;
        best_unk_free = true;
      }
      continue;
    }
    if (candidates[i].log_prob > candidates[best].log_prob) best = i;
  }
  return best;
}

namespace {

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

std::vector<Mat> load_aligned_features(const std::string& path,
                                       const ModelDims& dims,
                                       std::size_t n_lines,
                                       const char* what) {
  FeatureFile f = read_features(path, static_cast<std::size_t>(dims.regions),
                                static_cast<std::size_t>(dims.img_dim));
  if (f.examples.size() != n_lines) {
    throw DataError(std::string(what) + ": " + std::to_string(n_lines) +
                    " lines but " + std::to_string(f.examples.size()) +
                    " feature records in " + path);
  }
  return std::move(f.examples);
}

double rank_value(const TranslateOptions& opts, const Hypothesis& h) {
  if (!opts.length_normalize) return h.log_prob;
  std::size_t emitted = h.tokens.size() - 1;  // BOS excluded
  return h.log_prob / static_cast<double>(std::max<std::size_t>(emitted, 1));
}

}  // namespace

void translate_file(const ModelParams& params, const Vocabulary& src_vocab,
                    const Vocabulary& tgt_vocab, const std::string& src_path,
                    const std::optional<std::string>& feature_path,
                    const std::string& out_path,
                    const std::optional<std::string>& metadata_path,
                    const TranslateOptions& opts) {
  std::vector<std::string> lines = read_lines(src_path);
  std::vector<Mat> feats;
  if (opts.multimodal) {
    if (!feature_path) {
      throw DataError("translate: multimodal mode needs a feature file");
    }
    feats = load_aligned_features(*feature_path, params.dims, lines.size(),
                                  "translate");
  }

  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw DataError("cannot write " + out_path);
  std::ofstream meta;
  if (metadata_path) {
    meta.open(*metadata_path, std::ios::binary);
    if (!meta) throw DataError("cannot write " + *metadata_path);
    meta << "log_prob\tunk\tfinished\n";
  }

  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::vector<int> src = frame(src_vocab.encode(normalize_tokenize(lines[i])));
    Hypothesis h = decode_example(params, src,
                                  opts.multimodal ? &feats[i] : nullptr,
                                  opts.multimodal, opts.beam, opts.max_len);
    out << join(hyp_tokens(h, tgt_vocab)) << '\n';
    if (metadata_path) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.6f", h.log_prob);
      meta << buf << '\t' << (has_unk(h) ? 1 : 0) << '\t'
           << (h.finished ? 1 : 0) << '\n';
    }
  }
}

void multisource_file(const ModelParams& params, const Vocabulary& src_vocab,
                      const Vocabulary& tgt_vocab, const std::string& src_path,
                      const std::string& feature_path,
                      const std::string& out_path, int group_size,
                      const TranslateOptions& opts) {
  if (group_size < 1) throw UsageError("multisource: group_size must be >= 1");
  std::vector<std::string> lines = read_lines(src_path);
  if (lines.size() % static_cast<std::size_t>(group_size) != 0) {
    throw DataError("multisource: " + std::to_string(lines.size()) +
                    " source lines are not a multiple of group size " +
                    std::to_string(group_size));
  }
  std::size_t n_images = lines.size() / static_cast<std::size_t>(group_size);
  std::vector<Mat> feats;
  if (opts.multimodal) {
    feats = load_aligned_features(feature_path, params.dims, n_images,
                                  "multisource");
  }

  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw DataError("cannot write " + out_path);

  for (std::size_t img = 0; img < n_images; ++img) {
    std::vector<Candidate> cands;
    for (int k = 0; k < group_size; ++k) {
      const std::string& line =
          lines[img * static_cast<std::size_t>(group_size) +
                static_cast<std::size_t>(k)];
      std::vector<int> src = frame(src_vocab.encode(normalize_tokenize(line)));
      Hypothesis h = decode_example(params, src,
                                    opts.multimodal ? &feats[img] : nullptr,
                                    opts.multimodal, opts.beam, opts.max_len);
      Candidate c;
      c.tokens = hyp_tokens(h, tgt_vocab);
      c.log_prob = rank_value(opts, h);
      c.contains_unk = has_unk(h);
      c.finished = h.finished;
      cands.push_back(std::move(c));
    }
    out << join(cands[select_preferred(cands)].tokens) << '\n';
  }
}

double validation_bleu(const ModelParams& params,
                       const std::vector<ParallelExample>& valid,
                       const Vocabulary& tgt_vocab, int beam, int max_len,
                       bool multimodal) {
  if (valid.empty()) throw DataError("validation: empty split");
  std::vector<std::vector<std::string>> hyps;
  std::vector<std::vector<std::vector<std::string>>> refs;
  for (const ParallelExample& ex : valid) {
    Hypothesis h = decode_example(params, ex.src, ex.image, multimodal, beam,
                                  max_len);
    hyps.push_back(hyp_tokens(h, tgt_vocab));
    std::vector<int> content(ex.tgt.begin() + 1, ex.tgt.end() - 1);
    refs.push_back({tgt_vocab.decode(content)});
  }
  return corpus_bleu(hyps, refs).bleu[3];
}

}  // namespace mmt
