#pragma once

#include <optional>
#include <vector>

#include "mmt/encoder.hpp"

namespace mmt {

struct AttendVars {
  VarR alpha;                 // N x 1, zero at masked positions
  std::optional<VarR> beta;   // regions x 1
  VarR ctx;                   // 1 x annotation
};

struct StepVars {
  VarR s_prime;               // 1 x hidden, after layer 1
  AttendVars att;
  VarR s_new;                 // 1 x hidden, after layer 2
  VarR log_probs;             // 1 x tgt_vocab
};

/// Layer-1 GRU: consumes the embedding of the previous target token.
VarR gru1_step(TapeR& tape, const ParamVars& p, int y_prev, VarR s_prev);

/// Shared attention over text (and image) annotations, then the fused
/// context vector. Text scores are softmaxed over unmasked positions only;
/// image scores over all regions.
AttendVars attend(TapeR& tape, const ParamVars& p, const EncoderVars& enc,
                  VarR s_prime, bool multimodal);

/// Layer-2 GRU: context vector as input, s_prime as the recurrent state.
VarR gru2_step(TapeR& tape, const ParamVars& p, VarR ctx, VarR s_prime);

/// Deep output: log P(. | y_prev, s, ctx), reusing the target embedding row.
VarR output_logprobs(TapeR& tape, const ParamVars& p, int y_prev, VarR s,
                     VarR ctx);

/// One decoder step: gru1 -> attend -> gru2 -> output, exactly in sequence.
StepVars full_step(TapeR& tape, const ParamVars& p, const EncoderVars& enc,
                   int y_prev, VarR s_prev, bool multimodal);

/// Teacher-forced negative log-likelihood of a framed target sequence,
/// starting from enc.s0. Returns the total minus-log-prob over the
/// predicted positions; n_tokens receives their count (|framed| - 1).
VarR sequence_nll(TapeR& tape, const ParamVars& p, const EncoderVars& enc,
                  const std::vector<int>& framed_tgt, bool multimodal,
                  int* n_tokens = nullptr);

/// Stateless per-step decoder over plain matrices for search-time use.
/// Each step runs on a private throwaway tape.
class DecoderStepper {
 public:
  DecoderStepper(const ModelParams& params, EncodedMats enc, bool multimodal);

  struct Out {
    Mat log_probs;  // 1 x tgt_vocab
    Mat state;      // 1 x hidden
  };
  Out step(const Mat& s_prev, int y_prev) const;

  const Mat& init_state() const { return enc_.s0; }
  int vocab_size() const { return params_->dims.tgt_vocab; }

 private:
  const ModelParams* params_;
  EncodedMats enc_;
  bool multimodal_;
};

}  // namespace mmt
