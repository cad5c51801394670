#include "mmt/decoder.hpp"

namespace mmt {

using ad::add;
using ad::log_softmax;
using ad::masked_softmax;
using ad::matmul;
using ad::pick;
using ad::row;
using ad::scale;
using ad::softmax;
using ad::tanh;
using ad::transpose;

namespace {

void check_tgt_id(const ParamVars& p, int y) {
  int v = p.model->dims.tgt_vocab;
  if (y < 0 || y >= v) {
    throw DataError("decoder: target id " + std::to_string(y) +
                    " outside vocabulary of " + std::to_string(v));
  }
}

}  // namespace

VarR gru1_step(TapeR& tape, const ParamVars& p, int y_prev, VarR s_prev) {
  (void)tape;
  check_tgt_id(p, y_prev);
  return gru_cell(p.gru1, row(p.tgt_emb, y_prev), s_prev);
}

AttendVars attend(TapeR& tape, const ParamVars& p, const EncoderVars& enc,
                  VarR s_prime, bool multimodal) {
  (void)tape;
  if (multimodal && !enc.h_img) {
    throw DataError("attend: multimodal step without image annotations");
  }
  AttendVars out;
  VarR sw = matmul(s_prime, p.att_W);  // 1 x att, shared across modalities
  VarR e_txt = matmul(tanh(add(enc.hwc_txt, sw)), p.att_U);  // N x 1
  out.alpha = masked_softmax(e_txt, enc.src_keep);
  VarR ctx_pre = matmul(transpose(out.alpha), enc.h_txt);  // 1 x annotation
  if (multimodal) {
    VarR e_img = matmul(tanh(add(*enc.hwc_img, sw)), p.att_U);
    out.beta = softmax(e_img);
    ctx_pre = add(ctx_pre, matmul(transpose(*out.beta), *enc.h_img));
  }
  out.ctx = tanh(ctx_pre);
  return out;
}

VarR gru2_step(TapeR& tape, const ParamVars& p, VarR ctx, VarR s_prime) {
  (void)tape;
  return gru_cell(p.gru2, ctx, s_prime);
}

VarR output_logprobs(TapeR& tape, const ParamVars& p, int y_prev, VarR s,
                     VarR ctx) {
  (void)tape;
  check_tgt_id(p, y_prev);
  VarR emb = row(p.tgt_emb, y_prev);
  VarR inner = tanh(add(add(emb, matmul(s, p.L_s)), matmul(ctx, p.L_c)));
  return log_softmax(matmul(inner, p.L_o));
}

StepVars full_step(TapeR& tape, const ParamVars& p, const EncoderVars& enc,
                   int y_prev, VarR s_prev, bool multimodal) {
  StepVars out;
  out.s_prime = gru1_step(tape, p, y_prev, s_prev);
  out.att = attend(tape, p, enc, out.s_prime, multimodal);
  out.s_new = gru2_step(tape, p, out.att.ctx, out.s_prime);
  out.log_probs = output_logprobs(tape, p, y_prev, out.s_new, out.att.ctx);
  return out;
}

VarR sequence_nll(TapeR& tape, const ParamVars& p, const EncoderVars& enc,
                  const std::vector<int>& framed_tgt, bool multimodal,
                  int* n_tokens) {
  if (framed_tgt.size() < 2) {
    throw DataError("sequence_nll: framed target needs at least BOS and EOS");
  }
  VarR s = enc.s0;
  VarR total;
  for (std::size_t t = 1; t < framed_tgt.size(); ++t) {
    StepVars step =
        full_step(tape, p, enc, framed_tgt[t - 1], s, multimodal);
    VarR nll_t = scale(pick(step.log_probs, framed_tgt[t]), Real(-1));
    total = total.valid() ? add(total, nll_t) : nll_t;
    s = step.s_new;
  }
  if (n_tokens) *n_tokens = static_cast<int>(framed_tgt.size()) - 1;
  return total;
}

DecoderStepper::DecoderStepper(const ModelParams& params, EncodedMats enc,
                               bool multimodal)
    : params_(&params), enc_(std::move(enc)), multimodal_(multimodal) {
  if (multimodal_ && !enc_.h_img) {
    throw DataError("decoder: multimodal mode without image features");
  }
}

DecoderStepper::Out DecoderStepper::step(const Mat& s_prev, int y_prev) const {
  TapeR tape;
  ParamVars p = make_param_vars(tape, *params_);
  EncoderVars enc;
  enc.h_txt = tape.param(enc_.h_txt);
  enc.hwc_txt = tape.param(enc_.hwc_txt);
  if (enc_.h_img) {
    enc.h_img = tape.param(*enc_.h_img);
    enc.hwc_img = tape.param(*enc_.hwc_img);
  }
  enc.s0 = tape.param(enc_.s0);
  enc.src_keep = enc_.src_keep;
  StepVars sv =
      full_step(tape, p, enc, y_prev, tape.param(s_prev), multimodal_);
  return Out{tape.val(sv.log_probs), tape.val(sv.s_new)};
}

}  // namespace mmt
