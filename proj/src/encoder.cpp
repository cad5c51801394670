#include "mmt/encoder.hpp"

namespace mmt {

using ad::add;
using ad::cmul;
using ad::concat_cols;
using ad::matmul;
using ad::mean_rows;
using ad::one_minus;
using ad::row;
using ad::sigmoid;
using ad::stack_rows;
using ad::tanh;

namespace {

GruVars gru_vars(TapeR& t, const GruParams& g) {
  return GruVars{t.param(g.W),  t.param(g.U),  t.param(g.b),
                 t.param(g.Wr), t.param(g.Ur), t.param(g.br),
                 t.param(g.Wz), t.param(g.Uz), t.param(g.bz)};
}

}  // namespace

ParamVars make_param_vars(TapeR& t, const ModelParams& m) {
  ParamVars p;
  p.model = &m;
  p.src_emb = t.param(m.src_emb);
  p.enc_fwd = gru_vars(t, m.enc_fwd);
  p.enc_bwd = gru_vars(t, m.enc_bwd);
  p.img_W = t.param(m.img_W);
  p.img_b = t.param(m.img_b);
  p.init_W = t.param(m.init_W);
  p.init_b = t.param(m.init_b);
  p.tgt_emb = t.param(m.tgt_emb);
  p.gru1 = gru_vars(t, m.gru1);
  p.att_U = t.param(m.att_U);
  p.att_W = t.param(m.att_W);
  p.att_Wc_txt = t.param(m.att_Wc_txt);
  p.att_Wc_img = t.param(m.att_Wc_img);
  p.gru2 = gru_vars(t, m.gru2);
  p.L_o = t.param(m.L_o);
  p.L_s = t.param(m.L_s);
  p.L_c = t.param(m.L_c);
  return p;
}

VarR gru_cell(const GruVars& p, VarR x, VarR h_prev) {
  auto r = sigmoid(add(add(matmul(x, p.Wr), matmul(h_prev, p.Ur)), p.br));
  auto z = sigmoid(add(add(matmul(x, p.Wz), matmul(h_prev, p.Uz)), p.bz));
  auto cand =
      tanh(add(add(matmul(x, p.W), cmul(r, matmul(h_prev, p.U))), p.b));
  return add(cmul(one_minus(z), cand), cmul(z, h_prev));
}

VarR encode_text_graph(TapeR& tape, const ParamVars& p,
                       const std::vector<int>& framed_src) {
  if (framed_src.empty()) {
    throw DataError("encode_text: empty source sequence");
  }
  const ModelDims& d = p.model->dims;
  for (int id : framed_src) {
    if (id < 0 || id >= d.src_vocab) {
      throw DataError("encode_text: source id " + std::to_string(id) +
                      " outside vocabulary of " + std::to_string(d.src_vocab));
    }
  }
  std::size_t n = framed_src.size();
  std::vector<VarR> emb(n);
  for (std::size_t i = 0; i < n; ++i) {
    emb[i] = row(p.src_emb, framed_src[i]);
  }

  VarR zero = tape.value(Mat::Zero(1, d.hidden));
  std::vector<VarR> fwd(n), bwd(n);
  VarR h = zero;
  for (std::size_t i = 0; i < n; ++i) {
    h = gru_cell(p.enc_fwd, emb[i], h);
    fwd[i] = h;
  }
  h = zero;
  for (std::size_t i = n; i-- > 0;) {
    h = gru_cell(p.enc_bwd, emb[i], h);
    bwd[i] = h;
  }

  std::vector<VarR> rows_out(n);
  for (std::size_t i = 0; i < n; ++i) {
    rows_out[i] = concat_cols(fwd[i], bwd[i]);
  }
  return stack_rows(rows_out);
}

VarR project_image_graph(TapeR& tape, const ParamVars& p, VarR features) {
  const ModelDims& d = p.model->dims;
  if (features.rows() != d.regions || features.cols() != d.img_dim) {
    throw DataError("project_image: features are " +
                    shape_str(features.value()) + ", expected " +
                    std::to_string(d.regions) + "x" +
                    std::to_string(d.img_dim));
  }
  (void)tape;
  return tanh(add(matmul(features, p.img_W), p.img_b));
}

VarR initial_state(TapeR& tape, const ParamVars& p, VarR h_txt) {
  (void)tape;
  return tanh(add(matmul(mean_rows(h_txt), p.init_W), p.init_b));
}

EncoderVars encode_graph(TapeR& tape, const ParamVars& p,
                         const std::vector<int>& framed_src,
                         const Mat* features, int len) {
  std::vector<int> src = framed_src;
  if (len >= 0) {
    if (static_cast<std::size_t>(len) > src.size()) {
      throw DataError("encode: length exceeds sequence");
    }
    src.resize(static_cast<std::size_t>(len));
  }
  EncoderVars enc;
  enc.h_txt = encode_text_graph(tape, p, src);
  enc.hwc_txt = matmul(enc.h_txt, p.att_Wc_txt);
  enc.src_keep.assign(src.size(), 1);
  if (features) {
    enc.h_img = project_image_graph(tape, p, tape.param(*features));
    enc.hwc_img = matmul(*enc.h_img, p.att_Wc_img);
  }
  enc.s0 = initial_state(tape, p, enc.h_txt);
  return enc;
}

EncodedMats encode(const ModelParams& params,
                   const std::vector<int>& framed_src, const Mat* features) {
  TapeR tape;
  ParamVars p = make_param_vars(tape, params);
  EncoderVars enc = encode_graph(tape, p, framed_src, features);
  EncodedMats out;
  out.h_txt = tape.val(enc.h_txt);
  out.hwc_txt = tape.val(enc.hwc_txt);
  out.s0 = tape.val(enc.s0);
  if (enc.h_img) {
    out.h_img = tape.val(*enc.h_img);
    out.hwc_img = tape.val(*enc.hwc_img);
  }
  out.src_keep = enc.src_keep;
  return out;
}

Mat encode_text(const ModelParams& params, const std::vector<int>& framed_src,
                int len) {
  TapeR tape;
  ParamVars p = make_param_vars(tape, params);
  std::vector<int> src = framed_src;
  if (len >= 0) src.resize(static_cast<std::size_t>(len));
  return tape.val(encode_text_graph(tape, p, src));
}

Mat project_image(const ModelParams& params, const Mat& features) {
  TapeR tape;
  ParamVars p = make_param_vars(tape, params);
  return tape.val(project_image_graph(tape, p, tape.param(features)));
}

}  // namespace mmt
