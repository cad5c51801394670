#pragma once

#include <optional>
#include <vector>

#include "mmt/params.hpp"
#include "mmt/tape.hpp"
#include "mmt/types.hpp"

namespace mmt {

using TapeR = ad::Tape<Real>;
using VarR = ad::Var<Real>;

struct GruVars {
  VarR W, U, b, Wr, Ur, br, Wz, Uz, bz;
};

/// Tape handles for every model parameter (leaves by reference; the
/// ModelParams must outlive the tape).
struct ParamVars {
  const ModelParams* model = nullptr;
  VarR src_emb;
  GruVars enc_fwd, enc_bwd;
  VarR img_W, img_b, init_W, init_b;
  VarR tgt_emb;
  GruVars gru1, gru2;
  VarR att_U, att_W, att_Wc_txt, att_Wc_img;
  VarR L_o, L_s, L_c;
};

ParamVars make_param_vars(TapeR& tape, const ModelParams& params);

/// Visit parameter vars as f(name, var, is_bias), in the exact order of
/// ModelParams::visit.
template <typename F>
void visit_vars(const ParamVars& p, F&& f) {
  auto gru = [&](const char* prefix, const GruVars& g) {
    std::string s(prefix);
    f((s + ".W").c_str(), g.W, false);
    f((s + ".U").c_str(), g.U, false);
    f((s + ".b").c_str(), g.b, true);
    f((s + ".Wr").c_str(), g.Wr, false);
    f((s + ".Ur").c_str(), g.Ur, false);
    f((s + ".br").c_str(), g.br, true);
    f((s + ".Wz").c_str(), g.Wz, false);
    f((s + ".Uz").c_str(), g.Uz, false);
    f((s + ".bz").c_str(), g.bz, true);
  };
  f("enc.E_src", p.src_emb, false);
  gru("enc.fwd", p.enc_fwd);
  gru("enc.bwd", p.enc_bwd);
  f("enc.img.W", p.img_W, false);
  f("enc.img.b", p.img_b, true);
  f("dec.init.W", p.init_W, false);
  f("dec.init.b", p.init_b, true);
  f("dec.E", p.tgt_emb, false);
  gru("dec.gru1", p.gru1);
  f("att.U_att", p.att_U, false);
  f("att.W_att", p.att_W, false);
  f("att.W_catt_txt", p.att_Wc_txt, false);
  f("att.W_catt_img", p.att_Wc_img, false);
  gru("dec.gru2", p.gru2);
  f("out.L_o", p.L_o, false);
  f("out.L_s", p.L_s, false);
  f("out.L_c", p.L_c, false);
}

/// One GRU step: r/z gates, candidate, convex blend with the previous state.
/// x is 1 x d_in, h_prev is 1 x hidden.
VarR gru_cell(const GruVars& p, VarR x, VarR h_prev);

/// Everything the attention consumes, plus the initial decoder state.
/// hwc_* caches annotation x W_catt products shared by all decoder steps.
struct EncoderVars {
  VarR h_txt;                  // N x annotation
  VarR hwc_txt;                // N x att
  std::optional<VarR> h_img;   // regions x annotation
  std::optional<VarR> hwc_img; // regions x att
  VarR s0;                     // 1 x hidden
  std::vector<std::uint8_t> src_keep;  // text attention mask, size N
};

/// Bidirectional text annotations for a framed source sequence: per-position
/// forward and backward GRU states concatenated into N x 2*hidden.
VarR encode_text_graph(TapeR& tape, const ParamVars& p,
                       const std::vector<int>& framed_src);

/// tanh-bounded affine bridge from raw region features into annotation space.
VarR project_image_graph(TapeR& tape, const ParamVars& p, VarR features);

/// s0 = tanh(mean of text annotations * W + b).
VarR initial_state(TapeR& tape, const ParamVars& p, VarR h_txt);

/// Full encode of one example. `features` may be null in text-only mode.
/// When `len` is nonnegative only the first len positions of framed_src are
/// used, so PAD tail entries cannot influence the result.
EncoderVars encode_graph(TapeR& tape, const ParamVars& p,
                         const std::vector<int>& framed_src,
                         const Mat* features, int len = -1);

/// Plain-value encoder outputs for inference and tests.
struct EncodedMats {
  Mat h_txt, hwc_txt, s0;
  std::optional<Mat> h_img, hwc_img;
  std::vector<std::uint8_t> src_keep;
};

EncodedMats encode(const ModelParams& params, const std::vector<int>& framed_src,
                   const Mat* features = nullptr);

/// Text annotations only (N x 2*hidden); `len` as in encode_graph.
Mat encode_text(const ModelParams& params, const std::vector<int>& framed_src,
                int len = -1);

/// Image annotations only (regions x 2*hidden).
Mat project_image(const ModelParams& params, const Mat& features);

}  // namespace mmt
