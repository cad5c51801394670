#pragma once

#include <string>

#include "mmt/types.hpp"

namespace mmt {

/// Model geometry. Annotation dim is 2*hidden (forward+backward encoder
/// states). Image defaults assume 14x14x1024 ResNet-50 res4f_relu feature
/// maps: 196 regions of 1024 channels.
struct ModelDims {
  int src_vocab = 0;
  int tgt_vocab = 0;
  int embed = 620;
  int hidden = 1000;
  int att = 1000;
  int img_dim = 1024;
  int regions = 196;

  int annotation() const { return 2 * hidden; }
  void validate() const;
};

/// One GRU cell's weights. In the row-vector convention used throughout,
/// input maps are d_in x hidden and recurrent maps hidden x hidden; biases
/// are 1 x hidden rows.
struct GruParams {
  Mat W, U, b;     // candidate
  Mat Wr, Ur, br;  // reset gate
  Mat Wz, Uz, bz;  // update gate
};

/// Every learnable tensor of the model. Image-branch parameters are always
/// allocated so a checkpoint's layout does not depend on the training mode.
struct ModelParams {
  ModelDims dims;

  Mat src_emb;                 // src_vocab x embed
  GruParams enc_fwd, enc_bwd;  // encoder directions
  Mat img_W, img_b;            // img_dim x annotation, 1 x annotation
  Mat init_W, init_b;          // annotation x hidden, 1 x hidden
  Mat tgt_emb;                 // tgt_vocab x embed
  GruParams gru1;              // decoder layer 1, input = embed
  Mat att_U;                   // att x 1
  Mat att_W;                   // hidden x att
  Mat att_Wc_txt, att_Wc_img;  // annotation x att
  GruParams gru2;              // decoder layer 2, input = annotation
  Mat L_o;                     // embed x tgt_vocab
  Mat L_s;                     // hidden x embed
  Mat L_c;                     // annotation x embed

  static ModelParams zeros(const ModelDims& dims);

  /// Visit tensors in a fixed order: f(name, mat, is_bias). The order
  /// defines the checkpoint layout and the optimizer slot order.
  template <typename F>
  void visit(F&& f) {
    const_cast<const ModelParams*>(this)->visit(
        [&](const char* n, const Mat& m, bool b) {
          f(n, const_cast<Mat&>(m), b);
        });
  }

  template <typename F>
  void visit(F&& f) const {
    auto gru = [&](const char* prefix, const GruParams& g) {
      std::string p(prefix);
      f((p + ".W").c_str(), g.W, false);
      f((p + ".U").c_str(), g.U, false);
      f((p + ".b").c_str(), g.b, true);
      f((p + ".Wr").c_str(), g.Wr, false);
      f((p + ".Ur").c_str(), g.Ur, false);
      f((p + ".br").c_str(), g.br, true);
      f((p + ".Wz").c_str(), g.Wz, false);
      f((p + ".Uz").c_str(), g.Uz, false);
      f((p + ".bz").c_str(), g.bz, true);
    };
    f("enc.E_src", src_emb, false);
    gru("enc.fwd", enc_fwd);
    gru("enc.bwd", enc_bwd);
    f("enc.img.W", img_W, false);
    f("enc.img.b", img_b, true);
    f("dec.init.W", init_W, false);
    f("dec.init.b", init_b, true);
    f("dec.E", tgt_emb, false);
    gru("dec.gru1", gru1);
    f("att.U_att", att_U, false);
    f("att.W_att", att_W, false);
    f("att.W_catt_txt", att_Wc_txt, false);
    f("att.W_catt_img", att_Wc_img, false);
    gru("dec.gru2", gru2);
    f("out.L_o", L_o, false);
    f("out.L_s", L_s, false);
    f("out.L_c", L_c, false);
  }
};

}  // namespace mmt
