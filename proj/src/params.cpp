#include "mmt/params.hpp"

namespace mmt {

void ModelDims::validate() const {
  auto pos = [](int v, const char* name) {
    if (v < 1) {
      throw DataError(std::string("model dims: ") + name +
                      " must be positive, got " + std::to_string(v));
    }
  };
  pos(src_vocab, "src_vocab");
  pos(tgt_vocab, "tgt_vocab");
  pos(embed, "embed");
  pos(hidden, "hidden");
  pos(att, "att");
  pos(img_dim, "img_dim");
  pos(regions, "regions");
}

namespace {

GruParams gru_zeros(int in_dim, int hidden) {
  GruParams g;
  g.W = Mat::Zero(in_dim, hidden);
  g.U = Mat::Zero(hidden, hidden);
  g.b = Mat::Zero(1, hidden);
  g.Wr = Mat::Zero(in_dim, hidden);
  g.Ur = Mat::Zero(hidden, hidden);
  g.br = Mat::Zero(1, hidden);
  g.Wz = Mat::Zero(in_dim, hidden);
  g.Uz = Mat::Zero(hidden, hidden);
  g.bz = Mat::Zero(1, hidden);
  return g;
}

}  // namespace

ModelParams ModelParams::zeros(const ModelDims& dims) {
  dims.validate();
  ModelParams p;
  p.dims = dims;
  int ann = dims.annotation();
  p.src_emb = Mat::Zero(dims.src_vocab, dims.embed);
  p.enc_fwd = gru_zeros(dims.embed, dims.hidden);
  p.enc_bwd = gru_zeros(dims.embed, dims.hidden);
  p.img_W = Mat::Zero(dims.img_dim, ann);
  p.img_b = Mat::Zero(1, ann);
  p.init_W = Mat::Zero(ann, dims.hidden);
  p.init_b = Mat::Zero(1, dims.hidden);
  p.tgt_emb = Mat::Zero(dims.tgt_vocab, dims.embed);
  p.gru1 = gru_zeros(dims.embed, dims.hidden);
  p.att_U = Mat::Zero(dims.att, 1);
  p.att_W = Mat::Zero(dims.hidden, dims.att);
  p.att_Wc_txt = Mat::Zero(ann, dims.att);
  p.att_Wc_img = Mat::Zero(ann, dims.att);
  p.gru2 = gru_zeros(ann, dims.hidden);
  p.L_o = Mat::Zero(dims.embed, dims.tgt_vocab);
  p.L_s = Mat::Zero(dims.hidden, dims.embed);
  p.L_c = Mat::Zero(ann, dims.embed);
  return p;
}

}  // namespace mmt
