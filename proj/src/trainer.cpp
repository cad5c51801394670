#include "mmt/trainer.hpp"

#include <cmath>
#include <cstdio>

#include "mmt/decoder.hpp"
#include "mmt/encoder.hpp"
#include "mmt/rng.hpp"

namespace mmt {

void TrainConfig::validate() const {
  if (batch_size < 1) throw UsageError("train: batch_size must be >= 1");
  if (l2_lambda < 0) throw UsageError("train: l2_lambda must be >= 0");
  if (learning_rate <= 0) throw UsageError("train: learning_rate must be > 0");
  if (eval_every_updates < 1) {
    throw UsageError("train: eval_every_updates must be >= 1");
  }
  if (patience_evals < 1) throw UsageError("train: patience must be >= 1");
  if (beam_for_validation < 1) throw UsageError("train: beam must be >= 1");
  if (grad_clip < 0) throw UsageError("train: grad_clip must be >= 0");
}

TrainConfig TrainConfig::preset_monomodal() {
  TrainConfig c;
  c.optimizer = Optimizer::kAdadelta;
  c.init = InitScheme::kGaussian;
  c.l2_lambda = 5e-4;
  c.multimodal = false;
  return c;
}

TrainConfig TrainConfig::preset_multimodal() {
  TrainConfig c;
  c.optimizer = Optimizer::kAdam;
  c.init = InitScheme::kXavier;
  c.l2_lambda = 1e-4;
  c.multimodal = true;
  return c;
}

ModelParams init_params(const ModelDims& dims, InitScheme scheme,
                        std::uint64_t seed) {
  ModelParams p = ModelParams::zeros(dims);
  Rng rng(seed);
  p.visit([&](const char*, Mat& m, bool is_bias) {
    if (is_bias) return;
    if (scheme == InitScheme::kXavier) {
      double bound =
          std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
      for (Eigen::Index i = 0; i < m.size(); ++i) {
        m(i) = static_cast<Real>(rng.uniform(-bound, bound));
      }
    } else {
      for (Eigen::Index i = 0; i < m.size(); ++i) {
        m(i) = static_cast<Real>(0.01 * rng.normal());
      }
    }
  });
  return p;
}

double l2_penalty(const ModelParams& params) {
  double total = 0;
  params.visit([&](const char*, const Mat& m, bool is_bias) {
    if (is_bias) return;
    total += static_cast<double>(m.array().square().sum());
  });
  return total;
}

namespace {

std::vector<int> trim_row(const MatI& ids, int r, int len) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(len));
  for (int c = 0; c < len; ++c) out.push_back(ids(r, c));
  return out;
}

VarR l2_graph(TapeR& tape, const ParamVars& pv) {
  VarR total;
  visit_vars(pv, [&](const char*, VarR v, bool is_bias) {
    if (is_bias) return;
    VarR term = ad::sum(ad::cmul(v, v));
    total = total.valid() ? ad::add(total, term) : term;
  });
  (void)tape;
  return total;
}

}  // namespace

LossStats nll_loss(const ModelParams& params, const Batch& batch,
                   bool multimodal, double l2_lambda, std::vector<Mat>* grads) {
  if (batch.size() == 0) throw DataError("nll_loss: empty batch");
  TapeR tape;
  ParamVars pv = make_param_vars(tape, params);

  VarR total;
  long n_tokens = 0;
  for (int b = 0; b < batch.size(); ++b) {
    std::size_t ub = static_cast<std::size_t>(b);
    std::vector<int> src = trim_row(batch.src, b, batch.src_len[ub]);
    std::vector<int> tgt = trim_row(batch.tgt, b, batch.tgt_len[ub]);
    const Mat* feats = nullptr;
    if (multimodal) {
      if (batch.image.size() != static_cast<std::size_t>(batch.size())) {
        throw DataError("nll_loss: multimodal batch without image features");
      }
      feats = batch.image[ub];
    }
    EncoderVars enc = encode_graph(tape, pv, src, feats);
    int nt = 0;
    VarR nll = sequence_nll(tape, pv, enc, tgt, multimodal, &nt);
    total = total.valid() ? ad::add(total, nll) : nll;
    n_tokens += nt;
  }

  VarR loss = ad::scale(total, static_cast<Real>(1.0 / n_tokens));
  LossStats stats;
  stats.n_tokens = n_tokens;
  stats.nll_per_token = static_cast<double>(tape.val(loss)(0, 0));
  if (l2_lambda > 0) {
    loss = ad::add(loss,
                   ad::scale(l2_graph(tape, pv), static_cast<Real>(l2_lambda)));
  }
  stats.loss = static_cast<double>(tape.val(loss)(0, 0));
  if (!std::isfinite(stats.loss)) {
    throw NumericError("nll_loss: loss is not finite (" +
                       std::to_string(stats.loss) + ")");
  }

  if (grads) {
    tape.backward(loss);
    grads->clear();
    visit_vars(pv, [&](const char*, VarR v, bool) {
      grads->push_back(tape.grad(v));
    });
  }
  return stats;
}

double clip_gradients(std::vector<Mat>& grads, double max_norm) {
  double sq = 0;
  for (const Mat& g : grads) {
    sq += static_cast<double>(g.array().square().sum());
  }
  double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) {
    throw NumericError("gradient norm is not finite");
  }
  if (max_norm > 0 && norm > max_norm) {
    Real f = static_cast<Real>(max_norm / norm);
    for (Mat& g : grads) g *= f;
  }
  return norm;
}

namespace {

void init_slots(OptState& state, const ModelParams& params) {
  if (!state.m.empty()) return;
  params.visit([&](const char*, const Mat& m, bool) {
    state.m.push_back(Mat::Zero(m.rows(), m.cols()));
    state.v.push_back(Mat::Zero(m.rows(), m.cols()));
  });
}

void check_aligned(const ModelParams& params, const std::vector<Mat>& grads) {
  std::size_t count = 0;
  params.visit([&](const char* name, const Mat& m, bool) {
    if (count >= grads.size() || grads[count].rows() != m.rows() ||
        grads[count].cols() != m.cols()) {
      throw ShapeError(std::string("optimizer: gradient slot for ") + name +
                       " misaligned");
    }
    if (!grads[count].allFinite()) {
      throw NumericError(std::string("optimizer: non-finite gradient for ") +
                         name);
    }
    ++count;
  });
  if (count != grads.size()) {
    throw ShapeError("optimizer: gradient count mismatch");
  }
}

}  // namespace

void adam_step(ModelParams& params, const std::vector<Mat>& grads,
               OptState& state, const TrainConfig& cfg) {
  check_aligned(params, grads);
  init_slots(state, params);
  ++state.step;
  double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  double bias1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  double bias2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  std::size_t k = 0;
  params.visit([&](const char*, Mat& w, bool) {
    const Mat& g = grads[k];
    Mat& m = state.m[k];
    Mat& v = state.v[k];
    m = static_cast<Real>(b1) * m + static_cast<Real>(1 - b1) * g;
    v.array() =
        static_cast<Real>(b2) * v.array() +
        static_cast<Real>(1 - b2) * g.array().square();
    Eigen::ArrayXXd mh = m.array().template cast<double>() / bias1;
    Eigen::ArrayXXd vh = v.array().template cast<double>() / bias2;
    w.array() -= (cfg.learning_rate * mh / (vh.sqrt() + cfg.adam_eps))
                     .template cast<Real>();
    ++k;
  });
}

void adadelta_step(ModelParams& params, const std::vector<Mat>& grads,
                   OptState& state, const TrainConfig& cfg) {
  check_aligned(params, grads);
  init_slots(state, params);
  ++state.step;
  double rho = cfg.adadelta_rho, eps = cfg.adadelta_eps;
  std::size_t k = 0;
  params.visit([&](const char*, Mat& w, bool) {
    const Mat& g = grads[k];
    Mat& eg2 = state.m[k];
    Mat& edx2 = state.v[k];
    eg2.array() = static_cast<Real>(rho) * eg2.array() +
                  static_cast<Real>(1 - rho) * g.array().square();
    Eigen::ArrayXXd dx =
        -((edx2.array().template cast<double>() + eps).sqrt() /
          (eg2.array().template cast<double>() + eps).sqrt()) *
        g.array().template cast<double>();
    edx2.array() = static_cast<Real>(rho) * edx2.array() +
                   static_cast<Real>(1 - rho) * dx.square().template cast<Real>();
    w.array() += dx.template cast<Real>();
    ++k;
  });
}

namespace {

double round4(double x) { return std::round(x * 10000.0) / 10000.0; }

std::string log_line(long update, double loss, double bleu, int patience) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "update=%ld loss=%.6f val_bleu=%.4f patience=%d",
                update, loss, bleu, patience);
  return std::string(buf);
}

}  // namespace

TrainResult train_loop(const TrainConfig& cfg,
                       const std::vector<ParallelExample>& train,
                       const Validator& validate, ModelParams& model) {
  cfg.validate();
  if (train.empty()) throw DataError("train: empty training set");

  TrainResult res;
  res.best = model;
  OptState opt;
  int patience = 0;
  long updates = 0;
  double last_loss = 0;
  double last_bleu = -1.0;
  bool stop = false;

  for (std::uint64_t epoch = 0; !stop; ++epoch) {
    std::uint64_t epoch_seed = cfg.seed ^ (0x9e3779b97f4a7c15ULL * (epoch + 1));
    auto batches = make_batches(train, cfg.batch_size,
                                cfg.sort_batches_by_src_len, epoch_seed);
    for (const Batch& batch : batches) {
      std::vector<Mat> grads;
      LossStats stats =
          nll_loss(model, batch, cfg.multimodal, cfg.l2_lambda, &grads);
      clip_gradients(grads, cfg.grad_clip);
      if (cfg.optimizer == Optimizer::kAdam) {
        adam_step(model, grads, opt, cfg);
      } else {
        adadelta_step(model, grads, opt, cfg);
      }
      last_loss = stats.loss;
      ++updates;

      if (updates % cfg.eval_every_updates == 0) {
        double bleu = validate(model);
        last_bleu = bleu;
        if (round4(bleu) > round4(res.best_bleu)) {
          res.best_bleu = bleu;
          res.best = model;
          res.best_update = updates;
          res.improved_once = true;
          res.opt_at_best = opt;
          patience = 0;
        } else {
          ++patience;
        }
        res.log.push_back(log_line(updates, last_loss, bleu, patience));
        if (patience >= cfg.patience_evals) {
          res.stop_reason = "early_stop";
          stop = true;
          break;
        }
      }
      if (cfg.max_updates > 0 && updates >= cfg.max_updates) {
        res.stop_reason = "max_updates";
        stop = true;
        break;
      }
    }
  }

  res.total_updates = updates;
  if (!res.improved_once) {
    // no eval ever improved; fall back to the final state
    res.best = model;
    res.best_update = updates;
    res.opt_at_best = opt;
  }
  res.log.push_back(log_line(updates, last_loss,
                             last_bleu < 0 ? 0.0 : last_bleu, patience));
  return res;
}

}  // namespace mmt
