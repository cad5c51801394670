#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mmt/params.hpp"
#include "mmt/text.hpp"

namespace mmt {

enum class Optimizer { kAdam, kAdadelta };
enum class InitScheme { kXavier, kGaussian };

struct TrainConfig {
  Optimizer optimizer = Optimizer::kAdam;
  InitScheme init = InitScheme::kXavier;
  bool multimodal = false;
  int batch_size = 32;
  double l2_lambda = 1e-4;
  double learning_rate = 4e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double adadelta_rho = 0.95;
  double adadelta_eps = 1e-6;
  double grad_clip = 5.0;  // global-norm clip, 0 disables
  int eval_every_updates = 1000;
  int patience_evals = 20;
  int beam_for_validation = 12;
  long max_updates = 0;  // 0 = no cap
  bool sort_batches_by_src_len = false;
  std::uint64_t seed = 1;

  void validate() const;

  /// Text-only preset: Adadelta, N(0, 0.01) init, lambda 5e-4.
  static TrainConfig preset_monomodal();
  /// Multimodal preset (also the text-default for smaller corpora):
  /// Adam, Xavier init, lambda 1e-4.
  static TrainConfig preset_multimodal();
};

/// Xavier: uniform in +-sqrt(6 / (fan_in + fan_out)) per matrix.
/// Gaussian: i.i.d. N(0, std 0.01). Biases are zero either way.
/// Deterministic for a fixed seed.
ModelParams init_params(const ModelDims& dims, InitScheme scheme,
                        std::uint64_t seed);

/// Sum of squared entries over weight matrices (biases excluded).
double l2_penalty(const ModelParams& params);

struct LossStats {
  double loss = 0;            // optimized objective, L2 included
  double nll_per_token = 0;   // data term alone
  long n_tokens = 0;
};

/// Teacher-forced batch objective: mean over real target tokens of
/// -log P(y_t | y_<t, x), plus lambda * l2_penalty. When `grads` is given
/// it is filled with d(loss)/d(param) in visit order.
LossStats nll_loss(const ModelParams& params, const Batch& batch,
                   bool multimodal, double l2_lambda,
                   std::vector<Mat>* grads = nullptr);

/// Per-parameter optimizer slots, aligned with visit order.
struct OptState {
  long step = 0;
  std::vector<Mat> m;  // adam first moment / adadelta E[g^2]
  std::vector<Mat> v;  // adam second moment / adadelta E[dx^2]
};

/// Global-norm gradient clipping; returns the pre-clip norm.
double clip_gradients(std::vector<Mat>& grads, double max_norm);

void adam_step(ModelParams& params, const std::vector<Mat>& grads,
               OptState& state, const TrainConfig& cfg);
void adadelta_step(ModelParams& params, const std::vector<Mat>& grads,
                   OptState& state, const TrainConfig& cfg);

/// Scores the current model on the validation split (corpus BLEU).
using Validator = std::function<double(const ModelParams&)>;

struct TrainResult {
  ModelParams best;        // checkpoint with the highest validation BLEU
  double best_bleu = 0;
  long best_update = 0;
  bool improved_once = false;
  long total_updates = 0;
  std::vector<std::string> log;  // "update=N loss=X val_bleu=Y patience=K"
  std::string stop_reason;       // "early_stop" or "max_updates"
  OptState opt_at_best;
};

/// Epoch loop with periodic validation and patience-based early stopping.
/// Improvement means strictly higher BLEU at 4 decimal places; ties do not
/// reset patience. `model` is updated in place and holds the final state
/// even if an exception interrupts training.
TrainResult train_loop(const TrainConfig& cfg,
                       const std::vector<ParallelExample>& train,
                       const Validator& validate, ModelParams& model);

}  // namespace mmt
