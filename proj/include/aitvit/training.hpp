#pragma once

#include <cstdint>
#include <functional>
#include <string_view>
#include <vector>

#include "aitvit/attacks.hpp"
#include "aitvit/model.hpp"
#include "aitvit/signals.hpp"

namespace aitvit::training {

enum class Optimizer { sgd, adam };

const char* optimizer_name(Optimizer o);
Optimizer optimizer_from_name(std::string_view name);

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch = 64;
  double lr = 1e-3;
  double beta = 0.1;  // weight of the classification loss; 1 - beta on detection
  Optimizer optimizer = Optimizer::adam;
  double train_pnr = 0.05;  // linear
  std::size_t pgd_iters = 10;
  double pgd_step = 0.001;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss1 = 0.0;  // mean classification loss
  double loss2 = 0.0;  // mean detection loss (0 for normal training)
  double clean_accuracy = 0.0;
  double detection_rate = 0.0;  // NaN when no probe set was given
};

struct TrainLog {
  std::vector<EpochLog> epochs;
};

struct LossTerms {
  Tensor total;
  double f1_clean = 0.0, f1_adv = 0.0;  // classification CE terms
  double f2_clean = 0.0, f2_adv = 0.0;  // detection CE terms
  double loss1() const { return f1_clean + f1_adv; }
  double loss2() const { return f2_clean + f2_adv; }
};

// beta * [l(f1(x),y) + l(f1(x_adv),y)] + (1-beta) * [l(f2(x),y_b) + l(f2(x_adv),y_a)]
LossTerms total_loss(const AiTViTConfig& config, const AiTViTParams& params, const Tensor& x,
                     const Tensor& x_adv, std::size_t y, double beta);

struct OptimizerState {
  std::size_t steps = 0;
  std::vector<std::vector<double>> m, v;
};

// Replaces each parameter tensor with its updated value. `grads` must be a
// defined tensor of matching shape for every parameter.
void optimizer_step(AiTViTParams& params, const AiTViTParams& grads, OptimizerState& state,
                    const TrainConfig& config);

// Per-parameter gradients of loss over a graph built from `bound`.
AiTViTParams collect_grads(const AiTViTParams& bound);

using EpochCallback = std::function<void(const EpochLog&)>;

// Minimizes l(f1(x), y) only.
TrainLog pretrain_nt(AiTViT& model, const std::vector<signals::LabeledFrame>& data,
                     const TrainConfig& config,
                     const std::vector<signals::LabeledFrame>& probe = {},
                     const EpochCallback& on_epoch = {});

// Mini-batch loop of clean + adaptive-PGD adversarial frames under total_loss.
TrainLog adversarial_train(AiTViT& model, const std::vector<signals::LabeledFrame>& data,
                           const TrainConfig& config,
                           const std::vector<signals::LabeledFrame>& probe = {},
                           const EpochCallback& on_epoch = {});

// Probe metrics: clean classification accuracy and the fraction of
// training-style PGD examples flagged by the detector.
double clean_accuracy(const AiTViT& model, const std::vector<signals::LabeledFrame>& frames);
double training_attack_detection_rate(const AiTViT& model,
                                      const std::vector<signals::LabeledFrame>& frames,
                                      const TrainConfig& config);

}  // namespace aitvit::training
