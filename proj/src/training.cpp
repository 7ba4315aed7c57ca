#include "aitvit/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "aitvit/errors.hpp"

namespace aitvit::training {

const char* optimizer_name(Optimizer o) { return o == Optimizer::sgd ? "sgd" : "adam"; }

Optimizer optimizer_from_name(std::string_view name) {
  if (name == "sgd") return Optimizer::sgd;
  if (name == "adam") return Optimizer::adam;
  throw ConfigError("unknown optimizer '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("train: beta must lie in [0, 1]");
  if (batch < 1) throw ConfigError("train: batch must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("train: learning rate must be > 0");
  if (!(train_pnr > 0.0)) throw ConfigError("train: training pnr must be > 0");
  if (pgd_iters < 1) throw ConfigError("train: pgd_iters must be >= 1");
  if (!(pgd_step > 0.0)) throw ConfigError("train: pgd_step must be > 0");
}

LossTerms total_loss(const AiTViTConfig& config, const AiTViTParams& params, const Tensor& x,
                     const Tensor& x_adv, std::size_t y, double beta) {
  if (x.shape() != x_adv.shape())
    throw DimensionError("total_loss: x " + shape_str(x.shape()) + " and x_adv " +
                         shape_str(x_adv.shape()) + " differ");
  if (y >= config.n_classes)
    throw IndexError("total_loss: label " + std::to_string(y) + " out of range");
  const auto clean = forward(config, params, x);
  const auto adv = forward(config, params, x_adv);
  const Tensor l1c = cross_entropy(clean.f1_logits, y);
  const Tensor l1a = cross_entropy(adv.f1_logits, y);
  const Tensor l2c = cross_entropy(clean.f2_logits, kBenign);
  const Tensor l2a = cross_entropy(adv.f2_logits, kAdversarial);
  LossTerms t;
  t.f1_clean = l1c.item();
  t.f1_adv = l1a.item();
  t.f2_clean = l2c.item();
  t.f2_adv = l2a.item();
  t.total = add(scale(add(l1c, l1a), beta), scale(add(l2c, l2a), 1.0 - beta));
  return t;
}

namespace {

std::vector<Tensor*> tensor_list(AiTViTParams& p) {
  std::vector<Tensor*> out;
  p.for_each([&](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

std::vector<const Tensor*> tensor_list(const AiTViTParams& p) {
  std::vector<const Tensor*> out;
  p.for_each([&](const std::string&, const Tensor& t) { out.push_back(&t); });
  return out;
}

// Running sum of per-frame parameter gradients.
class GradAccumulator {
 public:
  explicit GradAccumulator(const AiTViTParams& like) {
    for (const Tensor* t : tensor_list(like)) sums_.emplace_back(t->size(), 0.0);
  }

  void add(const AiTViTParams& bound) {
    const auto ts = tensor_list(bound);
    for (std::size_t i = 0; i < ts.size(); ++i) {
      if (!ts[i]->has_grad()) continue;
      const auto g = ts[i]->grad();
      for (std::size_t j = 0; j < g.size(); ++j) sums_[i][j] += g[j];
    }
  }

  AiTViTParams mean(const AiTViTParams& like, std::size_t n) const {
    AiTViTParams out = like;
    auto ts = tensor_list(out);
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < ts.size(); ++i) {
      std::vector<double> v = sums_[i];
      for (double& x : v) x *= inv;
      *ts[i] = Tensor::constant(ts[i]->shape(), std::move(v));
    }
    return out;
  }

 private:
  std::vector<std::vector<double>> sums_;
};

Tensor frame_input(const AiTViTConfig& c, std::span<const double> iq) {
  if (iq.size() != c.in_rails * c.in_width)
    throw DimensionError("frame has " + std::to_string(iq.size()) + " values, model expects " +
                         std::to_string(c.in_rails * c.in_width));
  return Tensor::constant({c.in_rails, c.in_width}, std::vector<double>(iq.begin(), iq.end()));
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericalError(std::string("training diverged: non-finite ") + what);
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng = substream(seed, "shuffle", epoch);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

void check_labels(const AiTViT& model, const std::vector<signals::LabeledFrame>& data) {
  for (const auto& f : data)
    if (f.label >= model.config().n_classes)
      throw DataError("frame label " + std::to_string(f.label) + " exceeds model classes " +
                      std::to_string(model.config().n_classes));
}

EpochLog probe_metrics(const AiTViT& model, const std::vector<signals::LabeledFrame>& probe,
                       const TrainConfig& config, bool with_detection) {
  EpochLog e;
  e.detection_rate = std::numeric_limits<double>::quiet_NaN();
  if (probe.empty()) {
    e.clean_accuracy = std::numeric_limits<double>::quiet_NaN();
    return e;
  }
  e.clean_accuracy = clean_accuracy(model, probe);
  if (with_detection) e.detection_rate = training_attack_detection_rate(model, probe, config);
  return e;
}

}  // namespace

AiTViTParams collect_grads(const AiTViTParams& bound) {
  AiTViTParams out = bound;
  out.for_each([](const std::string& name, Tensor& t) {
    if (!t.has_grad()) throw ContractError("parameter '" + name + "' has no gradient");
    t = Tensor::constant(t.shape(), std::vector<double>(t.grad().begin(), t.grad().end()));
  });
  return out;
}

void optimizer_step(AiTViTParams& params, const AiTViTParams& grads, OptimizerState& state,
                    const TrainConfig& config) {
  auto ps = tensor_list(params);
  const auto gs = tensor_list(grads);
  if (ps.size() != gs.size()) throw ContractError("optimizer_step: gradient set does not match parameters");
  for (std::size_t i = 0; i < ps.size(); ++i)
    if (!gs[i]->defined() || gs[i]->shape() != ps[i]->shape())
      throw ContractError("optimizer_step: missing or mis-shaped gradient for parameter " +
                          std::to_string(i));

  const bool adam = config.optimizer == Optimizer::adam;
  if (adam && state.m.empty()) {
    for (const Tensor* p : ps) {
      state.m.emplace_back(p->size(), 0.0);
      state.v.emplace_back(p->size(), 0.0);
    }
  }
  ++state.steps;
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.steps));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.steps));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto theta = ps[i]->data();
    const auto g = gs[i]->data();
    std::vector<double> next(theta.begin(), theta.end());
    if (adam) {
      auto& m = state.m[i];
      auto& v = state.v[i];
      for (std::size_t j = 0; j < next.size(); ++j) {
        m[j] = b1 * m[j] + (1.0 - b1) * g[j];
        v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
        next[j] -= config.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps);
      }
    } else {
      for (std::size_t j = 0; j < next.size(); ++j) next[j] -= config.lr * g[j];
    }
    *ps[i] = Tensor::constant(ps[i]->shape(), std::move(next));
  }
}

double clean_accuracy(const AiTViT& model, const std::vector<signals::LabeledFrame>& frames) {
  if (frames.empty()) throw DataError("clean_accuracy: empty frame set");
  std::size_t correct = 0;
  for (const auto& f : frames) {
    const auto out = model.forward(frame_input(model.config(), f.iq));
    if (argmax(out.f1_logits.data()) == f.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(frames.size());
}

double training_attack_detection_rate(const AiTViT& model,
                                      const std::vector<signals::LabeledFrame>& frames,
                                      const TrainConfig& config) {
  if (frames.empty()) throw DataError("detection rate: empty frame set");
  std::vector<std::vector<double>> xs;
  std::vector<std::size_t> ys;
  std::vector<double> snrs;
  for (const auto& f : frames) {
    xs.emplace_back(f.iq.begin(), f.iq.end());
    ys.push_back(f.label);
    snrs.push_back(f.snr_db);
  }
  const auto batch = attacks::adaptive_training_pgd(
      model, xs, ys, snrs, {config.train_pnr, config.pgd_iters, config.pgd_step, true});
  std::size_t flagged = 0;
  for (const auto& x : batch.x_adv) {
    const auto out = model.forward(frame_input(model.config(), x));
    if (argmax(out.f2_logits.data()) == kAdversarial) ++flagged;
  }
  return static_cast<double>(flagged) / static_cast<double>(frames.size());
}

TrainLog pretrain_nt(AiTViT& model, const std::vector<signals::LabeledFrame>& data,
                     const TrainConfig& config, const std::vector<signals::LabeledFrame>& probe,
                     const EpochCallback& on_epoch) {
  config.validate();
  if (data.empty()) throw DataError("pretrain: empty dataset");
  check_labels(model, data);
  const auto& cfg = model.config();
  OptimizerState state;
  TrainLog log;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = epoch_order(data.size(), config.seed, epoch);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t end = std::min(order.size(), start + config.batch);
      GradAccumulator acc(model.params());
      for (std::size_t k = start; k < end; ++k) {
        const auto& f = data[order[k]];
        const auto bound = model.params().bind(true);
        const auto out = forward(cfg, bound, frame_input(cfg, f.iq));
        const Tensor loss = cross_entropy(out.f1_logits, f.label);
        check_finite(loss.item(), "classification loss");
        loss_sum += loss.item();
        backward(loss);
        acc.add(bound);
      }
      optimizer_step(model.params(), acc.mean(model.params(), end - start), state, config);
    }
    EpochLog e = probe_metrics(model, probe, config, false);
    e.epoch = epoch + 1;
    e.loss1 = loss_sum / static_cast<double>(data.size());
    e.loss2 = 0.0;
    log.epochs.push_back(e);
    if (on_epoch) on_epoch(e);
  }
  return log;
}

TrainLog adversarial_train(AiTViT& model, const std::vector<signals::LabeledFrame>& data,
                           const TrainConfig& config,
                           const std::vector<signals::LabeledFrame>& probe,
                           const EpochCallback& on_epoch) {
  config.validate();
  if (data.empty()) throw DataError("adversarial training: empty dataset");
  check_labels(model, data);
  const auto& cfg = model.config();
  const attacks::TrainingAttackConfig attack{config.train_pnr, config.pgd_iters, config.pgd_step, true};
  OptimizerState state;
  TrainLog log;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = epoch_order(data.size(), config.seed, epoch);
    double sum1 = 0.0, sum2 = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t end = std::min(order.size(), start + config.batch);
      std::vector<std::vector<double>> xs;
      std::vector<std::size_t> ys;
      std::vector<double> snrs;
      for (std::size_t k = start; k < end; ++k) {
        const auto& f = data[order[k]];
        xs.emplace_back(f.iq.begin(), f.iq.end());
        ys.push_back(f.label);
        snrs.push_back(f.snr_db);
      }
      const auto adv = attacks::adaptive_training_pgd(model, xs, ys, snrs, attack);

      GradAccumulator acc(model.params());
      for (std::size_t k = 0; k < xs.size(); ++k) {
        const auto bound = model.params().bind(true);
        const auto terms = total_loss(cfg, bound, frame_input(cfg, xs[k]),
                                      frame_input(cfg, adv.x_adv[k]), ys[k], config.beta);
        check_finite(terms.total.item(), "total loss");
        sum1 += terms.loss1();
        sum2 += terms.loss2();
        backward(terms.total);
        acc.add(bound);
      }
      optimizer_step(model.params(), acc.mean(model.params(), xs.size()), state, config);
    }
    EpochLog e = probe_metrics(model, probe, config, true);
    e.epoch = epoch + 1;
    e.loss1 = sum1 / static_cast<double>(data.size());
    e.loss2 = sum2 / static_cast<double>(data.size());
    log.epochs.push_back(e);
    if (on_epoch) on_epoch(e);
  }
  return log;
}

}  // namespace aitvit::training
