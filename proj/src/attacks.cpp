#include "aitvit/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "aitvit/errors.hpp"

namespace aitvit::attacks {

const char* kind_name(Kind k) {
  switch (k) {
    case Kind::fgm: return "fgm";
    case Kind::pgd: return "pgd";
    case Kind::bim: return "bim";
    case Kind::pgd_adaptive: return "pgd_adaptive";
  }
  return "?";
}

Kind kind_from_name(std::string_view name) {
  for (Kind k : {Kind::fgm, Kind::pgd, Kind::bim, Kind::pgd_adaptive})
    if (name == kind_name(k)) return k;
  throw ConfigError("unknown attack kind '" + std::string(name) + "'");
}

void AttackSpec::validate() const {
  if (kind != Kind::bim && !(pnr > 0.0)) throw ParameterError("attack: pnr must be > 0");
  if (kind == Kind::bim && !(tau >= 0.0)) throw ParameterError("attack: tau must be >= 0");
  if (!(step > 0.0)) throw ParameterError("attack: step must be > 0");
  if (max_iters < 1) throw ParameterError("attack: max_iters must be >= 1");
  if (!(loss_scale > 0.0)) throw ParameterError("attack: loss_scale must be > 0");
}

double epsilon_from_pnr(double pnr, double snr, double x0_energy) {
  if (!(pnr > 0.0)) throw ParameterError("epsilon_from_pnr: pnr must be > 0");
  if (!(snr >= 0.0)) throw ParameterError("epsilon_from_pnr: snr must be >= 0");
  if (!(x0_energy > 0.0)) throw BudgetError("epsilon_from_pnr: zero-energy frame gives a zero budget");
  return std::sqrt(pnr * x0_energy / (snr + 1.0));
}

double epsilon_from_pnr(double pnr, double snr, std::span<const double> x0) {
  double e = 0.0;
  for (double v : x0) e += v * v;
  return epsilon_from_pnr(pnr, snr, e);
}

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double l2_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

double linf_distance(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

namespace {

Tensor input_tensor(const AiTViTConfig& c, std::span<const double> x, bool requires_grad) {
  if (x.size() != c.in_rails * c.in_width)
    throw DimensionError("attack input has " + std::to_string(x.size()) + " values, model expects " +
                         std::to_string(c.in_rails * c.in_width));
  std::vector<double> v(x.begin(), x.end());
  return requires_grad ? Tensor::variable({c.in_rails, c.in_width}, std::move(v))
                       : Tensor::constant({c.in_rails, c.in_width}, std::move(v));
}

struct Verdict {
  bool fooled;
  bool evaded;
};

Verdict judge(std::span<const double> f1, std::span<const double> f2, std::size_t y) {
  return {argmax(f1) != y, argmax(f2) != kAdversarial};
}

Verdict judge_at(const AiTViT& model, std::span<const double> x, std::size_t y) {
  const auto out = model.forward(input_tensor(model.config(), x, false));
  return judge(out.f1_logits.data(), out.f2_logits.data(), y);
}

void finish(AttackResult& r, const AiTViT& model, std::span<const double> x0, std::size_t y,
            bool linf) {
  const auto v = judge_at(model, r.x_adv, y);
  r.fooled_classifier = v.fooled;
  r.evaded_detector = v.evaded;
  r.perturbation_norm = linf ? linf_distance(r.x_adv, x0) : l2_distance(r.x_adv, x0);
}

}  // namespace

LossGradient input_gradient(const AiTViT& model, std::span<const double> x, std::size_t y,
                            bool with_detector, double loss_scale) {
  const Tensor xt = input_tensor(model.config(), x, true);
  const auto out = model.forward(xt);
  Tensor loss = cross_entropy(out.f1_logits, y);
  if (with_detector) loss = add(loss, cross_entropy(out.f2_logits, kAdversarial));
  if (loss_scale != 1.0) loss = scale(loss, loss_scale);
  backward(loss);
  LossGradient g;
  g.grad.assign(xt.grad().begin(), xt.grad().end());
  g.f1_logits.assign(out.f1_logits.data().begin(), out.f1_logits.data().end());
  g.f2_logits.assign(out.f2_logits.data().begin(), out.f2_logits.data().end());
  return g;
}

std::vector<double> project_l2(std::span<const double> x_star, std::span<const double> x0,
                               double eps) {
  if (x_star.size() != x0.size()) throw DimensionError("project_l2: size mismatch");
  const double d = l2_distance(x_star, x0);
  if (d == 0.0) throw DegenerateError("project_l2: x* coincides with x0");
  std::vector<double> out(x0.size());
  const double s = eps / d;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x0[i] + s * (x_star[i] - x0[i]);
  return out;
}

AttackResult fgm(const AiTViT& model, std::span<const double> x0, std::size_t y, double snr,
                 const AttackSpec& spec) {
  spec.validate();
  AttackResult r;
  r.epsilon = epsilon_from_pnr(spec.pnr, snr, x0);
  const auto g = input_gradient(model, x0, y, spec.targets_detector, spec.loss_scale);
  const double gn = l2_norm(g.grad);
  if (gn == 0.0 || !std::isfinite(gn)) throw DegenerateError("fgm: gradient has zero or non-finite norm");
  r.x_adv.resize(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) r.x_adv[i] = x0[i] + r.epsilon * (g.grad[i] / gn);
  r.iterations = 1;
  if (spec.record_trace) r.trace.push_back(r.x_adv);
  finish(r, model, x0, y, false);
  return r;
}

namespace {

// Shared loop of the iterative attacks; `step_fn` maps (x, g) to the next iterate.
template <class StepFn>
AttackResult iterate(const AiTViT& model, std::span<const double> x0, std::size_t y,
                     const AttackSpec& spec, double budget, bool linf, StepFn&& step_fn) {
  AttackResult r;
  r.epsilon = budget;
  std::vector<double> x(x0.begin(), x0.end());
  for (std::size_t it = 0; it < spec.max_iters; ++it) {
    const auto g = input_gradient(model, x, y, spec.targets_detector, spec.loss_scale);
    if (it > 0 && spec.stop_on_success) {
      const auto v = judge(g.f1_logits, g.f2_logits, y);
      if (v.fooled && (!spec.targets_detector || v.evaded)) break;
    }
    auto next = step_fn(x, g.grad);
    if (!next) {
      r.degenerate = true;
      break;
    }
    x = std::move(*next);
    r.iterations = it + 1;
    if (spec.record_trace) r.trace.push_back(x);
  }
  r.x_adv = std::move(x);
  finish(r, model, x0, y, linf);
  return r;
}

}  // namespace

AttackResult pgd(const AiTViT& model, std::span<const double> x0, std::size_t y, double snr,
                 const AttackSpec& spec) {
  spec.validate();
  const double eps = epsilon_from_pnr(spec.pnr, snr, x0);
  return iterate(model, x0, y, spec, eps, false,
                 [&](const std::vector<double>& x, const std::vector<double>& g)
                     -> std::optional<std::vector<double>> {
                   const double gn = l2_norm(g);
                   if (!(gn > 0.0) || !std::isfinite(gn)) return std::nullopt;
                   std::vector<double> x_star(x.size());
                   for (std::size_t i = 0; i < x.size(); ++i) x_star[i] = x[i] + spec.step * g[i];
                   if (l2_distance(x_star, x0) == 0.0) return std::nullopt;
                   return project_l2(x_star, x0, eps);
                 });
}

AttackResult bim(const AiTViT& model, std::span<const double> x0, std::size_t y,
                 const AttackSpec& spec) {
  spec.validate();
  const double tau = spec.tau;
  return iterate(model, x0, y, spec, tau, true,
                 [&](const std::vector<double>& x, const std::vector<double>& g)
                     -> std::optional<std::vector<double>> {
                   bool moved = false;
                   std::vector<double> next(x.size());
                   for (std::size_t i = 0; i < x.size(); ++i) {
                     const double s = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
                     moved = moved || s != 0.0;
                     const double x_star = x[i] + spec.step * s;
                     next[i] = x0[i] + std::clamp(x_star - x0[i], -tau, tau);
                   }
                   if (!moved) return std::nullopt;
                   return next;
                 });
}

AttackResult run_attack(const AiTViT& model, std::span<const double> x0, std::size_t y,
                        double snr, const AttackSpec& spec) {
  switch (spec.kind) {
    case Kind::fgm: return fgm(model, x0, y, snr, spec);
    case Kind::bim: return bim(model, x0, y, spec);
    case Kind::pgd: return pgd(model, x0, y, snr, spec);
    case Kind::pgd_adaptive: {
      AttackSpec s = spec;
      s.stop_on_success = false;
      return pgd(model, x0, y, snr, s);
    }
  }
  throw ConfigError("unknown attack kind");
}

AdversarialBatch adaptive_training_pgd(const AiTViT& model,
                                       const std::vector<std::vector<double>>& frames,
                                       const std::vector<std::size_t>& labels,
                                       const std::vector<double>& snr_db,
                                       const TrainingAttackConfig& config) {
  if (frames.size() != labels.size() || frames.size() != snr_db.size())
    throw DimensionError("adaptive_training_pgd: frames, labels and snr_db differ in length");
  AttackSpec spec;
  spec.kind = Kind::pgd;
  spec.pnr = config.pnr;
  spec.step = config.step;
  spec.max_iters = config.iters;
  spec.stop_on_success = false;
  spec.targets_detector = config.targets_detector;

  AdversarialBatch out;
  out.x_adv.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const double snr = std::pow(10.0, snr_db[i] / 10.0);
    const double eps = epsilon_from_pnr(spec.pnr, snr, frames[i]);
    auto r = pgd(model, frames[i], labels[i], snr, spec);
    if (r.degenerate && r.iterations == 0) {
      ++out.skipped;
      out.x_adv.push_back(frames[i]);
    } else {
      out.x_adv.push_back(std::move(r.x_adv));
    }
    out.epsilon.push_back(eps);
  }
  return out;
}

}  // namespace aitvit::attacks
