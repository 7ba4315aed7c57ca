#include <gtest/gtest.h>

#include <cmath>

#include "aitvit/attacks.hpp"
#include "aitvit/errors.hpp"
#include "aitvit/signals.hpp"
#include "test_util.hpp"

using namespace aitvit;
using namespace aitvit::attacks;
using aitvit::testing::random_values;

namespace {

AiTViT small_model(std::uint64_t seed) {
  auto c = AiTViTConfig::tiny();
  c.in_width = 128;
  c.n_classes = 11;
  c.seed = seed;
  auto m = AiTViT::initialize(c);
  // Spread the weights so gradients are well away from zero.
  std::uint64_t s = seed * 977;
  m.params().for_each([&](const std::string& name, Tensor& t) {
    if (name.find("gamma") != std::string::npos) return;
    t = Tensor::constant(t.shape(), random_values(t.size(), ++s, -0.25, 0.25));
  });
  return m;
}

std::vector<double> frame(std::uint64_t seed, std::size_t label = 0) {
  Rng rng(seed);
  const auto iq = signals::add_awgn(signals::modulate(label, rng), 10.0, rng);
  return {iq.begin(), iq.end()};
}

// Gradient of l(f1, y) [+ l(f2, y_a)] at x built directly from model ops.
std::vector<double> oracle_gradient(const AiTViT& m, const std::vector<double>& x, std::size_t y,
                                    bool detector, double c = 1.0) {
  const Tensor xt = Tensor::variable({2, 128}, x);
  const auto out = forward(m.config(), m.params(), xt);
  Tensor l1 = cross_entropy(out.f1_logits, y);
  if (detector) l1 = add(l1, cross_entropy(out.f2_logits, kAdversarial));
  backward(scale(l1, c));
  return {xt.grad().begin(), xt.grad().end()};
}

double energy(const std::vector<double>& x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

}  // namespace

TEST(Epsilon, ExactArithmetic) {
  EXPECT_DOUBLE_EQ(epsilon_from_pnr(1.0, 10.0, 11.0), 1.0);
  EXPECT_NEAR(epsilon_from_pnr(0.1, 10.0, 22.0), std::sqrt(0.2), 1e-15);
  EXPECT_NEAR(epsilon_from_pnr(0.1, 10.0, 22.0), 0.44721, 1e-5);
}

TEST(Epsilon, VanishesMonotonicallyWithPnr) {
  double prev = 1e300;
  for (double pnr = 1.0; pnr > 1e-12; pnr /= 3.0) {
    const double e = epsilon_from_pnr(pnr, 3.0, 256.0);
    EXPECT_LT(e, prev);
    prev = e;
  }
  EXPECT_LT(prev, 1e-5);
}

TEST(Epsilon, Errors) {
  EXPECT_THROW(epsilon_from_pnr(0.0, 1.0, 1.0), ParameterError);
  EXPECT_THROW(epsilon_from_pnr(1.0, -0.5, 1.0), ParameterError);
  EXPECT_THROW(epsilon_from_pnr(1.0, 1.0, 0.0), BudgetError);
  const std::vector<double> zero(256, 0.0);
  EXPECT_THROW(epsilon_from_pnr(1.0, 1.0, zero), BudgetError);
}

TEST(Epsilon, SnrRatioAndMonotoneAcrossGrid) {
  EXPECT_NEAR(epsilon_from_pnr(0.05, 1.0, 256.0) / epsilon_from_pnr(0.05, 10.0, 256.0),
              std::sqrt(11.0 / 2.0), 1e-12);
  double prev = 1e300;
  for (double db : signals::full_snr_grid()) {
    const double e = epsilon_from_pnr(0.05, std::pow(10.0, db / 10.0), 256.0);
    EXPECT_LT(e, prev);
    prev = e;
  }
}

TEST(ProjectL2, FixedPointRadialScalingAndExactness) {
  const std::vector<double> x0 = {1.0, 2.0, 3.0};
  const std::vector<double> on = {1.0, 2.0, 3.5};
  const auto p = project_l2(on, x0, 0.5);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(p[i], on[i], 1e-12);
  const auto h = project_l2(std::vector<double>{1.0, 3.0, 3.0}, x0, 0.5);
  EXPECT_NEAR(h[1], 2.5, 1e-12);
  EXPECT_EQ(h[0], 1.0);
  for (int k = 0; k < 100; ++k) {
    const auto a = random_values(256, 2 * k), b = random_values(256, 2 * k + 1);
    const double eps = 0.01 + 0.05 * k;
    EXPECT_NEAR(l2_distance(project_l2(a, b, eps), b), eps, 1e-12);
  }
  EXPECT_THROW(project_l2(x0, x0, 1.0), DegenerateError);
}

TEST(Fgm, BudgetAndOracle) {
  const auto m = small_model(1);
  const auto x0 = frame(2, 3);
  AttackSpec s;
  s.kind = Kind::fgm;
  s.pnr = 0.3;
  const auto r = fgm(m, x0, 3, 10.0, s);
  const double eps = std::sqrt(0.3 * energy(x0) / 11.0);
  EXPECT_NEAR(r.epsilon, eps, 1e-15);
  EXPECT_NEAR(l2_distance(r.x_adv, x0), eps, 1e-9);
  EXPECT_EQ(r.iterations, 1u);

  const auto g = oracle_gradient(m, x0, 3, true);
  const double gn = std::sqrt(energy(g));
  for (std::size_t i = 0; i < x0.size(); ++i) EXPECT_NEAR(r.x_adv[i], x0[i] + eps * g[i] / gn, 1e-10);
}

TEST(Fgm, ClassifierOnlyVariantUsesClassifierGradient) {
  const auto m = small_model(3);
  const auto x0 = frame(4, 1);
  AttackSpec s;
  s.kind = Kind::fgm;
  s.targets_detector = false;
  const auto r = fgm(m, x0, 1, 10.0, s);
  const auto g = oracle_gradient(m, x0, 1, false);
  const double gn = std::sqrt(energy(g));
  for (std::size_t i = 0; i < x0.size(); ++i)
    EXPECT_NEAR(r.x_adv[i], x0[i] + r.epsilon * g[i] / gn, 1e-10);
}

TEST(Attacks, GradientScaleInvariance) {
  const auto m = small_model(5);
  const auto x0 = frame(6, 2);
  for (Kind k : {Kind::fgm, Kind::bim}) {
    AttackSpec s;
    s.kind = k;
    s.max_iters = 20;
    s.stop_on_success = false;
    const auto a = run_attack(m, x0, 2, 10.0, s);
    s.loss_scale = 37.5;
    const auto b = run_attack(m, x0, 2, 10.0, s);
    for (std::size_t i = 0; i < x0.size(); ++i) EXPECT_NEAR(a.x_adv[i], b.x_adv[i], 1e-12) << kind_name(k);
  }
  // PGD: the first projected step normalizes the gradient away.
  AttackSpec s;
  s.max_iters = 1;
  s.stop_on_success = false;
  const auto a = pgd(m, x0, 2, 10.0, s);
  s.loss_scale = 37.5;
  const auto b = pgd(m, x0, 2, 10.0, s);
  for (std::size_t i = 0; i < x0.size(); ++i) EXPECT_NEAR(a.x_adv[i], b.x_adv[i], 1e-10);
}

TEST(Pgd, EveryIterateOnTheSphere) {
  const auto m = small_model(7);
  const auto x0 = frame(8, 4);
  AttackSpec s;
  s.pnr = 0.5;
  s.max_iters = 40;
  s.stop_on_success = false;
  s.record_trace = true;
  s.step = 0.05;
  const auto r = pgd(m, x0, 4, 10.0, s);
  ASSERT_EQ(r.trace.size(), 40u);
  for (const auto& x : r.trace) EXPECT_NEAR(l2_distance(x, x0), r.epsilon, 1e-9);
  EXPECT_EQ(r.iterations, 40u);
}

TEST(Pgd, SingleStepOracle) {
  const auto m = small_model(9);
  const auto x0 = frame(10, 0);
  AttackSpec s;
  s.pnr = 0.2;
  s.max_iters = 1;
  s.stop_on_success = false;
  const auto r = pgd(m, x0, 0, 10.0, s);
  const auto g = oracle_gradient(m, x0, 0, true);
  std::vector<double> x_star(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) x_star[i] = x0[i] + 0.001 * g[i];
  double d = 0.0;
  for (std::size_t i = 0; i < x0.size(); ++i) d += (x_star[i] - x0[i]) * (x_star[i] - x0[i]);
  d = std::sqrt(d);
  const double eps = std::sqrt(0.2 * energy(x0) / 11.0);
  for (std::size_t i = 0; i < x0.size(); ++i)
    EXPECT_NEAR(r.x_adv[i], x0[i] + eps * (x_star[i] - x0[i]) / d, 1e-10);
}

TEST(Pgd, SecondIterateUsesGradientAtCurrentPoint) {
  const auto m = small_model(11);
  const auto x0 = frame(12, 5);
  AttackSpec s;
  s.pnr = 0.2;
  s.max_iters = 2;
  s.stop_on_success = false;
  s.record_trace = true;
  s.step = 0.1;
  const auto r = pgd(m, x0, 5, 10.0, s);
  const auto& x1 = r.trace[0];
  const auto g = oracle_gradient(m, x1, 5, true);
  std::vector<double> x_star(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) x_star[i] = x1[i] + 0.1 * g[i];
  const auto want = project_l2(x_star, x0, r.epsilon);
  for (std::size_t i = 0; i < x0.size(); ++i) EXPECT_NEAR(r.trace[1][i], want[i], 1e-10);
}

TEST(Pgd, StopConditionReverifiedIndependently) {
  const auto m = small_model(13);
  std::size_t successes = 0;
  for (std::uint64_t k = 0; k < 12; ++k) {
    const auto x0 = frame(100 + k, k % 11);
    AttackSpec s;
    s.pnr = 3.0;
    s.step = 0.05;
    s.max_iters = 60;
    const auto r = pgd(m, x0, k % 11, 10.0, s);
    const auto out = m.forward(Tensor::constant({2, 128}, r.x_adv));
    EXPECT_EQ(r.fooled_classifier, argmax(out.f1_logits.data()) != k % 11);
    EXPECT_EQ(r.evaded_detector, argmax(out.f2_logits.data()) != kAdversarial);
    if (r.succeeded()) {
      ++successes;
      EXPECT_LE(r.iterations, 60u);
    }
  }
  EXPECT_GT(successes, 0u);
}

TEST(Pgd, UnsuccessfulResultsAreFlaggedNotHidden) {
  const auto m = small_model(15);
  const auto x0 = frame(16, 2);
  AttackSpec s;
  s.pnr = 1e-8;
  s.max_iters = 5;
  // Use the model's own prediction so that a vanishing budget cannot fool it.
  const auto y = argmax(m.forward(Tensor::constant({2, 128}, x0)).f1_logits.data());
  const auto r = pgd(m, x0, y, 10.0, s);
  EXPECT_EQ(r.iterations, 5u);
  EXPECT_FALSE(r.succeeded());
  EXPECT_NEAR(l2_distance(r.x_adv, x0), r.epsilon, 1e-9);
}

TEST(Bim, LinfBudgetAndFirstStep) {
  const auto m = small_model(17);
  const auto x0 = frame(18, 7);
  AttackSpec s;
  s.kind = Kind::bim;
  s.tau = 0.01;
  s.step = 0.004;
  s.max_iters = 30;
  s.stop_on_success = false;
  s.record_trace = true;
  const auto r = bim(m, x0, 7, s);
  for (const auto& x : r.trace) EXPECT_LE(linf_distance(x, x0), 0.01 + 1e-15);
  EXPECT_NEAR(r.perturbation_norm, 0.01, 1e-12);

  s.tau = 1.0;
  s.max_iters = 1;
  const auto one = bim(m, x0, 7, s);
  const auto g = oracle_gradient(m, x0, 7, true);
  for (std::size_t i = 0; i < x0.size(); ++i) {
    const double sg = g[i] > 0 ? 1.0 : (g[i] < 0 ? -1.0 : 0.0);
    EXPECT_EQ(one.x_adv[i], x0[i] + (x0[i] + 0.004 * sg - x0[i]));
  }
}

TEST(Bim, ZeroTauIsNullAttack) {
  const auto m = small_model(19);
  const auto x0 = frame(20, 1);
  AttackSpec s;
  s.kind = Kind::bim;
  s.tau = 0.0;
  s.max_iters = 5;
  const auto r = bim(m, x0, 1, s);
  for (std::size_t i = 0; i < x0.size(); ++i) EXPECT_EQ(r.x_adv[i], x0[i]);
  EXPECT_EQ(r.perturbation_norm, 0.0);
}

TEST(Attacks, ParametersUntouched) {
  const auto m = small_model(21);
  const auto before = m.params().checksum();
  const auto x0 = frame(22, 3);
  for (Kind k : {Kind::fgm, Kind::pgd, Kind::bim, Kind::pgd_adaptive}) {
    AttackSpec s;
    s.kind = k;
    s.max_iters = 5;
    run_attack(m, x0, 3, 10.0, s);
  }
  EXPECT_EQ(m.params().checksum(), before);
}

TEST(Attacks, SpecValidationAndNames) {
  AttackSpec s;
  s.pnr = 0.0;
  EXPECT_THROW(s.validate(), ParameterError);
  s = AttackSpec{};
  s.max_iters = 0;
  EXPECT_THROW(s.validate(), ParameterError);
  s = AttackSpec{};
  s.kind = Kind::bim;
  s.tau = -1.0;
  EXPECT_THROW(s.validate(), ParameterError);
  for (Kind k : {Kind::fgm, Kind::pgd, Kind::bim, Kind::pgd_adaptive})
    EXPECT_EQ(kind_from_name(kind_name(k)), k);
  EXPECT_THROW(kind_from_name("cw"), ConfigError);
}

TEST(Attacks, ZeroGradientIsDegenerate) {
  auto c = AiTViTConfig::tiny();
  c.in_width = 128;
  auto m = AiTViT::initialize(c);
  m.params().patch_w = Tensor::zeros(m.params().patch_w.shape());
  const auto x0 = frame(23, 0);
  AttackSpec s;
  s.kind = Kind::fgm;
  EXPECT_THROW(fgm(m, x0, 0, 10.0, s), DegenerateError);
  s.kind = Kind::pgd;
  const auto r = pgd(m, x0, 0, 10.0, s);
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.iterations, 0u);
}

TEST(AdaptivePgd, RunsAllIterationsAtPerFrameBudget) {
  const auto m = small_model(25);
  std::vector<std::vector<double>> frames;
  std::vector<std::size_t> labels;
  std::vector<double> snr;
  for (std::size_t k = 0; k < 6; ++k) {
    frames.push_back(frame(30 + k, k));
    labels.push_back(k);
    snr.push_back(-20.0 + 7.0 * k);
  }
  const auto b = adaptive_training_pgd(m, frames, labels, snr, {});
  ASSERT_EQ(b.x_adv.size(), 6u);
  EXPECT_EQ(b.skipped, 0u);
  for (std::size_t k = 0; k < 6; ++k) {
    const double eps = std::sqrt(0.05 * energy(frames[k]) / (std::pow(10.0, snr[k] / 10.0) + 1.0));
    EXPECT_NEAR(b.epsilon[k], eps, 1e-12);
    EXPECT_NEAR(l2_distance(b.x_adv[k], frames[k]), eps, 1e-9);
  }
  EXPECT_THROW(adaptive_training_pgd(m, frames, labels, {1.0}, {}), DimensionError);
}
