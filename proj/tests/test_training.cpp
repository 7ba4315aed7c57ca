#include <gtest/gtest.h>

#include <cmath>

#include "aitvit/errors.hpp"
#include "aitvit/training.hpp"
#include "test_util.hpp"

using namespace aitvit;
using namespace aitvit::training;
using aitvit::testing::random_values;

namespace {

AiTViTConfig width128() {
  auto c = AiTViTConfig::tiny();
  c.in_width = 128;
  return c;
}

std::vector<signals::LabeledFrame> frames(std::vector<std::uint8_t> classes, std::size_t per_cell,
                                          std::uint64_t seed, double snr_db = 10.0) {
  signals::DatasetSpec s;
  s.classes = std::move(classes);
  s.snr_grid_db = {snr_db};
  s.frames_per_cell = per_cell;
  s.seed = seed;
  return signals::generate_dataset(s);
}

Tensor input(const signals::LabeledFrame& f) { return signals::frame_tensor(f.iq); }

std::vector<std::vector<double>> values(const AiTViTParams& p) {
  std::vector<std::vector<double>> out;
  p.for_each([&](const std::string&, const Tensor& t) { out.emplace_back(t.data().begin(), t.data().end()); });
  return out;
}

}  // namespace

TEST(TotalLoss, CombinesFourCrossEntropies) {
  const auto m = AiTViT::initialize(width128());
  const auto data = frames({2}, 2, 1);
  const Tensor x = input(data[0]), xa = input(data[1]);
  for (double beta : {0.0, 0.1, 0.5, 1.0}) {
    const auto t = total_loss(m.config(), m.params(), x, xa, 2, beta);
    const auto oc = m.forward(x), oa = m.forward(xa);
    const double l1 = cross_entropy(oc.f1_logits, 2).item() + cross_entropy(oa.f1_logits, 2).item();
    const double l2 =
        cross_entropy(oc.f2_logits, kBenign).item() + cross_entropy(oa.f2_logits, kAdversarial).item();
    EXPECT_NEAR(t.total.item(), beta * l1 + (1.0 - beta) * l2, 1e-12);
    EXPECT_NEAR(t.loss1(), l1, 1e-12);
    EXPECT_NEAR(t.loss2(), l2, 1e-12);
  }
  EXPECT_THROW(total_loss(m.config(), m.params(), x, xa, 11, 0.5), IndexError);
  EXPECT_THROW(total_loss(m.config(), m.params(), x, Tensor::zeros({2, 64}), 0, 0.5), DimensionError);
}

TEST(TotalLoss, BetaOneCutsTheDetectorAndBetaZeroTheClassifier) {
  const auto m = AiTViT::initialize(width128());
  const auto data = frames({4}, 2, 2);
  for (double beta : {1.0, 0.0}) {
    const auto bound = m.params().bind(true);
    const auto t = total_loss(m.config(), bound, input(data[0]), input(data[1]), 4, beta);
    backward(t.total);
    const auto g = collect_grads(bound);
    const auto& silent = beta == 1.0 ? std::vector<const Tensor*>{&g.det_w1, &g.det_b1, &g.det_w2, &g.det_b2}
                                     : std::vector<const Tensor*>{&g.cls_w, &g.cls_b};
    for (const Tensor* t2 : silent)
      for (double v : t2->data()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Optimizer, SgdWorkedExample) {
  auto m = AiTViT::initialize(width128());
  AiTViTParams p = AiTViTParams::zeros_like(m.params());
  AiTViTParams g = AiTViTParams::zeros_like(m.params());
  std::vector<double> gb(g.patch_b.size(), 0.0);
  gb[0] = 1.0;
  gb[1] = -2.0;
  g.patch_b = Tensor::constant(g.patch_b.shape(), gb);
  TrainConfig c;
  c.optimizer = Optimizer::sgd;
  c.lr = 0.1;
  OptimizerState s;
  optimizer_step(p, g, s, c);
  EXPECT_NEAR(p.patch_b.at(0), -0.1, 1e-15);
  EXPECT_NEAR(p.patch_b.at(1), 0.2, 1e-15);
  for (std::size_t i = 2; i < p.patch_b.size(); ++i) EXPECT_EQ(p.patch_b.at(i), 0.0);
}

TEST(Optimizer, ZeroGradientsLeaveParametersUnchanged) {
  for (Optimizer o : {Optimizer::sgd, Optimizer::adam}) {
    auto m = AiTViT::initialize(width128());
    const auto before = m.params().checksum();
    TrainConfig c;
    c.optimizer = o;
    OptimizerState s;
    for (int k = 0; k < 3; ++k) optimizer_step(m.params(), AiTViTParams::zeros_like(m.params()), s, c);
    EXPECT_EQ(m.params().checksum(), before) << optimizer_name(o);
  }
}

TEST(Optimizer, AdamFirstStepsMatchScalarOracle) {
  auto m = AiTViT::initialize(width128());
  const auto theta0 = values(m.params());
  TrainConfig c;
  c.lr = 0.01;
  OptimizerState s;
  // Scalar Adam recurrences on two constant-gradient steps.
  const double g0 = 0.3, g1 = -0.7;
  auto grads_of = [&](double g) {
    auto gp = AiTViTParams::zeros_like(m.params());
    gp.for_each([&](const std::string&, Tensor& t) {
      t = Tensor::constant(t.shape(), std::vector<double>(t.size(), g));
    });
    return gp;
  };
  optimizer_step(m.params(), grads_of(g0), s, c);
  optimizer_step(m.params(), grads_of(g1), s, c);
  double mm = 0.0, vv = 0.0, theta = 0.0;
  int t = 0;
  for (double g : {g0, g1}) {
    ++t;
    mm = 0.9 * mm + 0.1 * g;
    vv = 0.999 * vv + 0.001 * g * g;
    theta -= 0.01 * (mm / (1.0 - std::pow(0.9, t))) / (std::sqrt(vv / (1.0 - std::pow(0.999, t))) + 1e-8);
  }
  const auto theta2 = values(m.params());
  for (std::size_t i = 0; i < theta0.size(); ++i)
    for (std::size_t j = 0; j < theta0[i].size(); ++j) EXPECT_NEAR(theta2[i][j] - theta0[i][j], theta, 1e-12);
}

TEST(Optimizer, MissingGradientsAreContractViolations) {
  auto m = AiTViT::initialize(width128());
  auto g = AiTViTParams::zeros_like(m.params());
  g.cls_b = Tensor();
  TrainConfig c;
  OptimizerState s;
  EXPECT_THROW(optimizer_step(m.params(), g, s, c), ContractError);
  g = AiTViTParams::zeros_like(m.params());
  g.cls_b = Tensor::zeros({1, 3});
  EXPECT_THROW(optimizer_step(m.params(), g, s, c), ContractError);
  EXPECT_THROW(collect_grads(m.params().bind(true)), ContractError);
}

TEST(Config, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.beta = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.lr = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.train_pnr = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(optimizer_from_name("sgd"), Optimizer::sgd);
  EXPECT_EQ(optimizer_from_name(optimizer_name(Optimizer::adam)), Optimizer::adam);
  EXPECT_THROW(optimizer_from_name("rmsprop"), ConfigError);
}

TEST(Pretrain, SingleFullBatchMatchesExternalGradientStep) {
  auto m = AiTViT::initialize(width128());
  const auto data = frames({0, 5}, 3, 3);
  // External gradient: mean over the batch of per-frame CE gradients.
  const auto before = values(m.params());
  std::vector<std::vector<double>> mean(before.size());
  for (std::size_t i = 0; i < before.size(); ++i) mean[i].assign(before[i].size(), 0.0);
  for (const auto& f : data) {
    const auto bound = m.params().bind(true);
    backward(cross_entropy(forward(m.config(), bound, input(f)).f1_logits, f.label));
    std::size_t i = 0;
    bound.for_each([&](const std::string&, const Tensor& t) {
      if (t.has_grad())
        for (std::size_t j = 0; j < t.size(); ++j) mean[i][j] += t.grad()[j] / data.size();
      ++i;
    });
  }
  TrainConfig c;
  c.epochs = 1;
  c.batch = data.size();
  c.optimizer = Optimizer::sgd;
  c.lr = 0.05;
  pretrain_nt(m, data, c);
  const auto after = values(m.params());
  for (std::size_t i = 0; i < before.size(); ++i)
    for (std::size_t j = 0; j < before[i].size(); ++j)
      EXPECT_NEAR(after[i][j], before[i][j] - 0.05 * mean[i][j], 1e-10);
}

TEST(Pretrain, DeterministicAndValidatesData) {
  const auto data = frames({1, 6}, 4, 4);
  TrainConfig c;
  c.epochs = 2;
  c.batch = 3;
  c.seed = 9;
  auto a = AiTViT::initialize(width128());
  auto b = AiTViT::initialize(width128());
  const auto la = pretrain_nt(a, data, c);
  const auto lb = pretrain_nt(b, data, c);
  EXPECT_EQ(a.params().checksum(), b.params().checksum());
  ASSERT_EQ(la.epochs.size(), 2u);
  EXPECT_EQ(la.epochs[1].loss1, lb.epochs[1].loss1);
  c.seed = 10;
  auto d = AiTViT::initialize(width128());
  pretrain_nt(d, data, c);
  EXPECT_NE(d.params().checksum(), a.params().checksum());

  EXPECT_THROW(pretrain_nt(a, {}, c), DataError);
  auto bad = data;
  bad[0].label = 11;
  EXPECT_THROW(pretrain_nt(a, bad, c), DataError);
}

TEST(Pretrain, OverfitsASmallSet) {
  auto m = AiTViT::initialize(width128());
  const auto data = frames({0, 3, 9, 10, 7}, 10, 5, 18.0);
  TrainConfig c;
  c.epochs = 150;
  c.batch = 10;
  c.lr = 3e-3;
  c.seed = 1;
  const auto log = pretrain_nt(m, data, c);
  EXPECT_LT(log.epochs.back().loss1, 0.05);
  EXPECT_LT(log.epochs.back().loss1, log.epochs.front().loss1);
  EXPECT_DOUBLE_EQ(clean_accuracy(m, data), 1.0);
}

TEST(AdversarialTrain, LogsBothLossesAndIsDeterministic) {
  const auto data = frames({2, 8}, 3, 6);
  TrainConfig c;
  c.epochs = 2;
  c.batch = 4;
  c.pgd_iters = 3;
  c.seed = 3;
  auto a = AiTViT::initialize(width128());
  auto b = AiTViT::initialize(width128());
  std::size_t calls = 0;
  const auto la = adversarial_train(a, data, c, data, [&](const EpochLog&) { ++calls; });
  adversarial_train(b, data, c, data);
  EXPECT_EQ(calls, 2u);
  EXPECT_EQ(a.params().checksum(), b.params().checksum());
  for (const auto& e : la.epochs) {
    EXPECT_GT(e.loss1, 0.0);
    EXPECT_GT(e.loss2, 0.0);
    EXPECT_GE(e.detection_rate, 0.0);
    EXPECT_LE(e.detection_rate, 1.0);
  }
  EXPECT_THROW(adversarial_train(a, {}, c), DataError);
}

TEST(AdversarialTrain, DetectorLearnsToSeparateLargePerturbations) {
  const auto data = frames({0, 3}, 20, 7);
  TrainConfig c;
  c.epochs = 12;
  c.batch = 8;
  c.beta = 0.1;
  c.train_pnr = 1.0;
  c.pgd_iters = 3;
  c.lr = 3e-3;
  c.seed = 2;
  auto m = AiTViT::initialize(width128());
  const auto log = adversarial_train(m, data, c);
  EXPECT_LT(log.epochs.back().loss2, log.epochs.front().loss2);
  EXPECT_GT(training_attack_detection_rate(m, data, c), 0.5);
}
