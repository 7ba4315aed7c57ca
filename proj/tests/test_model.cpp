#include <gtest/gtest.h>

#include <cmath>

#include "aitvit/errors.hpp"
#include "aitvit/model.hpp"
#include "test_util.hpp"

using namespace aitvit;
using aitvit::testing::random_values;

namespace {

using Mat = std::vector<std::vector<double>>;

Mat to_mat(const Tensor& t) {
  Mat m(t.dim(0), std::vector<double>(t.dim(1)));
  for (std::size_t r = 0; r < t.dim(0); ++r)
    for (std::size_t c = 0; c < t.dim(1); ++c) m[r][c] = t.at(r, c);
  return m;
}

Mat mm(const Mat& a, const Mat& b) {
  Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

Mat affine(const Mat& x, const Tensor& w, const Tensor& b) {
  Mat y = mm(x, to_mat(w));
  for (auto& row : y)
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += b.at(j);
  return y;
}

Mat ln(const Mat& x, const Tensor& g, const Tensor& b) {
  Mat y = x;
  for (auto& row : y) {
    double mean = 0.0, var = 0.0;
    for (double v : row) mean += v;
    mean /= row.size();
    for (double v : row) var += (v - mean) * (v - mean);
    var /= row.size();
    for (std::size_t j = 0; j < row.size(); ++j)
      row[j] = (row[j] - mean) / std::sqrt(var + 1e-5) * g.at(j) + b.at(j);
  }
  return y;
}

Mat gelu_m(Mat x) {
  for (auto& row : x)
    for (double& v : row) v = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
  return x;
}

Mat plus(Mat a, const Mat& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) a[i][j] += b[i][j];
  return a;
}

// Eqs. 3-5 with explicit per-head loops.
Mat mha_oracle(const AiTViTConfig& c, const EncoderLayerParams& l, const Mat& z) {
  const Mat q = affine(z, l.w_q, l.b_q), k = affine(z, l.w_k, l.b_k), v = affine(z, l.w_v, l.b_v);
  const std::size_t t = z.size(), dk = c.d_k();
  Mat cat(t, std::vector<double>(c.n_c, 0.0));
  for (std::size_t h = 0; h < c.n_heads; ++h)
    for (std::size_t i = 0; i < t; ++i) {
      std::vector<double> s(t);
      double mx = -1e300;
      for (std::size_t j = 0; j < t; ++j) {
        double d = 0.0;
        for (std::size_t e = 0; e < dk; ++e) d += q[i][h * dk + e] * k[j][h * dk + e];
        s[j] = d / std::sqrt(static_cast<double>(dk));
        mx = std::max(mx, s[j]);
      }
      double total = 0.0;
      for (double& x : s) total += (x = std::exp(x - mx));
      for (std::size_t j = 0; j < t; ++j)
        for (std::size_t e = 0; e < dk; ++e) cat[i][h * dk + e] += s[j] / total * v[j][h * dk + e];
    }
  return affine(cat, l.w_o, l.b_o);
}

AiTViTParams random_params(const AiTViTConfig& c, std::uint64_t seed, double spread = 0.3) {
  Rng rng(seed);
  AiTViTParams p = init_params(c, rng);
  std::uint64_t s = seed * 1000;
  p.for_each([&](const std::string& name, Tensor& t) {
    auto v = random_values(t.size(), ++s, -spread, spread);
    if (name.find("gamma") != std::string::npos)
      for (double& x : v) x += 1.0;
    t = Tensor::constant(t.shape(), v);
  });
  return p;
}

Tensor random_input(const AiTViTConfig& c, std::uint64_t seed) {
  return Tensor::constant({c.in_rails, c.in_width}, random_values(c.in_rails * c.in_width, seed));
}

}  // namespace

TEST(Config, PatchCountFormula) {
  AiTViTConfig c;
  EXPECT_EQ(c.n_patches(), 31u);
  EXPECT_EQ(c.n_tokens(), 33u);
  EXPECT_EQ(c.d_k(), 16u);
  c.stride = 7;
  EXPECT_THROW(c.validate(), ConfigError);
  c = AiTViTConfig{};
  c.n_heads = 5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = AiTViTConfig{};
  c.det_classes = 3;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Init, DeterministicAndShapedByConfig) {
  AiTViTConfig c;
  c.seed = 9;
  const auto a = AiTViT::initialize(c), b = AiTViT::initialize(c);
  EXPECT_EQ(a.params().checksum(), b.params().checksum());
  EXPECT_EQ(a.params().layers[0].w_q.shape(), (Shape{128, 128}));
  EXPECT_EQ(a.params().patch_w.shape(), (Shape{16, 128}));
  EXPECT_EQ(a.params().pos_embed.shape(), (Shape{33, 128}));
  c.seed = 10;
  EXPECT_NE(AiTViT::initialize(c).params().checksum(), a.params().checksum());
}

TEST(Init, LayerNormAndBiasValues) {
  const auto m = AiTViT::initialize(AiTViTConfig::tiny());
  m.params().for_each([](const std::string& name, const Tensor& t) {
    if (name.find("gamma") != std::string::npos)
      for (double v : t.data()) EXPECT_EQ(v, 1.0) << name;
    if (name.find("beta") != std::string::npos || name.find("_b") != std::string::npos)
      for (double v : t.data()) EXPECT_EQ(v, 0.0) << name;
    if (name.find("w") != std::string::npos || name.find("token") != std::string::npos)
      for (double v : t.data()) EXPECT_LE(std::abs(v), 0.04) << name;
  });
}

TEST(PatchEmbed, TokenCountAndZeroInput) {
  AiTViTConfig c;
  const auto m = AiTViT::initialize(c);
  const Tensor t = patch_embed(c, m.params(), Tensor::zeros({1, 2, 128}));
  EXPECT_EQ(t.shape(), (Shape{31, 128}));
  for (double v : t.data()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(patch_embed(c, m.params(), Tensor::zeros({2, 64})), DimensionError);
}

TEST(PatchEmbed, MatchesSlidingWindowOracle) {
  const auto c = AiTViTConfig::tiny();
  const auto p = random_params(c, 1);
  const Tensor x = random_input(c, 2);
  const Tensor t = patch_embed(c, p, x);
  for (std::size_t tok = 0; tok < c.n_patches(); ++tok)
    for (std::size_t ch = 0; ch < c.n_c; ++ch) {
      double want = p.patch_b.at(ch);
      for (std::size_t r = 0; r < c.in_rails; ++r)
        for (std::size_t k = 0; k < c.kernel; ++k)
          want += x.at(r, tok * c.stride + k) * p.patch_w.at(r * c.kernel + k, ch);
      EXPECT_NEAR(t.at(tok, ch), want, 1e-10);
    }
}

TEST(Attention, ZeroQueryKeyGivesColumnMeanOfValues) {
  auto c = AiTViTConfig::tiny();
  c.n_heads = 1;
  auto p = random_params(c, 3);
  auto& l = p.layers[0];
  l.w_q = Tensor::zeros(l.w_q.shape());
  l.b_q = Tensor::zeros(l.b_q.shape());
  l.w_k = Tensor::zeros(l.w_k.shape());
  l.b_k = Tensor::zeros(l.b_k.shape());
  std::vector<double> eye(c.n_c * c.n_c, 0.0);
  for (std::size_t i = 0; i < c.n_c; ++i) eye[i * c.n_c + i] = 1.0;
  l.w_v = Tensor::constant({c.n_c, c.n_c}, eye);
  l.b_v = Tensor::zeros({c.n_c});
  l.w_o = Tensor::constant({c.n_c, c.n_c}, eye);
  l.b_o = Tensor::zeros({c.n_c});
  const Tensor z = Tensor::constant({c.n_tokens(), c.n_c}, random_values(c.n_tokens() * c.n_c, 4));
  std::vector<Tensor> maps;
  const Tensor y = multi_head_attention(c, l, z, &maps);
  for (std::size_t col = 0; col < c.n_c; ++col) {
    double mean = 0.0;
    for (std::size_t r = 0; r < c.n_tokens(); ++r) mean += z.at(r, col);
    mean /= c.n_tokens();
    for (std::size_t r = 0; r < c.n_tokens(); ++r) EXPECT_NEAR(y.at(r, col), mean, 1e-12);
  }
  for (double a : maps[0].data()) EXPECT_NEAR(a, 1.0 / c.n_tokens(), 1e-15);
}

TEST(Attention, MatchesDenseOracle) {
  for (std::size_t heads : {1u, 2u, 4u}) {
    auto c = AiTViTConfig::tiny();
    c.n_heads = heads;
    const auto p = random_params(c, 5 + heads);
    const Tensor z = Tensor::constant({c.n_tokens(), c.n_c}, random_values(c.n_tokens() * c.n_c, 6));
    const Tensor y = multi_head_attention(c, p.layers[0], z);
    const Mat want = mha_oracle(c, p.layers[0], to_mat(z));
    for (std::size_t r = 0; r < c.n_tokens(); ++r)
      for (std::size_t col = 0; col < c.n_c; ++col) EXPECT_NEAR(y.at(r, col), want[r][col], 1e-10);
  }
}

TEST(Encoder, ZeroBranchesAreIdentity) {
  const auto c = AiTViTConfig::tiny();
  auto p = random_params(c, 7);
  auto& l = p.layers[0];
  for (Tensor* t : {&l.w_o, &l.b_o, &l.w_ff2, &l.b_ff2}) *t = Tensor::zeros(t->shape());
  const Tensor z = Tensor::constant({c.n_tokens(), c.n_c}, random_values(c.n_tokens() * c.n_c, 8));
  const Tensor y = encoder_layer(c, l, z);
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_EQ(y.at(i), z.at(i));
}

TEST(Encoder, MatchesCompositionOracle) {
  const auto c = AiTViTConfig::tiny();
  const auto p = random_params(c, 9);
  const auto& l = p.layers[1];
  const Tensor z = Tensor::constant({c.n_tokens(), c.n_c}, random_values(c.n_tokens() * c.n_c, 10));
  const Tensor y = encoder_layer(c, l, z);
  const Mat z0 = to_mat(z);
  const Mat mid = plus(mha_oracle(c, l, ln(z0, l.ln1_gamma, l.ln1_beta)), z0);
  const Mat want =
      plus(affine(gelu_m(affine(ln(mid, l.ln2_gamma, l.ln2_beta), l.w_ff1, l.b_ff1)), l.w_ff2, l.b_ff2), mid);
  for (std::size_t r = 0; r < c.n_tokens(); ++r)
    for (std::size_t col = 0; col < c.n_c; ++col) EXPECT_NEAR(y.at(r, col), want[r][col], 1e-10);
}

TEST(Forward, ArityShapesAndRowStochasticMaps) {
  AiTViTConfig c;
  c.seed = 3;
  const auto m = AiTViT::initialize(c);
  const auto out = m.forward(Tensor::constant({1, 2, 128}, random_values(256, 11)));
  EXPECT_EQ(out.f1_logits.size(), 11u);
  EXPECT_EQ(out.f2_logits.size(), 2u);
  ASSERT_EQ(out.attention.size(), 4u);
  for (const auto& layer : out.attention) {
    ASSERT_EQ(layer.size(), 8u);
    for (const auto& a : layer) {
      ASSERT_EQ(a.shape(), (Shape{33, 33}));
      for (std::size_t r = 0; r < 33; ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < 33; ++j) s += a.at(r, j);
        EXPECT_NEAR(s, 1.0, 1e-9);
      }
    }
  }
}

TEST(Forward, ShapeContractAcrossConfigs) {
  for (auto [w, k, s] : {std::tuple{32u, 8u, 4u}, {64u, 4u, 4u}, {40u, 8u, 2u}}) {
    auto c = AiTViTConfig::tiny();
    c.in_width = w;
    c.kernel = k;
    c.stride = s;
    c.n_classes = 3;
    const auto m = AiTViT::initialize(c);
    const auto out = m.forward(random_input(c, w));
    EXPECT_EQ(out.f1_logits.size(), 3u);
    EXPECT_EQ(out.f2_logits.size(), 2u);
    EXPECT_EQ(out.attention[0][0].dim(0), (w - k) / s + 3);
  }
}

TEST(Forward, DeterministicAndRejectsBadShape) {
  const auto c = AiTViTConfig::tiny();
  const auto m = AiTViT(c, random_params(c, 12));
  const Tensor x = random_input(c, 13);
  const auto a = m.forward(x), b = m.forward(x);
  for (std::size_t i = 0; i < a.f1_logits.size(); ++i) EXPECT_EQ(a.f1_logits.at(i), b.f1_logits.at(i));
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(a.f2_logits.at(i), b.f2_logits.at(i));
  EXPECT_THROW(m.forward(Tensor::zeros({2, 128})), DimensionError);
}

TEST(Forward, InputGradientExistsAndMatchesFiniteDifferences) {
  const auto c = AiTViTConfig::tiny();
  const auto p = random_params(c, 14);
  const auto x0 = random_values(c.in_rails * c.in_width, 15);
  const Tensor x = Tensor::variable({c.in_rails, c.in_width}, x0);
  backward(cross_entropy(forward(c, p, x).f1_logits, 1));
  double norm = 0.0;
  for (double g : x.grad()) norm += g * g;
  EXPECT_GT(norm, 0.0);
  for (std::size_t i : {0u, 17u, 40u, 63u}) {
    auto f = [&](double d) {
      auto v = x0;
      v[i] += d;
      return cross_entropy(forward(c, p, Tensor::constant({c.in_rails, c.in_width}, v)).f1_logits, 1).item();
    };
    const double numeric = (f(1e-3) - f(-1e-3)) / 2e-3;
    EXPECT_TRUE(aitvit::testing::grad_close(x.grad()[i], numeric)) << i;
  }
}

TEST(Forward, ZeroNonTokenParametersMakeOutputInputIndependent) {
  const auto c = AiTViTConfig::tiny();
  auto p = random_params(c, 16);
  p.for_each([](const std::string& name, Tensor& t) {
    if (name.find("token") == std::string::npos && name != "pos_embed") t = Tensor::zeros(t.shape());
  });
  const auto a = forward(c, p, random_input(c, 17)), b = forward(c, p, random_input(c, 18));
  for (std::size_t i = 0; i < a.f1_logits.size(); ++i) EXPECT_EQ(a.f1_logits.at(i), b.f1_logits.at(i));
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(a.f2_logits.at(i), b.f2_logits.at(i));
}

TEST(AttentionRows, RowsSumToOneAndMatchAveragedMaps) {
  const auto c = AiTViTConfig::tiny();
  const auto out = forward(c, random_params(c, 19), random_input(c, 20));
  for (std::size_t layer = 0; layer < c.n_layers; ++layer) {
    const auto rows = attention_rows(out, layer);
    double sc = 0.0, sa = 0.0;
    for (std::size_t j = 0; j < c.n_tokens(); ++j) {
      sc += rows.cls[j];
      sa += rows.advi[j];
      double wc = 0.0, wa = 0.0;
      for (const auto& a : out.attention[layer]) {
        wc += a.at(0, j);
        wa += a.at(1, j);
      }
      EXPECT_NEAR(rows.cls[j], wc / c.n_heads, 1e-12);
      EXPECT_NEAR(rows.advi[j], wa / c.n_heads, 1e-12);
    }
    EXPECT_NEAR(sc, 1.0, 1e-9);
    EXPECT_NEAR(sa, 1.0, 1e-9);
  }
  EXPECT_THROW(attention_rows(out, c.n_layers), IndexError);
}

TEST(AttentionRows, ZeroQueryKeyWeightsGiveUniformRows) {
  const auto c = AiTViTConfig::tiny();
  auto p = random_params(c, 21);
  for (auto& l : p.layers)
    for (Tensor* t : {&l.w_q, &l.b_q, &l.w_k, &l.b_k}) *t = Tensor::zeros(t->shape());
  const auto out = forward(c, p, random_input(c, 22));
  const auto rows = attention_rows(out, 0);
  for (std::size_t j = 0; j < c.n_tokens(); ++j) {
    EXPECT_NEAR(rows.cls[j], 1.0 / c.n_tokens(), 1e-15);
    EXPECT_NEAR(rows.advi[j], 1.0 / c.n_tokens(), 1e-15);
  }
}

TEST(Argmax, TiesGoToFirstIndex) {
  const std::vector<double> v = {1.0, 3.0, 3.0, -2.0};
  EXPECT_EQ(argmax(v), 1u);
  const std::vector<double> eq = {0.5, 0.5};
  EXPECT_EQ(argmax(eq), 0u);
}
