#include "aitvit/model.hpp"

#include <cmath>
#include <cstring>

#include "aitvit/errors.hpp"

namespace aitvit {

AiTViTConfig AiTViTConfig::tiny() {
  AiTViTConfig c;
  c.n_c = 16;
  c.n_layers = 2;
  c.n_heads = 2;
  c.in_width = 32;
  return c;
}

void AiTViTConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
  if (n_c == 0 || n_layers == 0 || n_heads == 0 || head_hidden == 0 || n_classes == 0)
    fail("extents must be positive");
  if (n_c % n_heads != 0)
    fail("n_c=" + std::to_string(n_c) + " not divisible by n_heads=" + std::to_string(n_heads));
  if (det_classes != 2) fail("det_classes must be 2");
  if (in_rails == 0 || in_width == 0) fail("input extents must be positive");
  if (kernel == 0 || stride == 0 || kernel > in_width)
    fail("kernel/stride incompatible with input width");
  if ((in_width - kernel) % stride != 0)
    fail("(in_width - kernel) = " + std::to_string(in_width - kernel) +
         " not divisible by stride " + std::to_string(stride));
}

namespace {

// Truncated normal, std 0.02, cut at two standard deviations.
Tensor trunc_normal(Shape shape, Rng& rng) {
  std::normal_distribution<double> n(0.0, 0.02);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) {
    do x = n(rng);
    while (std::abs(x) > 0.04);
  }
  return Tensor::constant(std::move(shape), std::move(v));
}

Tensor filled(Shape shape, double value) {
  const auto n = shape_numel(shape);
  return Tensor::constant(std::move(shape), std::vector<double>(n, value));
}

}  // namespace

AiTViTParams init_params(const AiTViTConfig& c, Rng& rng) {
  c.validate();
  const std::size_t d = c.n_c;
  AiTViTParams p;
  p.patch_w = trunc_normal({c.in_rails * c.kernel, d}, rng);
  p.patch_b = filled({d}, 0.0);
  p.cls_token = trunc_normal({1, d}, rng);
  p.advi_token = trunc_normal({1, d}, rng);
  if (c.positional) p.pos_embed = trunc_normal({c.n_tokens(), d}, rng);
  for (std::size_t i = 0; i < c.n_layers; ++i) {
    EncoderLayerParams l;
    l.ln1_gamma = filled({d}, 1.0);
    l.ln1_beta = filled({d}, 0.0);
    l.w_q = trunc_normal({d, d}, rng);
    l.b_q = filled({d}, 0.0);
    l.w_k = trunc_normal({d, d}, rng);
    l.b_k = filled({d}, 0.0);
    l.w_v = trunc_normal({d, d}, rng);
    l.b_v = filled({d}, 0.0);
    l.w_o = trunc_normal({d, d}, rng);
    l.b_o = filled({d}, 0.0);
    l.ln2_gamma = filled({d}, 1.0);
    l.ln2_beta = filled({d}, 0.0);
    l.w_ff1 = trunc_normal({d, c.ffn_width()}, rng);
    l.b_ff1 = filled({c.ffn_width()}, 0.0);
    l.w_ff2 = trunc_normal({c.ffn_width(), d}, rng);
    l.b_ff2 = filled({d}, 0.0);
    p.layers.push_back(std::move(l));
  }
  p.final_gamma = filled({d}, 1.0);
  p.final_beta = filled({d}, 0.0);
  p.cls_w = trunc_normal({d, c.n_classes}, rng);
  p.cls_b = filled({c.n_classes}, 0.0);
  p.det_w1 = trunc_normal({d, c.head_hidden}, rng);
  p.det_b1 = filled({c.head_hidden}, 0.0);
  p.det_w2 = trunc_normal({c.head_hidden, c.det_classes}, rng);
  p.det_b2 = filled({c.det_classes}, 0.0);
  return p;
}

AiTViTParams AiTViTParams::bind(bool requires_grad) const {
  AiTViTParams out = *this;
  out.for_each([&](const std::string&, Tensor& t) { t = t.detach(requires_grad); });
  return out;
}

std::size_t AiTViTParams::count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

std::uint64_t AiTViTParams::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for_each([&](const std::string&, const Tensor& t) {
    for (double v : t.data()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      h = (h ^ bits) * 0x100000001b3ULL;
    }
  });
  return h;
}

AiTViTParams AiTViTParams::zeros_like(const AiTViTParams& like) {
  AiTViTParams out = like;
  out.for_each([](const std::string&, Tensor& t) { t = Tensor::zeros(t.shape()); });
  return out;
}

Tensor patch_embed(const AiTViTConfig& c, const AiTViTParams& p, const Tensor& x) {
  Tensor in = x;
  if (x.rank() == 3 && x.dim(0) == 1) in = reshape(x, {x.dim(1), x.dim(2)});
  if (in.rank() != 2 || in.dim(0) != c.in_rails || in.dim(1) != c.in_width)
    throw DimensionError("model input " + shape_str(x.shape()) + " does not match configured " +
                         shape_str({1, c.in_rails, c.in_width}));
  return linear(unfold_cols(in, c.kernel, c.stride), p.patch_w, p.patch_b);
}

Tensor multi_head_attention(const AiTViTConfig& c, const EncoderLayerParams& l,
                            const Tensor& z, std::vector<Tensor>* maps) {
  if (z.rank() != 2 || z.dim(1) != c.n_c)
    throw DimensionError("attention input " + shape_str(z.shape()) + " has wrong width");
  const Tensor q = linear(z, l.w_q, l.b_q);
  const Tensor k = linear(z, l.w_k, l.b_k);
  const Tensor v = linear(z, l.w_v, l.b_v);
  const std::size_t dk = c.d_k();
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<Tensor> heads;
  heads.reserve(c.n_heads);
  for (std::size_t h = 0; h < c.n_heads; ++h) {
    const Tensor qh = slice_cols(q, h * dk, dk);
    const Tensor kh = slice_cols(k, h * dk, dk);
    const Tensor vh = slice_cols(v, h * dk, dk);
    const Tensor a = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt_dk), 1);
    if (maps) maps->push_back(a);
    heads.push_back(matmul(a, vh));
  }
  const Tensor cat = c.n_heads == 1 ? heads.front() : concat_cols(heads);
  return linear(cat, l.w_o, l.b_o);
}

Tensor encoder_layer(const AiTViTConfig& c, const EncoderLayerParams& l, const Tensor& z,
                     std::vector<Tensor>* maps) {
  const Tensor z_mid = add(multi_head_attention(c, l, layer_norm(z, l.ln1_gamma, l.ln1_beta), maps), z);
  const Tensor hidden = gelu(linear(layer_norm(z_mid, l.ln2_gamma, l.ln2_beta), l.w_ff1, l.b_ff1));
  return add(linear(hidden, l.w_ff2, l.b_ff2), z_mid);
}

ForwardOutput forward(const AiTViTConfig& c, const AiTViTParams& p, const Tensor& x) {
  if (p.layers.size() != c.n_layers)
    throw DimensionError("parameter set has " + std::to_string(p.layers.size()) +
                         " layers, config expects " + std::to_string(c.n_layers));
  Tensor z = concat_rows({p.cls_token, p.advi_token, patch_embed(c, p, x)});
  if (p.pos_embed.defined()) z = add(z, p.pos_embed);

  ForwardOutput out;
  out.attention.resize(c.n_layers);
  for (std::size_t i = 0; i < c.n_layers; ++i) z = encoder_layer(c, p.layers[i], z, &out.attention[i]);

  const Tensor zf = layer_norm(z, p.final_gamma, p.final_beta);
  out.f1_logits = linear(slice_rows(zf, 0, 1), p.cls_w, p.cls_b);
  out.f2_logits = linear(gelu(linear(slice_rows(zf, 1, 1), p.det_w1, p.det_b1)), p.det_w2, p.det_b2);
  return out;
}

AttentionRows attention_rows(const ForwardOutput& out, std::size_t layer) {
  if (layer >= out.attention.size())
    throw IndexError("attention layer " + std::to_string(layer) + " out of range (" +
                     std::to_string(out.attention.size()) + " layers)");
  const auto& heads = out.attention[layer];
  const std::size_t t = heads.front().dim(0);
  AttentionRows rows{std::vector<double>(t, 0.0), std::vector<double>(t, 0.0)};
  for (const auto& a : heads)
    for (std::size_t j = 0; j < t; ++j) {
      rows.cls[j] += a.at(0, j);
      rows.advi[j] += a.at(1, j);
    }
  const double inv = 1.0 / static_cast<double>(heads.size());
  for (std::size_t j = 0; j < t; ++j) {
    rows.cls[j] *= inv;
    rows.advi[j] *= inv;
  }
  return rows;
}

std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

AiTViT::AiTViT(AiTViTConfig config, AiTViTParams params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  std::size_t layers = params_.layers.size();
  if (layers != config_.n_layers)
    throw ConfigError("parameter set does not match config (" + std::to_string(layers) +
                      " layers vs " + std::to_string(config_.n_layers) + ")");
}

AiTViT AiTViT::initialize(const AiTViTConfig& config) {
  Rng rng = substream(config.seed, "init");
  return AiTViT(config, init_params(config, rng));
}

}  // namespace aitvit
