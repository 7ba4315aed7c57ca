#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aitvit/rng.hpp"
#include "aitvit/tensor.hpp"

namespace aitvit {

// Class indices of the detection head.
inline constexpr std::size_t kBenign = 0;       // y_b
inline constexpr std::size_t kAdversarial = 1;  // y_a

struct AiTViTConfig {
  std::size_t n_c = 128;        // embedding width
  std::size_t n_layers = 4;     // encoder layers
  std::size_t n_heads = 8;
  std::size_t kernel = 8;       // patch conv width
  std::size_t stride = 4;
  std::size_t head_hidden = 32; // detection head hidden width
  std::size_t det_classes = 2;
  std::size_t n_classes = 11;
  std::size_t in_rails = 2;
  std::size_t in_width = 128;
  bool positional = true;       // learnable per-position embeddings
  std::uint64_t seed = 0;

  // n_c=16, N=2, h=2 on 2x32 input: the gradient-check configuration.
  static AiTViTConfig tiny();

  void validate() const;
  std::size_t d_k() const { return n_c / n_heads; }
  std::size_t n_patches() const { return (in_width - kernel) / stride + 1; }
  std::size_t n_tokens() const { return n_patches() + 2; }
  std::size_t ffn_width() const { return 4 * n_c; }

  bool operator==(const AiTViTConfig&) const = default;
};

struct EncoderLayerParams {
  Tensor ln1_gamma, ln1_beta;
  Tensor w_q, b_q, w_k, b_k, w_v, b_v;
  Tensor w_o, b_o;  // U_MSA
  Tensor ln2_gamma, ln2_beta;
  Tensor w_ff1, b_ff1, w_ff2, b_ff2;
};

// Learnable parameters. Tensors are immutable and shared on copy; updates
// replace whole tensors.
struct AiTViTParams {
  Tensor patch_w;  // [in_rails*kernel x n_c], rows ordered rail-major
  Tensor patch_b;
  Tensor cls_token;   // [1 x n_c]
  Tensor advi_token;  // [1 x n_c]
  Tensor pos_embed;   // [n_tokens x n_c]; undefined when positional == false
  std::vector<EncoderLayerParams> layers;
  Tensor final_gamma, final_beta;
  Tensor cls_w, cls_b;           // n_c -> K
  Tensor det_w1, det_b1;         // n_c -> N_i
  Tensor det_w2, det_b2;         // N_i -> 2

  template <class F>
  void for_each(F&& f);
  template <class F>
  void for_each(F&& f) const;

  // Copy whose tensors are fresh graph leaves over the same buffers.
  AiTViTParams bind(bool requires_grad) const;
  std::size_t count() const;
  // Order-sensitive hash over every value; used to assert immutability.
  std::uint64_t checksum() const;
  // Zeros matching `like`, e.g. for gradient accumulators.
  static AiTViTParams zeros_like(const AiTViTParams& like);
};

struct ForwardOutput {
  Tensor f1_logits;  // [1 x K]
  Tensor f2_logits;  // [1 x 2]
  // attention[layer][head], each [n_tokens x n_tokens], row-stochastic
  std::vector<std::vector<Tensor>> attention;
};

struct AttentionRows {
  std::vector<double> cls;
  std::vector<double> advi;
};

AiTViTParams init_params(const AiTViTConfig& config, Rng& rng);

// x: [in_rails x in_width] or [1 x in_rails x in_width] -> [n_patches x n_c]
Tensor patch_embed(const AiTViTConfig& config, const AiTViTParams& params, const Tensor& x);

// maps, when given, receives the per-head attention matrices.
Tensor multi_head_attention(const AiTViTConfig& config, const EncoderLayerParams& layer,
                            const Tensor& z, std::vector<Tensor>* maps = nullptr);

Tensor encoder_layer(const AiTViTConfig& config, const EncoderLayerParams& layer,
                     const Tensor& z, std::vector<Tensor>* maps = nullptr);

ForwardOutput forward(const AiTViTConfig& config, const AiTViTParams& params, const Tensor& x);

// CLS-query and AdvI-query rows of the head-averaged attention at `layer`.
AttentionRows attention_rows(const ForwardOutput& out, std::size_t layer);

std::size_t argmax(std::span<const double> v);

class AiTViT {
 public:
  AiTViT(AiTViTConfig config, AiTViTParams params);
  // Parameters drawn from the "init" substream of config.seed.
  static AiTViT initialize(const AiTViTConfig& config);

  const AiTViTConfig& config() const { return config_; }
  const AiTViTParams& params() const { return params_; }
  AiTViTParams& params() { return params_; }

  ForwardOutput forward(const Tensor& x) const { return aitvit::forward(config_, params_, x); }

 private:
  AiTViTConfig config_;
  AiTViTParams params_;
};

// -- template definitions ----------------------------------------------------

namespace detail {
template <class P, class F>
void visit_params(P& p, F&& f) {
  f("patch_w", p.patch_w);
  f("patch_b", p.patch_b);
  f("cls_token", p.cls_token);
  f("advi_token", p.advi_token);
  if (p.pos_embed.defined()) f("pos_embed", p.pos_embed);
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    auto& l = p.layers[i];
    const std::string pre = "layer" + std::to_string(i) + ".";
    f(pre + "ln1_gamma", l.ln1_gamma);
    f(pre + "ln1_beta", l.ln1_beta);
    f(pre + "w_q", l.w_q);
    f(pre + "b_q", l.b_q);
    f(pre + "w_k", l.w_k);
    f(pre + "b_k", l.b_k);
    f(pre + "w_v", l.w_v);
    f(pre + "b_v", l.b_v);
    f(pre + "w_o", l.w_o);
    f(pre + "b_o", l.b_o);
    f(pre + "ln2_gamma", l.ln2_gamma);
    f(pre + "ln2_beta", l.ln2_beta);
    f(pre + "w_ff1", l.w_ff1);
    f(pre + "b_ff1", l.b_ff1);
    f(pre + "w_ff2", l.w_ff2);
    f(pre + "b_ff2", l.b_ff2);
  }
  f("final_gamma", p.final_gamma);
  f("final_beta", p.final_beta);
  f("cls_w", p.cls_w);
  f("cls_b", p.cls_b);
  f("det_w1", p.det_w1);
  f("det_b1", p.det_b1);
  f("det_w2", p.det_w2);
  f("det_b2", p.det_b2);
}
}  // namespace detail

template <class F>
void AiTViTParams::for_each(F&& f) {
  detail::visit_params(*this, f);
}

template <class F>
void AiTViTParams::for_each(F&& f) const {
  detail::visit_params(*this, f);
}

}  // namespace aitvit
