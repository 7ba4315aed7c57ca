#include "aitvit/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "aitvit/errors.hpp"

namespace aitvit::eval {

Decision decide(std::span<const double> f1, std::span<const double> f2, bool detector_active) {
  Decision d;
  d.label = argmax(f1);
  d.flagged = detector_active && f2.size() > kAdversarial && f2[kAdversarial] > f2[kBenign];
  return d;
}

namespace {

Tensor input(const AiTViTConfig& c, std::span<const double> frame) {
  if (frame.size() != c.in_rails * c.in_width)
    throw DimensionError("frame has " + std::to_string(frame.size()) + " values, model expects " +
                         std::to_string(c.in_rails * c.in_width));
  return Tensor::constant({c.in_rails, c.in_width}, std::vector<double>(frame.begin(), frame.end()));
}

double ratio(std::size_t num, std::size_t den) {
  return static_cast<double>(num) / static_cast<double>(den);
}

std::size_t resolve_layer(const AiTViTConfig& c, long layer) {
  if (layer < 0) return c.n_layers - 1;
  if (static_cast<std::size_t>(layer) >= c.n_layers)
    throw IndexError("layer " + std::to_string(layer) + " out of range (model has " +
                     std::to_string(c.n_layers) + ")");
  return static_cast<std::size_t>(layer);
}

}  // namespace

Decision classify_and_detect(const AiTViT& model, std::span<const double> frame,
                             bool detector_active) {
  const auto out = model.forward(input(model.config(), frame));
  return decide(out.f1_logits.data(), out.f2_logits.data(), detector_active);
}

ConfusionCounts confusion(std::span<const Outcome> outcomes) {
  ConfusionCounts c;
  for (const auto& o : outcomes) {
    if (o.adversarial)
      (o.decision.flagged ? c.tp : c.fn)++;
    else
      (o.decision.flagged ? c.fp : c.tn)++;
  }
  return c;
}

bool defense_success(const Outcome& o) {
  const bool correct = o.decision.label == o.truth;
  return o.adversarial ? (o.decision.flagged || correct) : (!o.decision.flagged && correct);
}

double accuracy(std::span<const Outcome> outcomes) {
  if (outcomes.empty()) throw ContractError("accuracy: empty evaluation set");
  std::size_t ok = 0;
  for (const auto& o : outcomes) ok += defense_success(o) ? 1 : 0;
  return ratio(ok, outcomes.size());
}

double detector_accuracy(const ConfusionCounts& c) {
  if (c.total() == 0) throw ContractError("detector accuracy: empty evaluation set");
  return ratio(c.tp + c.tn, c.total());
}

double fnr(const ConfusionCounts& c) {
  if (c.tp + c.fn == 0) throw ContractError("fnr: no adversarial samples");
  return ratio(c.fn, c.tp + c.fn);
}

double detection_rate(const ConfusionCounts& c) {
  if (c.tp + c.fn == 0) throw ContractError("detection rate: no adversarial samples");
  return ratio(c.tp, c.tp + c.fn);
}

std::vector<Outcome> evaluate_outcomes(const AiTViT& model,
                                       const std::vector<signals::LabeledFrame>& benign,
                                       const std::vector<signals::LabeledFrame>& adversarial,
                                       bool detector_active) {
  if (benign.empty() && adversarial.empty()) throw DataError("evaluation: both sets are empty");
  std::vector<Outcome> out;
  out.reserve(benign.size() + adversarial.size());
  for (const auto& f : benign)
    out.push_back({f.label, false, classify_and_detect(model, f.iq, detector_active)});
  for (const auto& f : adversarial)
    out.push_back({f.label, true, classify_and_detect(model, f.iq, detector_active)});
  return out;
}

EvalReport report(std::span<const Outcome> outcomes) {
  EvalReport r;
  r.counts = confusion(outcomes);
  r.accuracy = accuracy(outcomes);
  r.detector_accuracy = detector_accuracy(r.counts);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const bool has_adv = r.counts.tp + r.counts.fn > 0;
  r.fnr = has_adv ? fnr(r.counts) : nan;
  r.detection_rate = has_adv ? detection_rate(r.counts) : nan;
  std::size_t nb = 0, na = 0, cb = 0, ca = 0;
  for (const auto& o : outcomes) {
    const bool correct = o.decision.label == o.truth;
    if (o.adversarial) {
      ++na;
      ca += correct;
    } else {
      ++nb;
      cb += correct;
    }
  }
  r.clean_accuracy = nb ? ratio(cb, nb) : nan;
  r.adversarial_accuracy = na ? ratio(ca, na) : nan;
  return r;
}

AttackedSet attack_frames(const AiTViT& model, const std::vector<signals::LabeledFrame>& frames,
                          const attacks::AttackSpec& spec, std::optional<double> snr) {
  spec.validate();
  AttackedSet set;
  set.frames.reserve(frames.size());
  set.results.reserve(frames.size());
  for (const auto& f : frames) {
    const double s = snr ? *snr : std::pow(10.0, f.snr_db / 10.0);
    if (spec.kind != attacks::Kind::bim && !std::isfinite(s))
      throw ConfigError("attack: frame has no finite SNR; an explicit SNR is required");
    attacks::AttackResult r;
    try {
      r = attacks::run_attack(model, f.iq, f.label, s, spec);
    } catch (const DegenerateError&) {
      r.x_adv.assign(f.iq.begin(), f.iq.end());
      r.degenerate = true;
    }
    if (r.degenerate && r.iterations == 0) ++set.degenerate;
    signals::LabeledFrame adv = f;
    adv.iq = signals::to_iq(r.x_adv);
    set.frames.push_back(adv);
    set.results.push_back(std::move(r));
  }
  return set;
}

const char* source_name(Source s) {
  switch (s) {
    case Source::cls: return "cls";
    case Source::advi: return "advi";
    case Source::averaged: return "averaged";
  }
  return "?";
}

Source source_from_name(std::string_view name) {
  for (Source s : {Source::cls, Source::advi, Source::averaged})
    if (name == source_name(s)) return s;
  throw ConfigError("unknown heatmap source '" + std::string(name) + "'");
}

AttentionHeatmap heatmap_from_patch_weights(const AiTViTConfig& config,
                                            std::span<const double> patch_weights) {
  const std::size_t np = config.n_patches();
  if (patch_weights.size() != np)
    throw DimensionError("heatmap: " + std::to_string(patch_weights.size()) +
                         " patch weights, expected " + std::to_string(np));
  const std::size_t w = config.in_width;
  std::vector<double> sum(w, 0.0), hits(w, 0.0);
  for (std::size_t p = 0; p < np; ++p)
    for (std::size_t k = 0; k < config.kernel; ++k) {
      sum[p * config.stride + k] += patch_weights[p];
      hits[p * config.stride + k] += 1.0;
    }
  std::vector<double> col(w, 0.0);
  for (std::size_t c = 0; c < w; ++c)
    if (hits[c] > 0.0) col[c] = sum[c] / hits[c];

  AttentionHeatmap h;
  h.rails = config.in_rails;
  h.width = w;
  h.values.assign(h.rails * w, 0.0);
  const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
  if (!(*hi > *lo)) {
    h.degenerate = true;
    return h;
  }
  const double span = *hi - *lo;
  for (std::size_t c = 0; c < w; ++c) {
    const double v = (col[c] - *lo) / span;
    const double kept = v >= kHighAttention ? v : 0.0;
    for (std::size_t r = 0; r < h.rails; ++r) h.values[r * w + c] = kept;
    if (kept > 0.0) h.high_count += h.rails;
  }
  return h;
}

AttentionHeatmap attention_heatmap(const AiTViTConfig& config, const ForwardOutput& out,
                                   std::size_t layer, Source source) {
  if (layer >= out.attention.size())
    throw IndexError("heatmap: layer " + std::to_string(layer) + " out of range");
  const auto rows = attention_rows(out, layer);
  const std::size_t np = config.n_patches();
  std::vector<double> w(np);
  for (std::size_t p = 0; p < np; ++p) {
    const double c = rows.cls[p + 2], a = rows.advi[p + 2];
    w[p] = source == Source::cls ? c : source == Source::advi ? a : 0.5 * (c + a);
  }
  auto h = heatmap_from_patch_weights(config, w);
  h.source = source;
  h.layer = layer;
  return h;
}

AttentionHeatmap frame_heatmap(const AiTViT& model, std::span<const double> frame, Source source,
                               long layer) {
  const std::size_t l = resolve_layer(model.config(), layer);
  return attention_heatmap(model.config(), model.forward(input(model.config(), frame)), l, source);
}

double mean_high_count(const AiTViT& model, const std::vector<signals::LabeledFrame>& frames,
                       Source source, long layer) {
  if (frames.empty()) throw DataError("mean_high_count: empty frame set");
  double total = 0.0;
  for (const auto& f : frames)
    total += static_cast<double>(frame_heatmap(model, f.iq, source, layer).high_count);
  return total / static_cast<double>(frames.size());
}

std::string heatmap_csv(const AttentionHeatmap& h) {
  std::string s;
  char buf[32];
  for (std::size_t r = 0; r < h.rails; ++r) {
    for (std::size_t c = 0; c < h.width; ++c) {
      std::snprintf(buf, sizeof buf, "%.6g", h.values[r * h.width + c]);
      if (c) s += ',';
      s += buf;
    }
    s += '\n';
  }
  return s;
}

std::vector<std::uint8_t> heatmap_pgm(const AttentionHeatmap& h) {
  const std::string head =
      "P5\n" + std::to_string(h.width) + " " + std::to_string(h.rails) + "\n255\n";
  std::vector<std::uint8_t> out(head.begin(), head.end());
  for (double v : h.values)
    out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  return out;
}

}  // namespace aitvit::eval
