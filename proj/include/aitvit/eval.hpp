#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aitvit/attacks.hpp"
#include "aitvit/model.hpp"
#include "aitvit/signals.hpp"

namespace aitvit::eval {

struct Decision {
  std::size_t label = 0;
  bool flagged = false;
};

// Equal detector logits resolve to benign. With the detector inactive
// (a plain ViT) nothing is ever flagged.
Decision decide(std::span<const double> f1, std::span<const double> f2,
                bool detector_active = true);
Decision classify_and_detect(const AiTViT& model, std::span<const double> frame,
                             bool detector_active = true);

// One evaluated sample: ground truth plus the model's decision.
struct Outcome {
  std::size_t truth = 0;
  bool adversarial = false;
  Decision decision;
};

// Positive = adversarial.
struct ConfusionCounts {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  std::size_t total() const { return tp + tn + fp + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

ConfusionCounts confusion(std::span<const Outcome> outcomes);

// Benign: unflagged and correctly labeled. Adversarial: flagged or
// correctly labeled.
bool defense_success(const Outcome& o);
double accuracy(std::span<const Outcome> outcomes);
// (tp + tn) / total, the detector-only reading.
double detector_accuracy(const ConfusionCounts& c);
// fn / (tp + fn); throws ContractError when there are no adversarial samples.
double fnr(const ConfusionCounts& c);
double detection_rate(const ConfusionCounts& c);

std::vector<Outcome> evaluate_outcomes(const AiTViT& model,
                                       const std::vector<signals::LabeledFrame>& benign,
                                       const std::vector<signals::LabeledFrame>& adversarial,
                                       bool detector_active = true);

struct EvalReport {
  ConfusionCounts counts;
  double accuracy = 0.0;
  double detector_accuracy = 0.0;
  double fnr = 0.0;
  double detection_rate = 0.0;
  double clean_accuracy = 0.0;        // f1 on the benign half
  double adversarial_accuracy = 0.0;  // f1 on the adversarial half
};

EvalReport report(std::span<const Outcome> outcomes);

// ---- attack sets -------------------------------------------------------------

struct AttackedSet {
  std::vector<signals::LabeledFrame> frames;  // adversarial frames, original labels
  std::vector<attacks::AttackResult> results;
  std::size_t degenerate = 0;  // frames passed through unperturbed
};

// Attacks every frame; each frame's own SNR sets the L2 budget unless a
// linear `snr` is given. Degenerate frames are kept unperturbed and counted.
AttackedSet attack_frames(const AiTViT& model, const std::vector<signals::LabeledFrame>& frames,
                          const attacks::AttackSpec& spec,
                          std::optional<double> snr = std::nullopt);

// ---- attention maps ---------------------------------------------------------

enum class Source { cls, advi, averaged };

const char* source_name(Source s);
Source source_from_name(std::string_view name);

inline constexpr double kHighAttention = 0.5;

struct AttentionHeatmap {
  std::size_t rails = 0, width = 0;
  std::vector<double> values;  // rails x width, row-major
  std::size_t high_count = 0;
  Source source = Source::averaged;
  std::size_t layer = 0;
  bool degenerate = false;  // min == max before normalization
};

// Spreads per-patch weights over their receptive fields (overlaps averaged),
// min-max normalizes and zeroes everything below kHighAttention.
AttentionHeatmap heatmap_from_patch_weights(const AiTViTConfig& config,
                                            std::span<const double> patch_weights);

AttentionHeatmap attention_heatmap(const AiTViTConfig& config, const ForwardOutput& out,
                                   std::size_t layer, Source source = Source::averaged);

// Heatmap of `frame` at the last layer unless `layer` is given.
AttentionHeatmap frame_heatmap(const AiTViT& model, std::span<const double> frame,
                               Source source = Source::averaged, long layer = -1);

double mean_high_count(const AiTViT& model, const std::vector<signals::LabeledFrame>& frames,
                       Source source = Source::averaged, long layer = -1);

// 2 rows of comma-separated values, 6 significant digits.
std::string heatmap_csv(const AttentionHeatmap& h);
// Binary 8-bit PGM (P5), value * 255 rounded.
std::vector<std::uint8_t> heatmap_pgm(const AttentionHeatmap& h);

}  // namespace aitvit::eval
