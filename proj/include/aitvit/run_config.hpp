#pragma once

// Flat key-value configuration with [section] headers:
//
//   [data]
//   classes = BPSK, QAM16, AM-SSB
//   snr_db = 10
//
// Later assignments and `section.key=value` overrides replace earlier ones.
// dB quantities are converted to linear ratios while building the RunConfig
// and nowhere else.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aitvit/attacks.hpp"
#include "aitvit/eval.hpp"
#include "aitvit/model.hpp"
#include "aitvit/signals.hpp"
#include "aitvit/training.hpp"

namespace aitvit::cli {

using KeyValues = std::map<std::string, std::string>;  // "section.key" -> value

KeyValues parse_key_values(const std::string& text, const std::string& origin = "<config>");
KeyValues read_key_values(const std::filesystem::path& path);
// Applies "section.key=value" assignments on top of `base`.
void apply_overrides(KeyValues& base, const std::vector<std::string>& assignments);

enum class DetectorMode { automatic, on, off };

struct RunConfig {
  signals::DatasetSpec data;
  AiTViTConfig model;
  bool model_given = false;  // any model.* key was set; checkpoints are checked against it
  training::TrainConfig train;  // epochs unused; see nt_epochs/at_epochs
  std::size_t nt_epochs = 30;
  std::size_t at_epochs = 30;
  std::size_t probe_frames = 200;

  attacks::AttackSpec attack;        // pnr holds the first entry of pnr_list
  std::vector<double> pnr_list;      // linear
  std::vector<double> pnr_list_db;   // as written, for reports
  std::optional<double> attack_snr;  // linear; unset -> each frame's own SNR

  DetectorMode detector = DetectorMode::automatic;
  eval::Source heatmap_source = eval::Source::averaged;
  long heatmap_layer = -1;
  std::size_t heatmap_exports = 4;
  std::size_t max_frames = 0;  // 0 = whole dataset
  bool svg = true;

  std::filesystem::path dataset;       // input frames (or gen-data output)
  std::filesystem::path test_dataset;  // eval / probe frames
  std::filesystem::path checkpoint;    // output of pretrain/advtrain, input elsewhere
  std::filesystem::path init_checkpoint;  // advtrain starting point
  std::filesystem::path output;        // attack output dataset
  std::filesystem::path report_dir = "report";
};

// Validates every field; throws ConfigError naming the offending key.
RunConfig build_run_config(const KeyValues& kv);

// Keys accepted by build_run_config, in documentation order.
const std::vector<std::string>& known_keys();

}  // namespace aitvit::cli
