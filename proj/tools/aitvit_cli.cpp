// aitvit: dataset generation, training, attacks, evaluation and attention maps.

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "aitvit/commands.hpp"
#include "aitvit/errors.hpp"
#include "aitvit/run_config.hpp"

namespace {

struct Invocation {
  std::string config_file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flags;  // override key -> value
};

// Flag name, override key, help text.
struct Shortcut {
  const char* flag;
  const char* key;
  const char* help;
};

const std::map<std::string, std::vector<Shortcut>>& shortcuts() {
  static const Shortcut seed{"--seed", "seed", "master seed"};
  static const Shortcut dataset{"--dataset", "paths.dataset", "input (or output) dataset file"};
  static const Shortcut test{"--test", "paths.test_dataset", "held-out dataset"};
  static const Shortcut ckpt{"--checkpoint", "paths.checkpoint", "checkpoint file"};
  static const Shortcut report{"--report-dir", "paths.report_dir", "directory for reports"};
  static const Shortcut kind{"--kind", "attack.kind", "fgm | pgd | bim | pgd_adaptive"};
  static const Shortcut pnr{"--pnr-db", "attack.pnr_db", "PNR in dB (comma list for eval)"};
  static const Shortcut snr{"--snr-db", "attack.snr_db", "SNR in dB for the budget (default: per frame)"};
  static const Shortcut frames{"--max-frames", "eval.max_frames", "use at most this many frames"};
  static const std::map<std::string, std::vector<Shortcut>> table = {
      {"gen-data",
       {seed, dataset, {"--classes", "data.classes", "comma list of scheme names or 'all'"},
        {"--snr-grid", "data.snr_db", "comma list of SNRs in dB, 'full' or 'none'"},
        {"--frames-per-cell", "data.frames_per_cell", "frames per (class, SNR) cell"},
        {"--noise", "data.noise", "awgn | alpha_stable"}}},
      {"pretrain",
       {seed, dataset, test, ckpt, report, {"--epochs", "train.nt_epochs", "training epochs"}}},
      {"advtrain",
       {seed, dataset, test, ckpt, report,
        {"--init", "paths.init_checkpoint", "pretrained checkpoint to start from"},
        {"--epochs", "train.at_epochs", "training epochs"},
        {"--beta", "train.beta", "classification loss weight"}}},
      {"attack",
       {dataset, ckpt, report, kind, pnr, snr, frames,
        {"--out", "paths.output", "adversarial dataset to write"},
        {"--tau", "attack.tau", "L-infinity bound for bim"},
        {"--max-iters", "attack.max_iters", "iteration cap"}}},
      {"eval",
       {dataset, test, ckpt, report, kind, pnr, snr, frames,
        {"--detector", "eval.detector", "auto | on | off"}}},
      {"viz",
       {dataset, ckpt, report, frames, {"--source", "eval.source", "cls | advi | averaged"},
        {"--layer", "eval.layer", "encoder layer (default last)"},
        {"--heatmaps", "eval.heatmaps", "number of heatmaps to export"}}},
  };
  return table;
}

const std::map<std::string, std::string>& descriptions() {
  static const std::map<std::string, std::string> d = {
      {"gen-data", "Generate a synthetic IQ dataset"},
      {"pretrain", "Normal training of the classification head"},
      {"advtrain", "Adversarial training with the AdvI detection head"},
      {"attack", "Attack every frame of a dataset"},
      {"eval", "Accuracy, FNR and detection rate per PNR"},
      {"viz", "Attention heatmaps and high-attention counts"},
  };
  return d;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AiTViT adversarial-defense workbench"};
  app.require_subcommand(1);
  std::map<std::string, Invocation> inv;

  for (const auto& name : aitvit::cli::command_names()) {
    auto* sub = app.add_subcommand(name, descriptions().at(name));
    auto& i = inv[name];
    sub->add_option("-c,--config", i.config_file, "configuration file")->check(CLI::ExistingFile);
    sub->add_option("--set", i.sets, "override, section.key=value (repeatable)");
    for (const auto& s : shortcuts().at(name)) {
      const std::string key = s.key;
      sub->add_option_function<std::string>(
          s.flag, [&i, key](const std::string& v) { i.flags[key] = v; }, s.help);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : aitvit::cli::kExitConfig;
  }

  const auto* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();
  const auto& i = inv.at(command);
  try {
    aitvit::cli::KeyValues kv;
    if (!i.config_file.empty()) kv = aitvit::cli::read_key_values(i.config_file);
    for (const auto& [k, v] : i.flags) kv[k] = v;
    aitvit::cli::apply_overrides(kv, i.sets);
    const auto rc = aitvit::cli::build_run_config(kv);
    return aitvit::cli::run(command, rc, std::cout, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return aitvit::cli::exit_code_for(e);
  }
}
