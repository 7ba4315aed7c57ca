#include "aitvit/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "aitvit/byte_io.hpp"
#include "aitvit/checkpoint.hpp"
#include "aitvit/dataset_io.hpp"
#include "aitvit/errors.hpp"

namespace aitvit::cli {

namespace fs = std::filesystem;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const DataError*>(&e)) return kExitData;
  if (dynamic_cast<const NumericalError*>(&e)) return kExitNumerical;
  return kExitFailure;
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"gen-data", "pretrain", "advtrain",
                                                 "attack",   "eval",     "viz"};
  return names;
}

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

const fs::path& require(const fs::path& p, const char* key) {
  if (p.empty()) throw ConfigError(std::string(key) + " is required for this command");
  return p;
}

void write_text(const fs::path& path, const std::string& text) {
  io::write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

fs::path report_path(const RunConfig& rc, const std::string& name) {
  fs::create_directories(rc.report_dir);
  return rc.report_dir / name;
}

std::vector<signals::LabeledFrame> load_frames(const fs::path& path, std::size_t limit) {
  auto frames = signals::read_dataset(path);
  if (frames.empty()) throw DataError("dataset '" + path.string() + "' holds no frames");
  if (limit && frames.size() > limit) frames.resize(limit);
  return frames;
}

std::vector<signals::LabeledFrame> probe_frames(const RunConfig& rc) {
  if (rc.test_dataset.empty() || rc.probe_frames == 0) return {};
  return load_frames(rc.test_dataset, rc.probe_frames);
}

std::string train_log_csv(const training::TrainLog& log) {
  std::string s = "epoch,loss1,loss2,clean_accuracy,detection_rate\n";
  for (const auto& e : log.epochs)
    s += std::to_string(e.epoch) + "," + num(e.loss1) + "," + num(e.loss2) + "," +
         num(e.clean_accuracy) + "," + num(e.detection_rate) + "\n";
  return s;
}

training::EpochCallback epoch_printer(std::ostream& out, const char* stage) {
  return [&out, stage](const training::EpochLog& e) {
    out << stage << " epoch " << e.epoch << ": loss1=" << num(e.loss1) << " loss2=" << num(e.loss2)
        << " clean_acc=" << num(e.clean_accuracy) << " det_rate=" << num(e.detection_rate) << "\n";
  };
}

checkpoint::Checkpoint load_model(const RunConfig& rc, const fs::path& path) {
  return checkpoint::load(path, rc.model_given ? std::optional<AiTViTConfig>(rc.model) : std::nullopt);
}

bool detector_active(const RunConfig& rc, const checkpoint::Provenance& p) {
  switch (rc.detector) {
    case DetectorMode::on: return true;
    case DetectorMode::off: return false;
    case DetectorMode::automatic: return p.detector_trained();
  }
  return true;
}

}  // namespace

void gen_data(const RunConfig& rc, std::ostream& out) {
  const auto& path = require(rc.dataset, "paths.dataset");
  rc.data.validate();
  signals::DatasetWriter writer(path);
  std::size_t n = 0;
  signals::generate_dataset(rc.data, [&](const signals::LabeledFrame& f) {
    writer.append(f);
    ++n;
  });
  writer.close();
  out << "wrote " << n << " frames to " << path.string() << "\n";
}

void pretrain(const RunConfig& rc, std::ostream& out) {
  const auto data = load_frames(require(rc.dataset, "paths.dataset"), 0);
  const auto& ckpt = require(rc.checkpoint, "paths.checkpoint");
  auto model = AiTViT::initialize(rc.model);
  auto cfg = rc.train;
  cfg.epochs = rc.nt_epochs;
  const auto log = training::pretrain_nt(model, data, cfg, probe_frames(rc), epoch_printer(out, "nt"));
  checkpoint::Provenance p{checkpoint::Stage::pretrained, cfg.seed,
                           static_cast<std::uint32_t>(cfg.epochs), 1.0, 0.0};
  checkpoint::save(ckpt, model, p);
  write_text(report_path(rc, "pretrain_log.csv"), train_log_csv(log));
  out << "saved " << ckpt.string() << "\n";
}

void advtrain(const RunConfig& rc, std::ostream& out) {
  const auto data = load_frames(require(rc.dataset, "paths.dataset"), 0);
  const auto& ckpt = require(rc.checkpoint, "paths.checkpoint");
  AiTViT model = rc.init_checkpoint.empty()
                     ? AiTViT::initialize(rc.model)
                     : [&] {
                         auto c = load_model(rc, rc.init_checkpoint);
                         return AiTViT(c.config, c.params);
                       }();
  auto cfg = rc.train;
  cfg.epochs = rc.at_epochs;
  const auto log =
      training::adversarial_train(model, data, cfg, probe_frames(rc), epoch_printer(out, "at"));
  checkpoint::Provenance p{checkpoint::Stage::adversarial, cfg.seed,
                           static_cast<std::uint32_t>(cfg.epochs), cfg.beta, cfg.train_pnr};
  checkpoint::save(ckpt, model, p);
  write_text(report_path(rc, "advtrain_log.csv"), train_log_csv(log));
  out << "saved " << ckpt.string() << "\n";
}

void attack(const RunConfig& rc, std::ostream& out) {
  const auto frames = load_frames(require(rc.dataset, "paths.dataset"), rc.max_frames);
  const auto& dst = require(rc.output, "paths.output");
  const auto ck = load_model(rc, require(rc.checkpoint, "paths.checkpoint"));
  const AiTViT model(ck.config, ck.params);
  const auto set = eval::attack_frames(model, frames, rc.attack, rc.attack_snr);
  signals::write_dataset(dst, set.frames);

  std::string csv = "frame,fooled,evaded,norm,iters,epsilon,degenerate\n";
  std::size_t ok = 0;
  for (std::size_t i = 0; i < set.results.size(); ++i) {
    const auto& r = set.results[i];
    csv += std::to_string(i) + "," + std::to_string(int(r.fooled_classifier)) + "," +
           std::to_string(int(r.evaded_detector)) + "," + num(r.perturbation_norm) + "," +
           std::to_string(r.iterations) + "," + num(r.epsilon) + "," +
           std::to_string(int(r.degenerate)) + "\n";
    ok += r.succeeded(rc.attack.targets_detector) ? 1 : 0;
    if (r.degenerate) out << "frame " << i << ": degenerate gradient, attack aborted\n";
  }
  write_text(report_path(rc, "attack_results.csv"), csv);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", set.results.front().epsilon);
  out << attacks::kind_name(rc.attack.kind) << ": epsilon[0] = " << buf << "\n";
  out << ok << "/" << frames.size() << " attacks succeeded, " << set.degenerate
      << " degenerate; wrote " << dst.string() << "\n";
}

void evaluate(const RunConfig& rc, std::ostream& out) {
  const fs::path src = rc.test_dataset.empty() ? rc.dataset : rc.test_dataset;
  const auto benign = load_frames(require(src, "paths.test_dataset"), rc.max_frames);
  const auto ck = load_model(rc, require(rc.checkpoint, "paths.checkpoint"));
  const AiTViT model(ck.config, ck.params);
  const bool active = detector_active(rc, ck.provenance);

  std::string csv =
      "pnr_db,attack,n_benign,n_adversarial,tp,tn,fp,fn,accuracy,detector_accuracy,fnr,"
      "detection_rate,clean_accuracy,adversarial_accuracy,mean_high_count,degenerate\n";
  std::string summary = "checkpoint " + rc.checkpoint.filename().string() + ", detector " +
                        (active ? "active" : "inactive") + ", attack " +
                        attacks::kind_name(rc.attack.kind) + "\n";
  std::vector<double> acc, fnrs;
  for (std::size_t i = 0; i < rc.pnr_list.size(); ++i) {
    auto spec = rc.attack;
    spec.pnr = rc.pnr_list[i];
    const auto set = eval::attack_frames(model, benign, spec, rc.attack_snr);
    const auto outcomes = eval::evaluate_outcomes(model, benign, set.frames, active);
    const auto r = eval::report(outcomes);
    const double hc = eval::mean_high_count(model, set.frames, rc.heatmap_source, rc.heatmap_layer);
    const auto& c = r.counts;
    csv += num(rc.pnr_list_db[i]) + "," + attacks::kind_name(spec.kind) + "," +
           std::to_string(benign.size()) + "," + std::to_string(set.frames.size()) + "," +
           std::to_string(c.tp) + "," + std::to_string(c.tn) + "," + std::to_string(c.fp) + "," +
           std::to_string(c.fn) + "," + num(r.accuracy) + "," + num(r.detector_accuracy) + "," +
           num(r.fnr) + "," + num(r.detection_rate) + "," + num(r.clean_accuracy) + "," +
           num(r.adversarial_accuracy) + "," + num(hc) + "," + std::to_string(set.degenerate) + "\n";
    char line[256];
    std::snprintf(line, sizeof line,
                  "pnr %6.1f dB: accuracy %.4f  fnr %.4f  detection %.4f  (tp %zu tn %zu fp %zu fn %zu)\n",
                  rc.pnr_list_db[i], r.accuracy, r.fnr, r.detection_rate, c.tp, c.tn, c.fp, c.fn);
    summary += line;
    acc.push_back(r.accuracy);
    fnrs.push_back(r.fnr);
  }
  write_text(report_path(rc, "eval_report.csv"), csv);
  write_text(report_path(rc, "eval_summary.txt"), summary);
  if (rc.svg)
    write_text(report_path(rc, "eval_plot.svg"),
               svg_line_plot("Defense under attack", "PNR (dB)", rc.pnr_list_db,
                             {{"accuracy", acc}, {"FNR", fnrs}}));
  out << summary;
}

void viz(const RunConfig& rc, std::ostream& out) {
  const auto frames = load_frames(require(rc.dataset, "paths.dataset"), rc.max_frames);
  const auto ck = load_model(rc, require(rc.checkpoint, "paths.checkpoint"));
  const AiTViT model(ck.config, ck.params);
  std::string counts = "frame,label,high_count,degenerate\n";
  double total = 0.0;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto h = eval::frame_heatmap(model, frames[i].iq, rc.heatmap_source, rc.heatmap_layer);
    total += static_cast<double>(h.high_count);
    counts += std::to_string(i) + "," + std::to_string(frames[i].label) + "," +
              std::to_string(h.high_count) + "," + std::to_string(int(h.degenerate)) + "\n";
    if (i < rc.heatmap_exports) {
      char stem[32];
      std::snprintf(stem, sizeof stem, "heatmap_%04zu", i);
      write_text(report_path(rc, std::string(stem) + ".csv"), eval::heatmap_csv(h));
      io::write_file(report_path(rc, std::string(stem) + ".pgm"), eval::heatmap_pgm(h));
    }
  }
  write_text(report_path(rc, "heatmap_counts.csv"), counts);
  out << "mean high_count (" << eval::source_name(rc.heatmap_source) << ") over " << frames.size()
      << " frames: " << num(total / static_cast<double>(frames.size())) << "\n";
}

int run(const std::string& command, const RunConfig& rc, std::ostream& out, std::ostream& err) {
  try {
    if (command == "gen-data") gen_data(rc, out);
    else if (command == "pretrain") pretrain(rc, out);
    else if (command == "advtrain") advtrain(rc, out);
    else if (command == "attack") attack(rc, out);
    else if (command == "eval") evaluate(rc, out);
    else if (command == "viz") viz(rc, out);
    else throw ConfigError("unknown command '" + command + "'");
    return kExitOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

std::string svg_line_plot(const std::string& title, const std::string& x_label,
                          const std::vector<double>& x, const std::vector<Series>& series) {
  constexpr double W = 480, H = 320, L = 56, R = 110, T = 36, B = 48;
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e"};
  double x0 = x.empty() ? 0 : *std::min_element(x.begin(), x.end());
  double x1 = x.empty() ? 1 : *std::max_element(x.begin(), x.end());
  if (x1 == x0) x1 = x0 + 1;
  const double y0 = 0.0, y1 = 1.0;
  auto px = [&](double v) { return L + (v - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double v) { return H - B - (std::clamp(v, y0, y1) - y0) / (y1 - y0) * (H - T - B); };
  char buf[256];
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"320\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf,
                "<text x=\"%g\" y=\"22\" font-size=\"14\" text-anchor=\"middle\">%s</text>\n",
                (L + W - R) / 2, title.c_str());
  s += buf;
  std::snprintf(buf, sizeof buf,
                "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n"
                "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n",
                L, H - B, W - R, H - B, L, T, L, H - B);
  s += buf;
  for (double v : {0.0, 0.5, 1.0}) {
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%g\" y=\"%g\" font-size=\"11\" text-anchor=\"end\">%.1f</text>\n", L - 6,
                  py(v) + 4, v);
    s += buf;
  }
  for (double v : x) {
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%g\" y=\"%g\" font-size=\"11\" text-anchor=\"middle\">%g</text>\n", px(v),
                  H - B + 16, v);
    s += buf;
  }
  std::snprintf(buf, sizeof buf,
                "<text x=\"%g\" y=\"%g\" font-size=\"12\" text-anchor=\"middle\">%s</text>\n",
                (L + W - R) / 2, H - 10, x_label.c_str());
  s += buf;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = colors[k % 4];
    s += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < x.size() && i < series[k].y.size(); ++i) {
      if (std::isnan(series[k].y[i])) continue;
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(x[i]), py(series[k].y[i]));
      s += buf;
    }
    s += "\"/>\n";
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%g\" y=\"%g\" font-size=\"12\" fill=\"%s\">%s</text>\n", W - R + 10,
                  T + 16.0 * static_cast<double>(k + 1), color, series[k].name.c_str());
    s += buf;
  }
  s += "</svg>\n";
  return s;
}

}  // namespace aitvit::cli
