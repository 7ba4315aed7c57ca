#include "aitvit/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

#include "aitvit/byte_io.hpp"
#include "aitvit/errors.hpp"

namespace aitvit::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_linear(double db) { return std::pow(10.0, db / 10.0); }

// Typed, field-named access to the merged key-value map.
class Fields {
 public:
  explicit Fields(const KeyValues& kv) : kv_(kv) {}

  const std::string* raw(const std::string& key) {
    seen_.insert(key);
    auto it = kv_.find(key);
    return it == kv_.end() ? nullptr : &it->second;
  }

  double real(const std::string& key, double fallback) {
    const auto* v = raw(key);
    return v ? parse_real(key, *v) : fallback;
  }

  std::size_t count(const std::string& key, std::size_t fallback) {
    const auto* v = raw(key);
    if (!v) return fallback;
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc() || p != v->data() + v->size())
      throw ConfigError(key + ": expected a nonnegative integer, got '" + *v + "'");
    return static_cast<std::size_t>(out);
  }

  long integer(const std::string& key, long fallback) {
    const auto* v = raw(key);
    if (!v) return fallback;
    long out = 0;
    auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc() || p != v->data() + v->size())
      throw ConfigError(key + ": expected an integer, got '" + *v + "'");
    return out;
  }

  bool flag(const std::string& key, bool fallback) {
    const auto* v = raw(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
    throw ConfigError(key + ": expected true/false, got '" + *v + "'");
  }

  std::string text(const std::string& key, const std::string& fallback) {
    const auto* v = raw(key);
    return v ? *v : fallback;
  }

  std::vector<double> reals(const std::string& key, const std::vector<double>& fallback) {
    const auto* v = raw(key);
    if (!v) return fallback;
    std::vector<double> out;
    for (const auto& item : split_list(*v)) out.push_back(parse_real(key, item));
    if (out.empty()) throw ConfigError(key + ": empty list");
    return out;
  }

  // Rejects keys nobody asked for.
  void check_unused() const {
    for (const auto& [k, v] : kv_)
      if (!seen_.count(k)) throw ConfigError("unknown configuration key '" + k + "'");
  }

  template <class F>
  void guard(const std::string& section, F&& f) {
    try {
      f();
    } catch (const ConfigError& e) {
      throw ConfigError("[" + section + "] " + e.what());
    }
  }

 private:
  static double parse_real(const std::string& key, const std::string& s) {
    double out = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(out))
      throw ConfigError(key + ": expected a finite number, got '" + s + "'");
    return out;
  }

  const KeyValues& kv_;
  std::set<std::string> seen_;
};

}  // namespace

KeyValues parse_key_values(const std::string& text, const std::string& origin) {
  KeyValues kv;
  std::stringstream ss(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3)
        throw ConfigError(where + ": malformed section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(where + ": empty key");
    kv[section.empty() ? key : section + "." + key] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  return parse_key_values(std::string(bytes.begin(), bytes.end()), path.string());
}

void apply_overrides(KeyValues& base, const std::vector<std::string>& assignments) {
  for (const auto& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("override '" + a + "' is not of the form section.key=value");
    base[trim(a.substr(0, eq))] = trim(a.substr(eq + 1));
  }
}

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "seed",
      "data.classes", "data.snr_db", "data.frames_per_cell", "data.noise", "data.alpha",
      "data.alpha_scale", "data.seed",
      "model.preset", "model.n_c", "model.n_layers", "model.n_heads", "model.kernel",
      "model.stride", "model.head_hidden", "model.n_classes", "model.positional",
      "model.seed",
      "train.nt_epochs", "train.at_epochs", "train.batch", "train.lr", "train.beta",
      "train.optimizer", "train.pnr_db", "train.pgd_iters", "train.pgd_step", "train.seed",
      "train.probe_frames",
      "attack.kind", "attack.pnr_db", "attack.snr_db", "attack.tau", "attack.step",
      "attack.max_iters", "attack.targets_detector", "attack.stop_on_success",
      "eval.detector", "eval.source", "eval.layer", "eval.heatmaps", "eval.max_frames",
      "eval.svg",
      "paths.dataset", "paths.test_dataset", "paths.checkpoint", "paths.init_checkpoint",
      "paths.output", "paths.report_dir"};
  return keys;
}

RunConfig build_run_config(const KeyValues& kv) {
  Fields f(kv);
  RunConfig rc;
  for (const auto& [key, value] : kv)
    if (key.starts_with("model.")) rc.model_given = true;
  const auto seed = static_cast<std::uint64_t>(f.count("seed", 0));

  f.guard("data", [&] {
    auto& d = rc.data;
    d.classes.clear();
    for (const auto& name : split_list(f.text("data.classes", "all"))) {
      if (name == "all") {
        for (std::size_t i = 0; i < signals::kNumSchemes; ++i)
          d.classes.push_back(static_cast<std::uint8_t>(i));
      } else {
        try {
          d.classes.push_back(static_cast<std::uint8_t>(signals::label_from_name(name)));
        } catch (const Error& e) {
          throw ConfigError(std::string("data.classes: ") + e.what());
        }
      }
    }
    const std::string snr = f.text("data.snr_db", "full");
    if (snr == "full")
      d.snr_grid_db = signals::full_snr_grid();
    else if (snr == "none")
      d.snr_grid_db = {signals::kNoNoise};
    else
      d.snr_grid_db = f.reals("data.snr_db", {});
    d.frames_per_cell = f.count("data.frames_per_cell", 1000);
    const std::string noise = f.text("data.noise", "awgn");
    if (noise == "awgn")
      d.noise_model = signals::NoiseModel::awgn;
    else if (noise == "alpha_stable")
      d.noise_model = signals::NoiseModel::awgn_plus_alpha_stable;
    else
      throw ConfigError("data.noise: expected awgn or alpha_stable, got '" + noise + "'");
    d.alpha = f.real("data.alpha", d.alpha);
    d.alpha_scale = f.real("data.alpha_scale", d.alpha_scale);
    d.seed = f.count("data.seed", seed);
    d.validate();
  });

  f.guard("model", [&] {
    const std::string preset = f.text("model.preset", "default");
    auto& m = rc.model;
    if (preset == "tiny") {
      m = AiTViTConfig::tiny();
      m.in_width = signals::kFrameLength;
    } else if (preset != "default") {
      throw ConfigError("model.preset: expected default or tiny, got '" + preset + "'");
    }
    m.n_c = f.count("model.n_c", m.n_c);
    m.n_layers = f.count("model.n_layers", m.n_layers);
    m.n_heads = f.count("model.n_heads", m.n_heads);
    m.kernel = f.count("model.kernel", m.kernel);
    m.stride = f.count("model.stride", m.stride);
    m.head_hidden = f.count("model.head_hidden", m.head_hidden);
    m.n_classes = f.count("model.n_classes", m.n_classes);
    m.positional = f.flag("model.positional", m.positional);
    m.seed = f.count("model.seed", seed);
    m.validate();
  });

  f.guard("train", [&] {
    auto& t = rc.train;
    rc.nt_epochs = f.count("train.nt_epochs", rc.nt_epochs);
    rc.at_epochs = f.count("train.at_epochs", rc.at_epochs);
    t.batch = f.count("train.batch", t.batch);
    t.lr = f.real("train.lr", t.lr);
    t.beta = f.real("train.beta", t.beta);
    t.optimizer = training::optimizer_from_name(f.text("train.optimizer", "adam"));
    t.train_pnr = to_linear(f.real("train.pnr_db", 10.0 * std::log10(t.train_pnr)));
    t.pgd_iters = f.count("train.pgd_iters", t.pgd_iters);
    t.pgd_step = f.real("train.pgd_step", t.pgd_step);
    t.seed = f.count("train.seed", seed);
    rc.probe_frames = f.count("train.probe_frames", rc.probe_frames);
    t.validate();
  });

  f.guard("attack", [&] {
    auto& a = rc.attack;
    a.kind = attacks::kind_from_name(f.text("attack.kind", "pgd"));
    rc.pnr_list_db = f.reals("attack.pnr_db", {0.0});
    for (double db : rc.pnr_list_db) rc.pnr_list.push_back(to_linear(db));
    a.pnr = rc.pnr_list.front();
    if (const auto* s = f.raw("attack.snr_db"); s && *s != "frame")
      rc.attack_snr = to_linear(f.real("attack.snr_db", 0.0));
    a.tau = f.real("attack.tau", a.tau);
    a.step = f.real("attack.step", a.step);
    a.max_iters = f.count("attack.max_iters", a.max_iters);
    a.targets_detector = f.flag("attack.targets_detector", a.targets_detector);
    a.stop_on_success = f.flag("attack.stop_on_success", a.stop_on_success);
    a.validate();
  });

  f.guard("eval", [&] {
    const std::string det = f.text("eval.detector", "auto");
    if (det == "auto")
      rc.detector = DetectorMode::automatic;
    else if (det == "on")
      rc.detector = DetectorMode::on;
    else if (det == "off")
      rc.detector = DetectorMode::off;
    else
      throw ConfigError("eval.detector: expected auto, on or off, got '" + det + "'");
    rc.heatmap_source = eval::source_from_name(f.text("eval.source", "averaged"));
    rc.heatmap_layer = f.integer("eval.layer", -1);
    if (rc.heatmap_layer >= static_cast<long>(rc.model.n_layers))
      throw ConfigError("eval.layer: model has only " + std::to_string(rc.model.n_layers) + " layers");
    rc.heatmap_exports = f.count("eval.heatmaps", rc.heatmap_exports);
    rc.max_frames = f.count("eval.max_frames", 0);
    rc.svg = f.flag("eval.svg", true);
  });

  rc.dataset = f.text("paths.dataset", "");
  rc.test_dataset = f.text("paths.test_dataset", "");
  rc.checkpoint = f.text("paths.checkpoint", "");
  rc.init_checkpoint = f.text("paths.init_checkpoint", "");
  rc.output = f.text("paths.output", "");
  rc.report_dir = f.text("paths.report_dir", "report");

  f.check_unused();
  return rc;
}

}  // namespace aitvit::cli
