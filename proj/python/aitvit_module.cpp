#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "aitvit/attacks.hpp"
#include "aitvit/checkpoint.hpp"
#include "aitvit/commands.hpp"
#include "aitvit/dataset_io.hpp"
#include "aitvit/errors.hpp"
#include "aitvit/eval.hpp"
#include "aitvit/run_config.hpp"
#include "aitvit/training.hpp"

namespace py = pybind11;
using namespace aitvit;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<double> frame_values(const Array& a) {
  if (a.size() != static_cast<py::ssize_t>(signals::kFrameValues))
    throw DimensionError("expected a 2x128 frame, got " + std::to_string(a.size()) + " values");
  return {a.data(), a.data() + a.size()};
}

Array frame_array(std::span<const double> v) {
  Array out({std::size_t{2}, v.size() / 2});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

// (iq [N,2,128], labels [N], snr_db [N])
py::tuple frames_to_arrays(const std::vector<signals::LabeledFrame>& frames) {
  Array iq({frames.size(), std::size_t{2}, signals::kFrameLength});
  py::array_t<std::uint8_t> labels(frames.size());
  Array snr(frames.size());
  double* p = iq.mutable_data();
  for (std::size_t i = 0; i < frames.size(); ++i) {
    std::copy(frames[i].iq.begin(), frames[i].iq.end(), p + i * signals::kFrameValues);
    labels.mutable_data()[i] = frames[i].label;
    snr.mutable_data()[i] = frames[i].snr_db;
  }
  return py::make_tuple(iq, labels, snr);
}

std::vector<signals::LabeledFrame> arrays_to_frames(const Array& iq, const py::array_t<std::uint8_t>& labels,
                                                    const Array& snr) {
  const std::size_t n = labels.size();
  if (iq.size() != static_cast<py::ssize_t>(n * signals::kFrameValues) || snr.size() != labels.size())
    throw DimensionError("iq, labels and snr_db disagree in length");
  std::vector<signals::LabeledFrame> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(iq.data() + i * signals::kFrameValues, signals::kFrameValues, out[i].iq.begin());
    out[i].label = labels.data()[i];
    out[i].snr_db = snr.data()[i];
  }
  return out;
}

AiTViTConfig preset(const std::string& name, std::uint64_t seed) {
  AiTViTConfig c;
  if (name == "tiny") {
    c = AiTViTConfig::tiny();
    c.in_width = 128;
  } else if (name != "default") {
    throw ConfigError("unknown preset '" + name + "'");
  }
  c.seed = seed;
  return c;
}

}  // namespace

PYBIND11_MODULE(_aitvit, m) {
  m.doc() = "Transformer modulation classifier with an adversarial indicator token";

  auto base = py::register_exception<Error>(m, "AitvitError");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());

  m.attr("SCHEMES") = std::vector<std::string>(signals::kSchemeNames.begin(), signals::kSchemeNames.end());

  m.def("epsilon_from_pnr",
        py::overload_cast<double, double, double>(&attacks::epsilon_from_pnr),
        py::arg("pnr"), py::arg("snr"), py::arg("x0_energy"),
        "sqrt(pnr * energy / (snr + 1)) with linear ratios");

  m.def(
      "generate_dataset",
      [](std::vector<std::string> classes, std::vector<double> snr_db, std::size_t frames_per_cell,
         std::uint64_t seed) {
        signals::DatasetSpec s;
        for (const auto& c : classes) s.classes.push_back(static_cast<std::uint8_t>(signals::label_from_name(c)));
        s.snr_grid_db = std::move(snr_db);
        s.frames_per_cell = frames_per_cell;
        s.seed = seed;
        return frames_to_arrays(signals::generate_dataset(s));
      },
      py::arg("classes"), py::arg("snr_db"), py::arg("frames_per_cell"), py::arg("seed") = 0,
      "Returns (iq [N,2,128], labels [N], snr_db [N]).");

  m.def("read_dataset", [](const std::filesystem::path& p) { return frames_to_arrays(signals::read_dataset(p)); });
  m.def(
      "write_dataset",
      [](const std::filesystem::path& p, const Array& iq, const py::array_t<std::uint8_t>& labels,
         const Array& snr) { signals::write_dataset(p, arrays_to_frames(iq, labels, snr)); },
      py::arg("path"), py::arg("iq"), py::arg("labels"), py::arg("snr_db"));

  m.def("fnr", [](std::size_t tp, std::size_t tn, std::size_t fp, std::size_t fn) {
    return eval::fnr({tp, tn, fp, fn});
  });

  py::class_<AiTViT>(m, "Model")
      .def(py::init([](const std::string& name, std::uint64_t seed) {
             return AiTViT::initialize(preset(name, seed));
           }),
           py::arg("preset") = "tiny", py::arg("seed") = 0)
      .def_static("load",
                  [](const std::filesystem::path& p) {
                    auto ck = checkpoint::load(p);
                    return AiTViT(ck.config, ck.params);
                  })
      .def("save",
           [](const AiTViT& self, const std::filesystem::path& p) { checkpoint::save(p, self, {}); })
      .def_property_readonly("n_patches", [](const AiTViT& self) { return self.config().n_patches(); })
      .def_property_readonly("checksum", [](const AiTViT& self) { return self.params().checksum(); })
      .def("forward",
           [](const AiTViT& self, const Array& frame) {
             const auto out = self.forward(Tensor::constant({2, signals::kFrameLength}, frame_values(frame)));
             return py::make_tuple(std::vector<double>(out.f1_logits.data().begin(), out.f1_logits.data().end()),
                                   std::vector<double>(out.f2_logits.data().begin(), out.f2_logits.data().end()));
           },
           "Returns (classifier logits, detector logits).")
      .def("decide",
           [](const AiTViT& self, const Array& frame, bool detector) {
             const auto d = eval::classify_and_detect(self, frame_values(frame), detector);
             return py::make_tuple(d.label, d.flagged);
           },
           py::arg("frame"), py::arg("detector") = true)
      .def("attack",
           [](const AiTViT& self, const Array& frame, std::size_t label, const std::string& kind, double pnr_db,
              double snr_db, double tau, double step, std::size_t max_iters, bool targets_detector) {
             attacks::AttackSpec s;
             s.kind = attacks::kind_from_name(kind);
             s.pnr = std::pow(10.0, pnr_db / 10.0);
             s.tau = tau;
             s.step = step;
             s.max_iters = max_iters;
             s.targets_detector = targets_detector;
             const auto r = attacks::run_attack(self, frame_values(frame), label, std::pow(10.0, snr_db / 10.0), s);
             py::dict d;
             d["x_adv"] = frame_array(r.x_adv);
             d["iterations"] = r.iterations;
             d["fooled"] = r.fooled_classifier;
             d["evaded"] = r.evaded_detector;
             d["norm"] = r.perturbation_norm;
             d["epsilon"] = r.epsilon;
             d["degenerate"] = r.degenerate;
             return d;
           },
           py::arg("frame"), py::arg("label"), py::arg("kind") = "pgd", py::arg("pnr_db") = 0.0,
           py::arg("snr_db") = 10.0, py::arg("tau") = 0.01, py::arg("step") = 0.001, py::arg("max_iters") = 500,
           py::arg("targets_detector") = true)
      .def("heatmap",
           [](const AiTViT& self, const Array& frame, const std::string& source, long layer) {
             const auto h = eval::frame_heatmap(self, frame_values(frame), eval::source_from_name(source), layer);
             return py::make_tuple(frame_array(h.values), h.high_count);
           },
           py::arg("frame"), py::arg("source") = "averaged", py::arg("layer") = -1)
      .def("pretrain",
           [](AiTViT& self, const Array& iq, const py::array_t<std::uint8_t>& labels, const Array& snr,
              std::size_t epochs, std::size_t batch, double lr, std::uint64_t seed) {
             training::TrainConfig c;
             c.epochs = epochs;
             c.batch = batch;
             c.lr = lr;
             c.seed = seed;
             std::vector<double> loss;
             for (const auto& e : training::pretrain_nt(self, arrays_to_frames(iq, labels, snr), c).epochs)
               loss.push_back(e.loss1);
             return loss;
           },
           py::arg("iq"), py::arg("labels"), py::arg("snr_db"), py::arg("epochs") = 1, py::arg("batch") = 64,
           py::arg("lr") = 1e-3, py::arg("seed") = 0, "Per-epoch mean classification loss.")
      .def("clean_accuracy", [](const AiTViT& self, const Array& iq, const py::array_t<std::uint8_t>& labels,
                                const Array& snr) {
        return training::clean_accuracy(self, arrays_to_frames(iq, labels, snr));
      });

  m.def(
      "run_command",
      [](const std::string& command, const std::string& config_text, const std::vector<std::string>& overrides) {
        std::ostringstream out, err;
        int code;
        try {
          auto kv = cli::parse_key_values(config_text);
          cli::apply_overrides(kv, overrides);
          code = cli::run(command, cli::build_run_config(kv), out, err);
        } catch (const std::exception& e) {
          err << "error: " << e.what() << "\n";
          code = cli::exit_code_for(e);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("command"), py::arg("config") = "", py::arg("overrides") = std::vector<std::string>{},
      "Runs a CLI subcommand; returns (exit code, stdout text, stderr text).");
}
