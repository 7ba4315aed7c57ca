#include "aitvit/signals.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "aitvit/errors.hpp"

namespace aitvit::signals {

using cplx = std::complex<double>;
using std::numbers::pi;

namespace {

constexpr double kGfskBT = 0.35;
constexpr double kFskIndex = 0.5;
constexpr double kWbfmDeviation = 0.1;  // cycles/sample per unit-RMS message
constexpr double kAmDepth = 0.3;
constexpr double kMessageCutoff = 1.0 / 16.0;  // 1/8 of Nyquist, cycles/sample
constexpr std::size_t kFirTaps = 65;

void check_label(std::size_t label) {
  if (label >= kNumSchemes)
    throw IndexError("unknown modulation label " + std::to_string(label) +
                     " (expected < " + std::to_string(kNumSchemes) + ")");
}

std::vector<cplx> square_grid(int levels) {
  std::vector<cplx> pts;
  double energy = 0.0;
  for (int i = 0; i < levels; ++i)
    for (int q = 0; q < levels; ++q) {
      const cplx p(2.0 * i - (levels - 1), 2.0 * q - (levels - 1));
      pts.push_back(p);
      energy += std::norm(p);
    }
  const double s = std::sqrt(energy / static_cast<double>(pts.size()));
  for (auto& p : pts) p /= s;
  return pts;
}

std::vector<cplx> psk(int order, double offset = 0.0) {
  std::vector<cplx> pts;
  for (int k = 0; k < order; ++k) pts.push_back(std::polar(1.0, offset + 2.0 * pi * k / order));
  return pts;
}

// Hamming-windowed sinc low-pass, unit DC gain.
std::vector<double> lowpass_taps(double cutoff, std::size_t taps) {
  std::vector<double> h(taps);
  const double mid = static_cast<double>(taps - 1) / 2.0;
  double total = 0.0;
  for (std::size_t n = 0; n < taps; ++n) {
    const double t = static_cast<double>(n) - mid;
    const double sinc = t == 0.0 ? 2.0 * cutoff : std::sin(2.0 * pi * cutoff * t) / (pi * t);
    const double w = 0.54 - 0.46 * std::cos(2.0 * pi * static_cast<double>(n) / static_cast<double>(taps - 1));
    h[n] = sinc * w;
    total += h[n];
  }
  for (double& v : h) v /= total;
  return h;
}

std::vector<double> hilbert_taps(std::size_t taps) {
  std::vector<double> h(taps, 0.0);
  const auto mid = static_cast<long>(taps - 1) / 2;
  for (std::size_t n = 0; n < taps; ++n) {
    const long k = static_cast<long>(n) - mid;
    if (k % 2 == 0) continue;
    const double w = 0.54 - 0.46 * std::cos(2.0 * pi * static_cast<double>(n) / static_cast<double>(taps - 1));
    h[n] = 2.0 / (pi * static_cast<double>(k)) * w;
  }
  return h;
}

template <class T>
std::vector<T> convolve_valid(const std::vector<T>& x, const std::vector<double>& h) {
  if (x.size() < h.size()) return {};
  std::vector<T> y(x.size() - h.size() + 1, T{});
  for (std::size_t i = 0; i < y.size(); ++i) {
    T acc{};
    for (std::size_t k = 0; k < h.size(); ++k) acc += x[i + h.size() - 1 - k] * h[k];
    y[i] = acc;
  }
  return y;
}

void normalize(std::vector<cplx>& s) {
  double p = 0.0;
  for (const auto& v : s) p += std::norm(v);
  p /= static_cast<double>(s.size());
  if (p <= 0.0) return;
  const double g = 1.0 / std::sqrt(p);
  for (auto& v : s) v *= g;
}

std::vector<cplx> shaped_symbols(std::size_t label, std::size_t length, Rng& rng) {
  const auto taps = rrc_taps();
  const std::size_t needed = length + taps.size() + kSamplesPerSymbol;
  const std::size_t nsym = needed / kSamplesPerSymbol + 1;
  const auto syms = draw_symbols(label, nsym, rng);
  std::vector<cplx> up(nsym * kSamplesPerSymbol, cplx{});
  for (std::size_t i = 0; i < nsym; ++i) up[i * kSamplesPerSymbol] = syms[i];
  auto y = convolve_valid(up, taps);
  const std::size_t offset = std::uniform_int_distribution<std::size_t>(0, kSamplesPerSymbol - 1)(rng);
  return {y.begin() + static_cast<std::ptrdiff_t>(offset),
          y.begin() + static_cast<std::ptrdiff_t>(offset + length)};
}

std::vector<cplx> continuous_phase_fsk(bool gaussian, std::size_t length, Rng& rng) {
  const std::size_t span = 4;
  std::vector<double> g;
  if (gaussian) {
    const double a = std::sqrt(2.0 / std::log(2.0)) * pi * kGfskBT;
    const auto n = span * kSamplesPerSymbol + 1;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double t = (static_cast<double>(i) - static_cast<double>(n - 1) / 2.0) /
                       static_cast<double>(kSamplesPerSymbol);
      g.push_back(std::exp(-a * a * t * t));
      total += g.back();
    }
    for (double& v : g) v /= total;
  } else {
    g = {1.0};
  }
  const std::size_t nsym = (length + g.size()) / kSamplesPerSymbol + 2;
  std::bernoulli_distribution bit(0.5);
  std::vector<double> nrz;
  nrz.reserve(nsym * kSamplesPerSymbol);
  for (std::size_t i = 0; i < nsym; ++i) {
    const double a = bit(rng) ? 1.0 : -1.0;
    for (std::size_t k = 0; k < kSamplesPerSymbol; ++k) nrz.push_back(a);
  }
  const auto freq = convolve_valid(nrz, g);
  std::uniform_real_distribution<double> ph(0.0, 2.0 * pi);
  double phase = ph(rng);
  std::vector<cplx> out(length);
  for (std::size_t i = 0; i < length; ++i) {
    phase += pi * kFskIndex * freq[i] / static_cast<double>(kSamplesPerSymbol);
    out[i] = std::polar(1.0, phase);
  }
  return out;
}

// Band-limited Gaussian message with unit RMS.
std::vector<double> analog_message(std::size_t length, Rng& rng) {
  const auto h = lowpass_taps(kMessageCutoff, kFirTaps);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<double> w(length + h.size() - 1);
  for (double& v : w) v = n01(rng);
  auto m = convolve_valid(w, h);
  double p = 0.0;
  for (double v : m) p += v * v;
  const double g = 1.0 / std::sqrt(p / static_cast<double>(m.size()));
  for (double& v : m) v *= g;
  return m;
}

std::vector<cplx> analog(Scheme s, std::size_t length, Rng& rng) {
  std::vector<cplx> out(length);
  if (s == Scheme::AM_SSB) {
    const auto h = hilbert_taps(kFirTaps);
    const std::size_t half = (h.size() - 1) / 2;
    const auto m = analog_message(length + h.size() - 1, rng);
    const auto q = convolve_valid(m, h);
    for (std::size_t i = 0; i < length; ++i) out[i] = cplx(m[i + half], q[i]);
    return out;
  }
  const auto m = analog_message(length, rng);
  if (s == Scheme::WBFM) {
    std::uniform_real_distribution<double> ph(0.0, 2.0 * pi);
    double phase = ph(rng);
    for (std::size_t i = 0; i < length; ++i) {
      phase += 2.0 * pi * kWbfmDeviation * m[i];
      out[i] = std::polar(1.0, phase);
    }
  } else {
    for (std::size_t i = 0; i < length; ++i) out[i] = cplx(1.0 + kAmDepth * m[i], 0.0);
  }
  return out;
}

}  // namespace

std::size_t label_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kNumSchemes; ++i)
    if (kSchemeNames[i] == name) return i;
  throw IndexError("unknown modulation scheme '" + std::string(name) + "'");
}

std::vector<double> full_snr_grid() {
  std::vector<double> g;
  for (int s = -20; s <= 18; s += 2) g.push_back(s);
  return g;
}

DatasetSpec DatasetSpec::full(std::size_t frames_per_cell, std::uint64_t seed) {
  DatasetSpec s;
  for (std::size_t i = 0; i < kNumSchemes; ++i) s.classes.push_back(static_cast<std::uint8_t>(i));
  s.snr_grid_db = full_snr_grid();
  s.frames_per_cell = frames_per_cell;
  s.seed = seed;
  return s;
}

void DatasetSpec::validate() const {
  if (classes.empty()) throw ConfigError("dataset spec: empty class list");
  for (auto c : classes)
    if (c >= kNumSchemes) throw ConfigError("dataset spec: class " + std::to_string(c) + " out of range");
  if (snr_grid_db.empty()) throw ConfigError("dataset spec: empty SNR grid");
  for (double s : snr_grid_db)
    if (s != kNoNoise && !(s >= -20.0 && s <= 18.0))
      throw ConfigError("dataset spec: SNR " + std::to_string(s) + " dB outside [-20, 18]");
  if (frames_per_cell < 1) throw ConfigError("dataset spec: frames_per_cell must be >= 1");
  if (noise_model == NoiseModel::awgn_plus_alpha_stable) {
    if (!(alpha > 0.0 && alpha <= 2.0))
      throw ParameterError("dataset spec: alpha must lie in (0, 2]");
    if (!(alpha_scale >= 0.0)) throw ParameterError("dataset spec: alpha_scale must be >= 0");
  }
}

std::size_t DatasetSpec::frame_count() const {
  return classes.size() * snr_grid_db.size() * frames_per_cell;
}

double average_power(const IQ& iq) {
  double p = 0.0;
  for (double v : iq) p += v * v;
  return p / static_cast<double>(kFrameLength);
}

void normalize_power(IQ& iq) {
  const double p = average_power(iq);
  if (p <= 0.0) return;
  const double g = 1.0 / std::sqrt(p);
  for (double& v : iq) v *= g;
}

std::vector<cplx> constellation(std::size_t label) {
  check_label(label);
  switch (static_cast<Scheme>(label)) {
    case Scheme::BPSK: return {cplx(1, 0), cplx(-1, 0)};
    case Scheme::QPSK: return psk(4, pi / 4);
    case Scheme::PSK8: return psk(8);
    case Scheme::QAM16: return square_grid(4);
    case Scheme::QAM64: return square_grid(8);
    case Scheme::PAM4: {
      const double s = std::sqrt(5.0);
      return {cplx(-3 / s, 0), cplx(-1 / s, 0), cplx(1 / s, 0), cplx(3 / s, 0)};
    }
    default: return {};
  }
}

std::vector<cplx> draw_symbols(std::size_t label, std::size_t count, Rng& rng) {
  const auto alphabet = constellation(label);
  if (alphabet.empty())
    throw IndexError("scheme " + std::string(kSchemeNames[label]) + " has no symbol alphabet");
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::vector<cplx> out(count);
  for (auto& s : out) s = alphabet[pick(rng)];
  return out;
}

std::vector<double> rrc_taps(std::size_t span_symbols) {
  const double beta = kRolloff;
  const auto sps = static_cast<double>(kSamplesPerSymbol);
  const std::size_t n = span_symbols * kSamplesPerSymbol + 1;
  std::vector<double> h(n);
  double energy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = (static_cast<double>(i) - static_cast<double>(n - 1) / 2.0) / sps;
    double v;
    if (t == 0.0) {
      v = 1.0 - beta + 4.0 * beta / pi;
    } else if (std::abs(std::abs(t) - 1.0 / (4.0 * beta)) < 1e-12) {
      v = beta / std::numbers::sqrt2 *
          ((1.0 + 2.0 / pi) * std::sin(pi / (4.0 * beta)) +
           (1.0 - 2.0 / pi) * std::cos(pi / (4.0 * beta)));
    } else {
      v = (std::sin(pi * t * (1.0 - beta)) + 4.0 * beta * t * std::cos(pi * t * (1.0 + beta))) /
          (pi * t * (1.0 - (4.0 * beta * t) * (4.0 * beta * t)));
    }
    h[i] = v;
    energy += v * v;
  }
  const double g = 1.0 / std::sqrt(energy);
  for (double& v : h) v *= g;
  return h;
}

std::vector<cplx> modulate_baseband(std::size_t label, std::size_t length, Rng& rng) {
  check_label(label);
  std::vector<cplx> s;
  switch (static_cast<Scheme>(label)) {
    case Scheme::CPFSK: s = continuous_phase_fsk(false, length, rng); break;
    case Scheme::GFSK: s = continuous_phase_fsk(true, length, rng); break;
    case Scheme::WBFM:
    case Scheme::AM_SSB:
    case Scheme::AM_DSB: s = analog(static_cast<Scheme>(label), length, rng); break;
    default: s = shaped_symbols(label, length, rng); break;
  }
  normalize(s);
  return s;
}

IQ modulate(std::size_t label, Rng& rng) {
  const auto s = modulate_baseband(label, kFrameLength, rng);
  IQ iq{};
  for (std::size_t i = 0; i < kFrameLength; ++i) {
    iq[i] = s[i].real();
    iq[kFrameLength + i] = s[i].imag();
  }
  return iq;
}

IQ add_awgn(const IQ& frame, double snr_db, Rng& rng) {
  if (std::isinf(snr_db) && snr_db > 0) return frame;
  const double p = average_power(frame);
  if (!(p > 0.0)) throw ContractError("add_awgn: frame has zero power");
  const double noise_power = p / std::pow(10.0, snr_db / 10.0);
  std::normal_distribution<double> n(0.0, std::sqrt(noise_power / 2.0));
  IQ out = frame;
  for (double& v : out) v += n(rng);
  return out;
}

double sample_alpha_stable(double alpha, Rng& rng) {
  if (!(alpha > 0.0 && alpha <= 2.0))
    throw ParameterError("alpha-stable: alpha " + std::to_string(alpha) + " not in (0, 2]");
  std::uniform_real_distribution<double> u(-pi / 2.0, pi / 2.0);
  std::exponential_distribution<double> e(1.0);
  double v = u(rng);
  while (v == -pi / 2.0) v = u(rng);
  double w = e(rng);
  while (w == 0.0) w = e(rng);
  if (alpha == 1.0) return std::tan(v);
  return std::sin(alpha * v) / std::pow(std::cos(v), 1.0 / alpha) *
         std::pow(std::cos(v - alpha * v) / w, (1.0 - alpha) / alpha);
}

IQ add_alpha_stable(const IQ& frame, double alpha, double scale, Rng& rng) {
  if (!(alpha > 0.0 && alpha <= 2.0))
    throw ParameterError("alpha-stable: alpha " + std::to_string(alpha) + " not in (0, 2]");
  if (!(scale >= 0.0)) throw ParameterError("alpha-stable: scale must be >= 0");
  if (scale == 0.0) return frame;
  IQ out = frame;
  for (double& v : out) v += scale * sample_alpha_stable(alpha, rng);
  return out;
}

IQ preprocess_impulsive(const IQ& frame) {
  IQ out{};
  for (std::size_t rail = 0; rail < 2; ++rail) {
    const double* x = frame.data() + rail * kFrameLength;
    for (std::size_t i = 0; i < kFrameLength; ++i) {
      std::array<double, 5> w{};
      for (int k = -2; k <= 2; ++k) {
        const long j = std::clamp(static_cast<long>(i) + k, 0L, static_cast<long>(kFrameLength) - 1);
        w[static_cast<std::size_t>(k + 2)] = x[j];
      }
      std::nth_element(w.begin(), w.begin() + 2, w.end());
      out[rail * kFrameLength + i] = w[2];
    }
  }
  // sigma_x: root-mean-square deviation from zero over both rails
  double ss = 0.0;
  for (double v : out) ss += v * v;
  const double sigma = std::sqrt(ss / static_cast<double>(kFrameValues));
  if (sigma == 0.0) return out;
  for (double& v : out) v = std::clamp(v, -sigma, sigma);
  normalize_power(out);
  return out;
}

LabeledFrame generate_frame(const DatasetSpec& spec, std::size_t index) {
  const std::size_t per_class = spec.snr_grid_db.size() * spec.frames_per_cell;
  const std::size_t ci = index / per_class;
  const std::size_t si = (index % per_class) / spec.frames_per_cell;
  if (ci >= spec.classes.size()) throw IndexError("frame index out of range");

  Rng rng = substream(spec.seed, "data", index);
  LabeledFrame f;
  f.label = spec.classes[ci];
  f.snr_db = spec.snr_grid_db[si];
  IQ iq = add_awgn(modulate(f.label, rng), f.snr_db, rng);
  if (spec.noise_model == NoiseModel::awgn_plus_alpha_stable) {
    iq = add_alpha_stable(iq, spec.alpha, spec.alpha_scale, rng);
    iq = preprocess_impulsive(iq);
  }
  normalize_power(iq);
  f.iq = iq;
  return f;
}

void generate_dataset(const DatasetSpec& spec,
                      const std::function<void(const LabeledFrame&)>& sink) {
  spec.validate();
  const std::size_t n = spec.frame_count();
  for (std::size_t i = 0; i < n; ++i) sink(generate_frame(spec, i));
}

std::vector<LabeledFrame> generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  std::vector<LabeledFrame> out;
  out.reserve(spec.frame_count());
  generate_dataset(spec, [&](const LabeledFrame& f) { out.push_back(f); });
  return out;
}

Tensor frame_tensor(const IQ& iq, bool requires_grad) {
  std::vector<double> v(iq.begin(), iq.end());
  return requires_grad ? Tensor::variable({2, kFrameLength}, std::move(v))
                       : Tensor::constant({2, kFrameLength}, std::move(v));
}

IQ to_iq(std::span<const double> values) {
  if (values.size() != kFrameValues)
    throw DimensionError("expected " + std::to_string(kFrameValues) + " IQ values, got " +
                         std::to_string(values.size()));
  IQ iq{};
  std::copy(values.begin(), values.end(), iq.begin());
  return iq;
}

}  // namespace aitvit::signals
