#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include "aitvit/rng.hpp"
#include "aitvit/tensor.hpp"

namespace aitvit::signals {

inline constexpr std::size_t kFrameLength = 128;
inline constexpr std::size_t kFrameValues = 2 * kFrameLength;
inline constexpr std::size_t kNumSchemes = 11;
inline constexpr std::size_t kSamplesPerSymbol = 8;
inline constexpr double kRolloff = 0.35;

enum class Scheme : std::uint8_t {
  BPSK, QPSK, PSK8, QAM16, QAM64, CPFSK, GFSK, PAM4, WBFM, AM_SSB, AM_DSB
};

// Names in label order.
inline constexpr std::array<std::string_view, kNumSchemes> kSchemeNames = {
    "BPSK", "QPSK", "8PSK", "QAM16", "QAM64", "CPFSK",
    "GFSK", "PAM4", "WBFM", "AM-SSB", "AM-DSB"};

std::size_t label_from_name(std::string_view name);

// Row 0 holds the in-phase rail, row 1 the quadrature rail.
using IQ = std::array<double, kFrameValues>;

struct LabeledFrame {
  IQ iq{};
  std::uint8_t label = 0;
  double snr_db = 0.0;
};

inline constexpr double kNoNoise = std::numeric_limits<double>::infinity();

enum class NoiseModel { awgn, awgn_plus_alpha_stable };

struct DatasetSpec {
  std::vector<std::uint8_t> classes;
  std::vector<double> snr_grid_db;
  std::size_t frames_per_cell = 1;
  NoiseModel noise_model = NoiseModel::awgn;
  // impulsive component, used only with awgn_plus_alpha_stable
  double alpha = 1.5;
  double alpha_scale = 0.05;
  std::uint64_t seed = 0;

  // All 11 schemes over -20..18 dB in 2 dB steps.
  static DatasetSpec full(std::size_t frames_per_cell, std::uint64_t seed = 0);
  void validate() const;
  std::size_t frame_count() const;
};

std::vector<double> full_snr_grid();

double average_power(const IQ& iq);
void normalize_power(IQ& iq);

// Symbol alphabet (unit average energy) of a constellation scheme; empty
// for the continuous-phase and analog schemes.
std::vector<std::complex<double>> constellation(std::size_t label);

// Raw symbols prior to pulse shaping.
std::vector<std::complex<double>> draw_symbols(std::size_t label, std::size_t count,
                                               Rng& rng);

// Root-raised-cosine taps (roll-off kRolloff, kSamplesPerSymbol) spanning
// `span_symbols`, normalized to unit energy.
std::vector<double> rrc_taps(std::size_t span_symbols = 8);

// Complex baseband of `length` samples, unit average power.
std::vector<std::complex<double>> modulate_baseband(std::size_t label,
                                                    std::size_t length, Rng& rng);

// Clean 2x128 frame with unit average power.
IQ modulate(std::size_t label, Rng& rng);

IQ add_awgn(const IQ& frame, double snr_db, Rng& rng);

// Symmetric alpha-stable variate (Chambers-Mallows-Stuck), unit scale.
double sample_alpha_stable(double alpha, Rng& rng);
IQ add_alpha_stable(const IQ& frame, double alpha, double scale, Rng& rng);

// Five-sample moving median per rail (edge replicated), clip to +-sigma_x,
// then unit-power normalization.
IQ preprocess_impulsive(const IQ& frame);

// Frame number `index` of `spec`, as produced by generate_dataset.
LabeledFrame generate_frame(const DatasetSpec& spec, std::size_t index);

std::vector<LabeledFrame> generate_dataset(const DatasetSpec& spec);
void generate_dataset(const DatasetSpec& spec,
                      const std::function<void(const LabeledFrame&)>& sink);

Tensor frame_tensor(const IQ& iq, bool requires_grad = false);
IQ to_iq(std::span<const double> values);

}  // namespace aitvit::signals
