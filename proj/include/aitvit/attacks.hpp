#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "aitvit/model.hpp"

namespace aitvit::attacks {

enum class Kind { fgm, pgd, bim, pgd_adaptive };

const char* kind_name(Kind k);
Kind kind_from_name(std::string_view name);

struct AttackSpec {
  Kind kind = Kind::pgd;
  double pnr = 1.0;          // linear ratio, L2 attacks
  double tau = 0.01;         // L-infinity bound, bim
  double step = 0.001;       // eta_0
  std::size_t max_iters = 500;
  bool targets_detector = true;
  // Iterative attacks stop once the classifier is fooled and (when
  // targeting the detector) the detector is evaded.
  bool stop_on_success = true;
  // Multiplies the attack loss; FGM and BIM are invariant to it.
  double loss_scale = 1.0;
  bool record_trace = false;

  void validate() const;
};

struct AttackResult {
  std::vector<double> x_adv;
  std::size_t iterations = 0;
  bool fooled_classifier = false;
  bool evaded_detector = false;
  double perturbation_norm = 0.0;  // L2 for fgm/pgd, L-infinity for bim
  double epsilon = 0.0;            // budget (epsilon or tau)
  bool degenerate = false;         // aborted on a zero gradient
  std::vector<std::vector<double>> trace;  // iterates, when recorded

  bool succeeded(bool targets_detector = true) const {
    return fooled_classifier && (!targets_detector || evaded_detector);
  }
};

// epsilon = sqrt(pnr * ||x0||^2 / (snr + 1)); pnr and snr are linear ratios.
double epsilon_from_pnr(double pnr, double snr, double x0_energy);
double epsilon_from_pnr(double pnr, double snr, std::span<const double> x0);

double l2_norm(std::span<const double> v);
double l2_distance(std::span<const double> a, std::span<const double> b);
double linf_distance(std::span<const double> a, std::span<const double> b);

struct LossGradient {
  std::vector<double> grad;
  std::vector<double> f1_logits;
  std::vector<double> f2_logits;
};

// Gradient w.r.t. x of loss_scale * [l(f1(x), y) + l(f2(x), y_a)]; the
// detector term is included only when `with_detector` is set.
LossGradient input_gradient(const AiTViT& model, std::span<const double> x, std::size_t y,
                            bool with_detector, double loss_scale = 1.0);

// x0 + eps * (x* - x0) / ||x* - x0||
std::vector<double> project_l2(std::span<const double> x_star, std::span<const double> x0,
                               double eps);

AttackResult fgm(const AiTViT& model, std::span<const double> x0, std::size_t y, double snr,
                 const AttackSpec& spec);
AttackResult pgd(const AiTViT& model, std::span<const double> x0, std::size_t y, double snr,
                 const AttackSpec& spec);
AttackResult bim(const AiTViT& model, std::span<const double> x0, std::size_t y,
                 const AttackSpec& spec);

// Dispatch on spec.kind; `snr` (linear) is ignored by bim.
AttackResult run_attack(const AiTViT& model, std::span<const double> x0, std::size_t y,
                        double snr, const AttackSpec& spec);

struct TrainingAttackConfig {
  double pnr = 0.05;  // about -13 dB
  std::size_t iters = 10;
  double step = 0.001;
  bool targets_detector = true;
};

struct AdversarialBatch {
  std::vector<std::vector<double>> x_adv;
  std::vector<double> epsilon;
  std::size_t skipped = 0;  // degenerate gradients; clean frame passed through
};

// PGD at a fixed pnr with each frame's own SNR and no early stop.
AdversarialBatch adaptive_training_pgd(const AiTViT& model,
                                       const std::vector<std::vector<double>>& frames,
                                       const std::vector<std::size_t>& labels,
                                       const std::vector<double>& snr_db,
                                       const TrainingAttackConfig& config);

}  // namespace aitvit::attacks
