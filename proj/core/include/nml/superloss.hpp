#pragma once

#include <cstdint>
#include <optional>

#include "nml/interactions.hpp"
#include "nml/losses.hpp"

namespace nml {

enum class ThresholdMode { kGlobalAvg, kExpAvg };

// Closed-form confidence sigma* = argmin_s (l - tau) s + lambda (log s)^2
//                               = exp(-W0(max(-2/e, (l - tau) / lambda) / 2)).
double superloss_sigma(double loss, double threshold, double lambda);

// Running loss threshold for one interaction sign.
struct RunningThreshold {
  std::optional<double> value;
  double sum = 0.0;
  std::uint64_t count = 0;
};

struct SuperLossState {
  double lambda = 0.1;
  ThresholdMode mode = ThresholdMode::kGlobalAvg;
  double smoothing = 0.9;  // ExpAvg only
  RunningThreshold positive;
  RunningThreshold negative;

  // Throws ConfigError.
  void validate() const;
};

struct SuperLossResult {
  LossResult loss;
  double mean_sigma_pos = 1.0;
  double mean_sigma_neg = 1.0;
  double threshold_pos = 0.0;  // thresholds used for this batch
  double threshold_neg = 0.0;
};

// Weights every positive term by sigma*(l, tau+) and every negative term by
// sigma*(l, tau-), averages like the contrastive loss, then advances both
// thresholds. Before any history exists a threshold starts at the current
// batch mean. Confidences are treated as constants in the gradient.
SuperLossResult superloss_wrap(const InteractionLosses& terms, const MaskMatrix& positive,
                               const MaskMatrix& negative, SuperLossState& state);

}  // namespace nml
