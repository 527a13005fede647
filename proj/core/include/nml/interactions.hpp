#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>

#include <Eigen/Dense>

#include "nml/dataset.hpp"

namespace nml {

// B x B pairwise Euclidean distances, D(i, j) = |z_i - z_j|.
using DistanceMatrix = Eigen::MatrixXd;
using MaskMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

DistanceMatrix pairwise_distances(const Eigen::MatrixXd& z);

// Chain rule through pairwise_distances: given dL/dD (B x B, not necessarily
// symmetric) returns dL/dz. Coincident points contribute zero.
Eigen::MatrixXd distance_backward(const Eigen::MatrixXd& z, const DistanceMatrix& d,
                                  const Eigen::MatrixXd& grad_d);

// Observed positives (same label, diagonal included) and their complement.
struct ObservedMasks {
  MaskMatrix positive;
  MaskMatrix negative;
};

ObservedMasks observed_masks(std::span<const ClassId> labels);

// Nearest-rank tau-percentile of the teacher distances on positive entries:
// the ceil(tau * |P|)-th smallest value.
double positive_percentile(const DistanceMatrix& teacher, const MaskMatrix& positive, double tau);

// Running cutting value. Unset until the first batch.
struct SelectionState {
  std::optional<double> d_cut;
  double momentum = 0.9;
};

// First call: d_cut = d_batch. Afterwards d_cut = m * d_cut + (1 - m) * d_batch.
void update_cut(SelectionState& state, double d_batch);

// Positives whose teacher distance is <= d_cut. Throws ContractViolation when
// d_cut is unset.
MaskMatrix selection_mask(const DistanceMatrix& teacher, const MaskMatrix& positive,
                          const SelectionState& state);

// Expected share of clean interactions among observed positives (diagonal
// included) for noise rate r and k instances per class.
double estimate_tau(double noise_rate, std::uint32_t per_class);

// Quality of a positive selection against ground truth, over off-diagonal
// observed positives. A ratio with an empty denominator is reported as 1.
struct SelectionQuality {
  double precision = 1.0;
  double recall = 1.0;
};

SelectionQuality selection_quality(const MaskMatrix& selected, const MaskMatrix& positive,
                                   std::span<const ClassId> clean_labels);

}  // namespace nml
