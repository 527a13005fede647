#pragma once

#include <cstddef>
#include <span>

#include <Eigen/Dense>

#include "nml/dataset.hpp"
#include "nml/interactions.hpp"

namespace nml {

// Scalar batch loss together with dL/dD. The gradient is zero on every
// interaction that contributed no loss.
struct LossResult {
  double loss = 0.0;
  double pos_loss = 0.0;
  double neg_loss = 0.0;
  std::size_t pos_count = 0;
  std::size_t neg_count = 0;
  Eigen::MatrixXd grad;
};

// Per-interaction contrastive terms: value(i, j) is D^q on positives and
// max(0, m - D)^q on negatives; slope(i, j) is its derivative in D.
// Entries outside P and N are zero.
struct InteractionLosses {
  Eigen::MatrixXd value;
  Eigen::MatrixXd slope;
};

InteractionLosses interaction_losses(const DistanceMatrix& d, const MaskMatrix& positive,
                                     const MaskMatrix& negative, double margin, int exponent);

// mean over P of D^q + mean over N of max(0, m - D)^q. An empty mask
// contributes 0 (with a warning).
LossResult contrastive_loss(const DistanceMatrix& d, const MaskMatrix& positive,
                            const MaskMatrix& negative, double margin, int exponent = 1);

// Contrastive loss (q = 1) on the main model's distances with positives
// restricted to the teacher-derived selection.
LossResult tsint_loss(const DistanceMatrix& d, const MaskMatrix& selected,
                      const MaskMatrix& negative, double margin);

// Contrastive loss on the sub-batch `kept`; the returned gradient is B x B
// with zeros outside the sub-batch. Fewer than two kept samples give 0.
LossResult prism_loss(const DistanceMatrix& d, std::span<const std::size_t> kept,
                      std::span<const ClassId> labels, double margin, int exponent = 1);

}  // namespace nml
