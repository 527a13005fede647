#include "nml/interactions.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <fmt/format.h>

#include "nml/errors.hpp"

namespace nml {

DistanceMatrix pairwise_distances(const Eigen::MatrixXd& z) {
  if (!z.allFinite()) throw ContractViolation("non-finite embedding");
  const Eigen::Index b = z.rows();
  DistanceMatrix d = DistanceMatrix::Zero(b, b);
  for (Eigen::Index i = 0; i < b; ++i) {
    for (Eigen::Index j = i + 1; j < b; ++j) {
      const double v = (z.row(i) - z.row(j)).norm();
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

Eigen::MatrixXd distance_backward(const Eigen::MatrixXd& z, const DistanceMatrix& d,
                                  const Eigen::MatrixXd& grad_d) {
  const Eigen::Index b = z.rows();
  if (d.rows() != b || d.cols() != b || grad_d.rows() != b || grad_d.cols() != b) {
    throw ContractViolation("distance gradient shape mismatch");
  }
  Eigen::MatrixXd grad_z = Eigen::MatrixXd::Zero(b, z.cols());
  for (Eigen::Index i = 0; i < b; ++i) {
    for (Eigen::Index j = i + 1; j < b; ++j) {
      const double g = grad_d(i, j) + grad_d(j, i);
      if (g == 0.0 || d(i, j) == 0.0) continue;
      const Eigen::RowVectorXd dir = (z.row(i) - z.row(j)) * (g / d(i, j));
      grad_z.row(i) += dir;
      grad_z.row(j) -= dir;
    }
  }
  return grad_z;
}

ObservedMasks observed_masks(std::span<const ClassId> labels) {
  const auto b = static_cast<Eigen::Index>(labels.size());
  ObservedMasks m{MaskMatrix(b, b), MaskMatrix(b, b)};
  for (Eigen::Index i = 0; i < b; ++i) {
    for (Eigen::Index j = 0; j < b; ++j) {
      const bool same = labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)];
      m.positive(i, j) = same;
      m.negative(i, j) = !same;
    }
  }
  return m;
}

double positive_percentile(const DistanceMatrix& teacher, const MaskMatrix& positive,
                           double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) {
    throw ConfigError(fmt::format("selection ratio tau={} is outside (0, 1]", tau));
  }
  if (teacher.rows() != positive.rows() || teacher.cols() != positive.cols()) {
    throw ContractViolation("distance and mask shapes differ");
  }
  std::vector<double> values;
  for (Eigen::Index j = 0; j < teacher.cols(); ++j) {
    for (Eigen::Index i = 0; i < teacher.rows(); ++i) {
      if (positive(i, j)) values.push_back(teacher(i, j));
    }
  }
  if (values.empty()) throw ContractViolation("positive_percentile on an empty positive set");

  const auto n = static_cast<double>(values.size());
  auto rank = static_cast<std::size_t>(std::ceil(tau * n));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  auto nth = values.begin() + static_cast<std::ptrdiff_t>(rank - 1);
  std::nth_element(values.begin(), nth, values.end());
  return *nth;
}

void update_cut(SelectionState& state, double d_batch) {
  if (!state.d_cut) {
    state.d_cut = d_batch;
  } else {
    state.d_cut = state.momentum * *state.d_cut + (1.0 - state.momentum) * d_batch;
  }
}

MaskMatrix selection_mask(const DistanceMatrix& teacher, const MaskMatrix& positive,
                          const SelectionState& state) {
  if (!state.d_cut) throw ContractViolation("selection_mask called before update_cut");
  if (teacher.rows() != positive.rows() || teacher.cols() != positive.cols()) {
    throw ContractViolation("distance and mask shapes differ");
  }
  return (teacher.array() <= *state.d_cut) && positive;
}

double estimate_tau(double noise_rate, std::uint32_t per_class) {
  if (!(noise_rate >= 0.0 && noise_rate <= 1.0) || per_class == 0) {
    throw ConfigError("estimate_tau needs a rate in [0, 1] and a positive class size");
  }
  const double k = per_class;
  const double clean = (1.0 - noise_rate) * (1.0 - noise_rate);
  return (clean * (k * k - k) + k) / (k * k);
}

SelectionQuality selection_quality(const MaskMatrix& selected, const MaskMatrix& positive,
                                   std::span<const ClassId> clean_labels) {
  std::size_t kept = 0;
  std::size_t kept_true = 0;
  std::size_t all_true = 0;
  for (Eigen::Index i = 0; i < positive.rows(); ++i) {
    for (Eigen::Index j = 0; j < positive.cols(); ++j) {
      if (i == j || !positive(i, j)) continue;
      const bool truly = clean_labels[static_cast<std::size_t>(i)] ==
                         clean_labels[static_cast<std::size_t>(j)];
      all_true += truly ? 1 : 0;
      if (selected(i, j)) {
        ++kept;
        kept_true += truly ? 1 : 0;
      }
    }
  }
  SelectionQuality q;
  if (kept > 0) q.precision = static_cast<double>(kept_true) / static_cast<double>(kept);
  if (all_true > 0) q.recall = static_cast<double>(kept_true) / static_cast<double>(all_true);
  return q;
}

}  // namespace nml
