#include "nml/losses.hpp"

#include <cmath>
#include <vector>

#include <spdlog/spdlog.h>

#include "nml/errors.hpp"

namespace nml {
namespace {

void check_loss_inputs(const DistanceMatrix& d, const MaskMatrix& positive,
                       const MaskMatrix& negative, double margin, int exponent) {
  if (!(margin > 0.0)) throw ConfigError("margin must be positive");
  if (exponent != 1 && exponent != 2) throw ConfigError("distance exponent must be 1 or 2");
  if (d.rows() != d.cols() || positive.rows() != d.rows() || positive.cols() != d.cols() ||
      negative.rows() != d.rows() || negative.cols() != d.cols()) {
    throw ContractViolation("loss inputs have mismatched shapes");
  }
}

}  // namespace

InteractionLosses interaction_losses(const DistanceMatrix& d, const MaskMatrix& positive,
                                     const MaskMatrix& negative, double margin, int exponent) {
  check_loss_inputs(d, positive, negative, margin, exponent);
  InteractionLosses out{Eigen::MatrixXd::Zero(d.rows(), d.cols()),
                        Eigen::MatrixXd::Zero(d.rows(), d.cols())};
  for (Eigen::Index j = 0; j < d.cols(); ++j) {
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
      const double v = d(i, j);
      if (positive(i, j)) {
        out.value(i, j) = exponent == 1 ? v : v * v;
        out.slope(i, j) = exponent == 1 ? 1.0 : 2.0 * v;
      } else if (negative(i, j)) {
        const double hinge = margin - v;
        if (hinge > 0.0) {
          out.value(i, j) = exponent == 1 ? hinge : hinge * hinge;
          out.slope(i, j) = exponent == 1 ? -1.0 : -2.0 * hinge;
        }
      }
    }
  }
  return out;
}

LossResult contrastive_loss(const DistanceMatrix& d, const MaskMatrix& positive,
                            const MaskMatrix& negative, double margin, int exponent) {
  const InteractionLosses terms = interaction_losses(d, positive, negative, margin, exponent);
  LossResult r;
  r.grad = Eigen::MatrixXd::Zero(d.rows(), d.cols());
  r.pos_count = static_cast<std::size_t>(positive.count());
  r.neg_count = static_cast<std::size_t>(negative.count());

  if (r.pos_count == 0) spdlog::warn("contrastive loss: empty positive set, term set to 0");
  if (r.neg_count == 0) spdlog::warn("contrastive loss: empty negative set, term set to 0");
  const double inv_p = r.pos_count ? 1.0 / static_cast<double>(r.pos_count) : 0.0;
  const double inv_n = r.neg_count ? 1.0 / static_cast<double>(r.neg_count) : 0.0;

  double pos_sum = 0.0;
  double neg_sum = 0.0;
  for (Eigen::Index j = 0; j < d.cols(); ++j) {
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
      if (positive(i, j)) {
        pos_sum += terms.value(i, j);
        r.grad(i, j) = terms.slope(i, j) * inv_p;
      } else if (negative(i, j)) {
        neg_sum += terms.value(i, j);
        r.grad(i, j) = terms.slope(i, j) * inv_n;
      }
    }
  }
  r.pos_loss = pos_sum * inv_p;
  r.neg_loss = neg_sum * inv_n;
  r.loss = r.pos_loss + r.neg_loss;
  return r;
}

LossResult tsint_loss(const DistanceMatrix& d, const MaskMatrix& selected,
                      const MaskMatrix& negative, double margin) {
  return contrastive_loss(d, selected, negative, margin, 1);
}

LossResult prism_loss(const DistanceMatrix& d, std::span<const std::size_t> kept,
                      std::span<const ClassId> labels, double margin, int exponent) {
  const Eigen::Index b = d.rows();
  if (labels.size() != static_cast<std::size_t>(b)) {
    throw ContractViolation("label count does not match the distance matrix");
  }
  LossResult r;
  r.grad = Eigen::MatrixXd::Zero(b, b);
  if (kept.size() < 2) {
    spdlog::warn("prism loss: {} samples kept, loss set to 0", kept.size());
    return r;
  }

  const auto n = static_cast<Eigen::Index>(kept.size());
  DistanceMatrix sub(n, n);
  std::vector<ClassId> sub_labels(kept.size());
  for (Eigen::Index a = 0; a < n; ++a) {
    const auto ia = kept[static_cast<std::size_t>(a)];
    if (ia >= static_cast<std::size_t>(b)) throw ContractViolation("kept index out of range");
    sub_labels[static_cast<std::size_t>(a)] = labels[ia];
    for (Eigen::Index c = 0; c < n; ++c) {
      sub(a, c) = d(static_cast<Eigen::Index>(ia),
                    static_cast<Eigen::Index>(kept[static_cast<std::size_t>(c)]));
    }
  }
  const ObservedMasks masks = observed_masks(sub_labels);
  LossResult local = contrastive_loss(sub, masks.positive, masks.negative, margin, exponent);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index c = 0; c < n; ++c) {
      r.grad(static_cast<Eigen::Index>(kept[static_cast<std::size_t>(a)]),
             static_cast<Eigen::Index>(kept[static_cast<std::size_t>(c)])) += local.grad(a, c);
    }
  }
  r.loss = local.loss;
  r.pos_loss = local.pos_loss;
  r.neg_loss = local.neg_loss;
  r.pos_count = local.pos_count;
  r.neg_count = local.neg_count;
  return r;
}

}  // namespace nml
