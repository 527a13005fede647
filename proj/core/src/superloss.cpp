#include "nml/superloss.hpp"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

#include "nml/errors.hpp"
#include "nml/lambert_w.hpp"

namespace nml {
namespace {

constexpr double kTwoOverE = 0.73575888234288467;

struct MaskedStats {
  double sum = 0.0;
  std::uint64_t count = 0;
  double mean() const { return count ? sum / static_cast<double>(count) : 0.0; }
};

MaskedStats masked_stats(const Eigen::MatrixXd& values, const MaskMatrix& mask) {
  MaskedStats s;
  for (Eigen::Index j = 0; j < values.cols(); ++j) {
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
      if (mask(i, j)) {
        s.sum += values(i, j);
        ++s.count;
      }
    }
  }
  return s;
}

void advance(RunningThreshold& t, const MaskedStats& batch, const SuperLossState& state) {
  if (batch.count == 0) return;
  t.sum += batch.sum;
  t.count += batch.count;
  if (state.mode == ThresholdMode::kGlobalAvg) {
    t.value = t.sum / static_cast<double>(t.count);
  } else if (!t.value) {
    t.value = batch.mean();
  } else {
    t.value = state.smoothing * *t.value + (1.0 - state.smoothing) * batch.mean();
  }
}

}  // namespace

double superloss_sigma(double loss, double threshold, double lambda) {
  if (!(lambda > 0.0)) throw ConfigError("superloss lambda must be positive");
  const double beta = std::max(-kTwoOverE, (loss - threshold) / lambda);
  return std::exp(-lambert_w0(0.5 * beta));
}

void SuperLossState::validate() const {
  if (!(lambda > 0.0)) throw ConfigError("superloss lambda must be positive");
  if (!(smoothing >= 0.0 && smoothing < 1.0)) {
    throw ConfigError("superloss smoothing must lie in [0, 1)");
  }
}

SuperLossResult superloss_wrap(const InteractionLosses& terms, const MaskMatrix& positive,
                               const MaskMatrix& negative, SuperLossState& state) {
  state.validate();
  const MaskedStats pos = masked_stats(terms.value, positive);
  const MaskedStats neg = masked_stats(terms.value, negative);

  SuperLossResult out;
  out.threshold_pos = state.positive.value.value_or(pos.mean());
  out.threshold_neg = state.negative.value.value_or(neg.mean());

  LossResult& r = out.loss;
  r.grad = Eigen::MatrixXd::Zero(terms.value.rows(), terms.value.cols());
  r.pos_count = pos.count;
  r.neg_count = neg.count;
  if (pos.count == 0) spdlog::warn("superloss: empty positive set, term set to 0");
  if (neg.count == 0) spdlog::warn("superloss: empty negative set, term set to 0");
  const double inv_p = pos.count ? 1.0 / static_cast<double>(pos.count) : 0.0;
  const double inv_n = neg.count ? 1.0 / static_cast<double>(neg.count) : 0.0;

  double pos_sum = 0.0;
  double neg_sum = 0.0;
  double sigma_pos = 0.0;
  double sigma_neg = 0.0;
  for (Eigen::Index j = 0; j < terms.value.cols(); ++j) {
    for (Eigen::Index i = 0; i < terms.value.rows(); ++i) {
      const double l = terms.value(i, j);
      if (positive(i, j)) {
        const double s = superloss_sigma(l, out.threshold_pos, state.lambda);
        pos_sum += s * l;
        sigma_pos += s;
        r.grad(i, j) = s * terms.slope(i, j) * inv_p;
      } else if (negative(i, j)) {
        const double s = superloss_sigma(l, out.threshold_neg, state.lambda);
        neg_sum += s * l;
        sigma_neg += s;
        r.grad(i, j) = s * terms.slope(i, j) * inv_n;
      }
    }
  }
  r.pos_loss = pos_sum * inv_p;
  r.neg_loss = neg_sum * inv_n;
  r.loss = r.pos_loss + r.neg_loss;
  if (pos.count) out.mean_sigma_pos = sigma_pos * inv_p;
  if (neg.count) out.mean_sigma_neg = sigma_neg * inv_n;

  advance(state.positive, pos, state);
  advance(state.negative, neg, state);
  return out;
}

}  // namespace nml
