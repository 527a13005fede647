#include "nml/prism.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <spdlog/spdlog.h>

#include "nml/errors.hpp"

namespace nml {
namespace {

// Nearest-rank percentile at fraction `rate`, clamped to the first rank.
double nearest_rank(std::vector<double> values, double rate) {
  auto rank = static_cast<std::size_t>(std::ceil(rate * static_cast<double>(values.size())));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  auto nth = values.begin() + static_cast<std::ptrdiff_t>(rank - 1);
  std::nth_element(values.begin(), nth, values.end());
  return *nth;
}

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

}  // namespace

PrismState::PrismState(Options options) : options_(options) {
  if (!(options_.noise_rate >= 0.0 && options_.noise_rate < 1.0)) {
    throw ConfigError("prism noise rate must lie in [0, 1)");
  }
  if (options_.window == 0) throw ConfigError("prism window must be positive");
  if (options_.capacity == 0) throw ConfigError("prism memory capacity must be positive");
  if (!(options_.temperature > 0.0)) throw ConfigError("prism temperature must be positive");
}

std::optional<double> PrismState::threshold() const {
  if (q_history_.empty()) return std::nullopt;
  return std::accumulate(q_history_.begin(), q_history_.end(), 0.0) /
         static_cast<double>(q_history_.size());
}

std::vector<std::optional<Eigen::VectorXd>> PrismState::class_centers() const {
  std::vector<std::optional<Eigen::VectorXd>> sums;
  std::vector<std::size_t> counts;
  for (const auto& e : memory_) {
    if (e.label >= sums.size()) {
      sums.resize(e.label + 1);
      counts.resize(e.label + 1, 0);
    }
    if (!sums[e.label]) sums[e.label] = Eigen::VectorXd::Zero(e.embedding.size());
    *sums[e.label] += e.embedding;
    ++counts[e.label];
  }
  for (std::size_t c = 0; c < sums.size(); ++c) {
    if (sums[c]) *sums[c] /= static_cast<double>(counts[c]);
  }
  return sums;
}

void PrismState::push_q(double q) {
  q_history_.push_back(q);
  while (q_history_.size() > options_.window) q_history_.pop_front();
}

void PrismState::remember(const Eigen::VectorXd& embedding, ClassId label) {
  memory_.push_back({embedding, label});
  while (memory_.size() > options_.capacity) memory_.pop_front();
}

PrismSelection prism_select(const Eigen::MatrixXd& z, std::span<const ClassId> labels,
                            PrismState& state) {
  if (labels.size() != static_cast<std::size_t>(z.rows())) {
    throw ContractViolation("prism_select: label count does not match embeddings");
  }
  const auto b = static_cast<std::size_t>(z.rows());
  const auto centers = state.class_centers();
  const double temperature = state.options().temperature;

  PrismSelection sel;
  sel.warm_up = state.warming_up();
  sel.clean_probability.assign(b, std::numeric_limits<double>::quiet_NaN());

  std::vector<double> scored;
  std::size_t orphans = 0;
  for (std::size_t i = 0; i < b; ++i) {
    const ClassId y = labels[i];
    if (y >= centers.size() || !centers[y]) {
      ++orphans;
      continue;
    }
    const Eigen::VectorXd zi = z.row(static_cast<Eigen::Index>(i)).transpose();
    // Stable softmax over the classes that currently have a center.
    double max_logit = -std::numeric_limits<double>::infinity();
    std::vector<double> logits(centers.size(), 0.0);
    for (std::size_t c = 0; c < centers.size(); ++c) {
      if (!centers[c]) continue;
      logits[c] = cosine(zi, *centers[c]) / temperature;
      max_logit = std::max(max_logit, logits[c]);
    }
    double denom = 0.0;
    for (std::size_t c = 0; c < centers.size(); ++c) {
      if (centers[c]) denom += std::exp(logits[c] - max_logit);
    }
    const double p = std::exp(logits[y] - max_logit) / denom;
    sel.clean_probability[i] = p;
    scored.push_back(p);
  }
  if (orphans > 0 && !sel.warm_up) {
    spdlog::info("prism: {} samples without a class center kept unconditionally", orphans);
  }

  if (!scored.empty()) state.push_q(nearest_rank(scored, state.options().noise_rate));
  sel.threshold = state.threshold();

  for (std::size_t i = 0; i < b; ++i) {
    const double p = sel.clean_probability[i];
    const bool keep = sel.warm_up || std::isnan(p) || !sel.threshold || p >= *sel.threshold;
    if (keep) sel.kept.push_back(i);
  }
  for (std::size_t i : sel.kept) {
    state.remember(z.row(static_cast<Eigen::Index>(i)).transpose(), labels[i]);
  }
  state.finish_batch();
  return sel;
}

}  // namespace nml
