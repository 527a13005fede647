#include "nml/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "nml/errors.hpp"

namespace nml {

std::vector<std::size_t> rank_neighbours(const Eigen::MatrixXd& embeddings, std::size_t query) {
  const auto n = static_cast<std::size_t>(embeddings.rows());
  const Eigen::RowVectorXd q = embeddings.row(static_cast<Eigen::Index>(query));
  std::vector<double> dist(n);
  for (std::size_t j = 0; j < n; ++j) {
    dist[j] = (embeddings.row(static_cast<Eigen::Index>(j)) - q).norm();
  }
  std::vector<std::size_t> order;
  order.reserve(n - 1);
  for (std::size_t j = 0; j < n; ++j) {
    if (j != query) order.push_back(j);
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dist[a] < dist[b] || (dist[a] == dist[b] && a < b);
  });
  return order;
}

MetricsReport evaluate_retrieval(const Eigen::MatrixXd& embeddings,
                                 std::span<const ClassId> labels) {
  const auto n = static_cast<std::size_t>(embeddings.rows());
  if (labels.size() != n) throw ContractViolation("label count does not match embeddings");
  if (n < 2) throw ContractViolation("retrieval metrics need at least two samples");

  std::unordered_map<ClassId, std::size_t> class_size;
  for (ClassId y : labels) ++class_size[y];

  MetricsReport report;
  double p1 = 0.0;
  double map_r = 0.0;
  double ap = 0.0;
  for (std::size_t q = 0; q < n; ++q) {
    const std::size_t relevant = class_size[labels[q]] - 1;
    if (relevant == 0) {
      ++report.n_excluded;
      continue;
    }
    const auto order = rank_neighbours(embeddings, q);
    std::size_t hits = 0;
    double precision_sum_r = 0.0;
    double precision_sum = 0.0;
    for (std::size_t rank = 1; rank <= order.size(); ++rank) {
      if (labels[order[rank - 1]] != labels[q]) continue;
      ++hits;
      const double precision = static_cast<double>(hits) / static_cast<double>(rank);
      precision_sum += precision;
      if (rank <= relevant) precision_sum_r += precision;
      if (hits == relevant) break;
    }
    p1 += labels[order.front()] == labels[q] ? 1.0 : 0.0;
    map_r += precision_sum_r / static_cast<double>(relevant);
    ap += precision_sum / static_cast<double>(relevant);
    ++report.n_queries;
  }
  if (report.n_excluded > 0) {
    spdlog::debug("retrieval metrics: {} singleton-class queries excluded", report.n_excluded);
  }
  if (report.n_queries > 0) {
    const auto m = static_cast<double>(report.n_queries);
    report.precision_at_1 = p1 / m;
    report.map_at_r = map_r / m;
    report.mean_ap = ap / m;
  }
  return report;
}

double precision_at_1(const Eigen::MatrixXd& embeddings, std::span<const ClassId> labels) {
  return evaluate_retrieval(embeddings, labels).precision_at_1;
}

double map_at_r(const Eigen::MatrixXd& embeddings, std::span<const ClassId> labels) {
  return evaluate_retrieval(embeddings, labels).map_at_r;
}

double mean_ap(const Eigen::MatrixXd& embeddings, std::span<const ClassId> labels) {
  return evaluate_retrieval(embeddings, labels).mean_ap;
}

}  // namespace nml
