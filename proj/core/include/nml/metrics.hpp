#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "nml/dataset.hpp"

namespace nml {

struct MetricsReport {
  double precision_at_1 = 0.0;
  double map_at_r = 0.0;
  double mean_ap = 0.0;
  std::size_t n_queries = 0;   // queries that entered the averages
  std::size_t n_excluded = 0;  // singleton-class queries
};

// All other rows ordered by ascending Euclidean distance to `query`, ties
// broken by ascending index.
std::vector<std::size_t> rank_neighbours(const Eigen::MatrixXd& embeddings, std::size_t query);

// Queries whose class has no other member are excluded from every average
// (and counted in n_excluded). With no eligible query all metrics are 0.
MetricsReport evaluate_retrieval(const Eigen::MatrixXd& embeddings,
                                 std::span<const ClassId> labels);

double precision_at_1(const Eigen::MatrixXd& embeddings, std::span<const ClassId> labels);
double map_at_r(const Eigen::MatrixXd& embeddings, std::span<const ClassId> labels);
double mean_ap(const Eigen::MatrixXd& embeddings, std::span<const ClassId> labels);

}  // namespace nml
