#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "nml/dataset.hpp"

namespace nml {

// Memory bank and threshold history for class-center clean-sample selection.
class PrismState {
 public:
  struct Options {
    double noise_rate = 0.5;     // R, the estimated share of noisy samples
    std::size_t window = 10;     // batches averaged into the threshold
    std::size_t capacity = 8192; // memory bank size
    double temperature = 1.0;    // softmax temperature on cosine logits
  };

  explicit PrismState(Options options);

  const Options& options() const { return options_; }

  std::size_t memory_size() const { return memory_.size(); }
  const std::deque<double>& q_history() const { return q_history_; }
  std::size_t batches_seen() const { return batches_seen_; }
  bool warming_up() const { return batches_seen_ < options_.window; }

  // Mean of the Q history; unset while the history is empty.
  std::optional<double> threshold() const;

  // Per-class means of the stored embeddings, indexed by class id; classes
  // absent from memory map to nullopt.
  std::vector<std::optional<Eigen::VectorXd>> class_centers() const;

  void push_q(double q);
  void remember(const Eigen::VectorXd& embedding, ClassId label);
  void finish_batch() { ++batches_seen_; }

 private:
  struct Entry {
    Eigen::VectorXd embedding;
    ClassId label;
  };

  Options options_;
  std::deque<Entry> memory_;
  std::deque<double> q_history_;
  std::size_t batches_seen_ = 0;
};

struct PrismSelection {
  std::vector<std::size_t> kept;               // batch positions, ascending
  std::vector<double> clean_probability;       // NaN where the class has no center
  std::optional<double> threshold;             // m used for this batch
  bool warm_up = false;
};

// Scores each sample by the softmax (over classes present in memory) of the
// cosine similarity to every class center, evaluated at its observed class.
// Pushes this batch's R-th percentile score into the history, keeps samples
// scoring at least the mean of the history and stores the kept samples in
// memory. The first `window` batches keep everything.
PrismSelection prism_select(const Eigen::MatrixXd& z, std::span<const ClassId> labels,
                            PrismState& state);

}  // namespace nml
