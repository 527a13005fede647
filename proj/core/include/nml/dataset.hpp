#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace nml {

using ClassId = std::uint32_t;
using FeatureMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Split : std::uint8_t { kTrain = 0, kTest = 1 };

// Feature matrix with parallel clean and observed (possibly corrupted) labels.
struct Dataset {
  FeatureMatrix features;
  std::vector<ClassId> clean_labels;
  std::vector<ClassId> observed_labels;
  std::uint32_t n_classes = 0;
  Split split = Split::kTrain;

  std::size_t size() const { return clean_labels.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }

  bool is_corrupted(std::size_t i) const { return observed_labels[i] != clean_labels[i]; }
  std::size_t corrupted_count() const;
  double corrupted_fraction() const;

  // Throws ContractViolation when labels are out of range, lengths disagree
  // or a feature is non-finite.
  void validate() const;

  friend bool operator==(const Dataset& a, const Dataset& b);
};

struct SyntheticSpec {
  std::uint32_t n_classes = 50;
  std::uint32_t per_class = 20;
  std::uint32_t dim = 64;
  double separation = 5.0;
  double sigma = 1.0;
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;
};

// Isotropic Gaussian clusters: centers ~ N(0, s^2 I), samples ~ N(center, sigma^2 I).
// Samples are laid out class by class.
Dataset gen_synthetic(const SyntheticSpec& spec);

// Each sample is corrupted independently with probability `rate`; a corrupted
// sample receives a label drawn uniformly from the other C-1 classes.
Dataset inject_uniform_noise(const Dataset& d, double rate, std::uint64_t seed);

enum class SplitPolicy {
  kSamples,  // every class appears in both splits
  kClasses,  // disjoint classes, test labels renumbered from 0
};

struct TrainTest {
  Dataset train;
  Dataset test;
};

// Deterministic partition. With kSamples the last round(test_fraction * |c|)
// members of each class go to test; with kClasses the last
// round(test_fraction * C) classes do.
TrainTest split_train_test(const Dataset& d, double test_fraction, SplitPolicy policy);

// Keeps the samples whose clean label is below `count`.
Dataset restrict_classes(const Dataset& d, std::uint32_t count);

// Rows of `d.features` at `indices`, widened to double.
Eigen::MatrixXd gather_rows(const Dataset& d, std::span<const std::size_t> indices);
Eigen::MatrixXd all_rows(const Dataset& d);

void save_dataset(const Dataset& d, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

// Debug export: id,clean_label,observed_label,f0,...
void export_csv(const Dataset& d, std::ostream& out);

struct Batch {
  std::vector<std::size_t> indices;
  std::vector<ClassId> labels;
  std::size_t per_class = 0;

  std::size_t size() const { return indices.size(); }
};

// Class-balanced sampling by observed label: batch_size / per_class distinct
// classes, per_class members each (with replacement only for small classes).
Batch sample_batch(const Dataset& d, std::size_t per_class, std::size_t batch_size,
                   std::mt19937_64& rng);

// Seeded sampler that caches the per-class index lists of one dataset.
class BatchSampler {
 public:
  BatchSampler(const Dataset& d, std::size_t batch_size, std::size_t per_class,
               std::uint64_t seed);

  Batch next();

  std::size_t batch_size() const { return batch_size_; }

 private:
  std::vector<std::vector<std::size_t>> members_;  // indexed by class id
  std::vector<ClassId> present_;
  std::size_t batch_size_;
  std::size_t per_class_;
  std::mt19937_64 rng_;
};

}  // namespace nml
