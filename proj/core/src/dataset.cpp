#include "nml/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include <fmt/format.h>

#include "binary_io.hpp"
#include "nml/errors.hpp"

namespace nml {
namespace {

constexpr std::string_view kDatasetMagic = "NMLD";
constexpr std::uint32_t kDatasetVersion = 1;

std::vector<std::vector<std::size_t>> members_by_observed_class(const Dataset& d) {
  std::vector<std::vector<std::size_t>> members(d.n_classes);
  for (std::size_t i = 0; i < d.size(); ++i) members[d.observed_labels[i]].push_back(i);
  return members;
}

std::vector<ClassId> present_classes(const std::vector<std::vector<std::size_t>>& members) {
  std::vector<ClassId> present;
  for (std::size_t c = 0; c < members.size(); ++c) {
    if (!members[c].empty()) present.push_back(static_cast<ClassId>(c));
  }
  return present;
}

void check_batch_shape(std::size_t batch_size, std::size_t per_class, std::size_t n_present) {
  if (per_class == 0 || batch_size == 0) {
    throw ConfigError("batch size and instances per class must be positive");
  }
  if (batch_size % per_class != 0) {
    throw ConfigError(fmt::format("batch size {} is not divisible by instances per class {}",
                                  batch_size, per_class));
  }
  if (n_present < batch_size / per_class) {
    throw ConfigError(fmt::format("batch needs {} classes but only {} are present",
                                  batch_size / per_class, n_present));
  }
}

// Partial Fisher-Yates: the first `count` entries become a uniform sample.
template <typename T>
void shuffle_prefix(std::vector<T>& v, std::size_t count, std::mt19937_64& rng) {
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, v.size() - 1);
    std::swap(v[i], v[pick(rng)]);
  }
}

Batch draw_batch(const std::vector<std::vector<std::size_t>>& members,
                 const std::vector<ClassId>& present, std::size_t per_class,
                 std::size_t batch_size, std::mt19937_64& rng) {
  const std::size_t groups = batch_size / per_class;
  std::vector<ClassId> classes = present;
  shuffle_prefix(classes, groups, rng);

  Batch batch;
  batch.per_class = per_class;
  batch.indices.reserve(batch_size);
  batch.labels.reserve(batch_size);
  for (std::size_t g = 0; g < groups; ++g) {
    const ClassId c = classes[g];
    const auto& pool = members[c];
    if (pool.size() >= per_class) {
      std::vector<std::size_t> copy = pool;
      shuffle_prefix(copy, per_class, rng);
      batch.indices.insert(batch.indices.end(), copy.begin(),
                           copy.begin() + static_cast<std::ptrdiff_t>(per_class));
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      for (std::size_t j = 0; j < per_class; ++j) batch.indices.push_back(pool[pick(rng)]);
    }
    batch.labels.insert(batch.labels.end(), per_class, c);
  }
  return batch;
}

Dataset take_samples(const Dataset& d, const std::vector<std::size_t>& rows) {
  Dataset out;
  out.n_classes = d.n_classes;
  out.split = d.split;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), d.features.cols());
  out.clean_labels.reserve(rows.size());
  out.observed_labels.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.features.row(static_cast<Eigen::Index>(r)) =
        d.features.row(static_cast<Eigen::Index>(rows[r]));
    out.clean_labels.push_back(d.clean_labels[rows[r]]);
    out.observed_labels.push_back(d.observed_labels[rows[r]]);
  }
  return out;
}

}  // namespace

std::size_t Dataset::corrupted_count() const {
  std::size_t count = 0;
  for (std::size_t i = 0; i < size(); ++i) count += is_corrupted(i) ? 1 : 0;
  return count;
}

double Dataset::corrupted_fraction() const {
  return size() == 0 ? 0.0 : static_cast<double>(corrupted_count()) / static_cast<double>(size());
}

void Dataset::validate() const {
  if (observed_labels.size() != clean_labels.size() ||
      static_cast<std::size_t>(features.rows()) != clean_labels.size()) {
    throw ContractViolation("dataset feature and label lengths disagree");
  }
  for (std::size_t i = 0; i < size(); ++i) {
    if (clean_labels[i] >= n_classes || observed_labels[i] >= n_classes) {
      throw ContractViolation(fmt::format("label out of range at sample {}", i));
    }
  }
  if (!features.allFinite()) throw ContractViolation("dataset contains non-finite features");
}

bool operator==(const Dataset& a, const Dataset& b) {
  if (a.n_classes != b.n_classes || a.split != b.split || a.clean_labels != b.clean_labels ||
      a.observed_labels != b.observed_labels || a.features.rows() != b.features.rows() ||
      a.features.cols() != b.features.cols()) {
    return false;
  }
  const auto n = static_cast<std::size_t>(a.features.size());
  return n == 0 || std::memcmp(a.features.data(), b.features.data(), n * sizeof(float)) == 0;
}

void SyntheticSpec::validate() const {
  if (n_classes < 2) throw ConfigError("synthetic data needs at least 2 classes");
  if (per_class < 1) throw ConfigError("synthetic data needs at least 1 sample per class");
  if (dim < 1) throw ConfigError("synthetic data needs a positive input dimension");
  if (!(separation > 0.0) || !std::isfinite(separation)) {
    throw ConfigError("class separation must be positive");
  }
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw ConfigError("within-class standard deviation must be positive");
  }
}

Dataset gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Eigen::MatrixXd centers(spec.n_classes, spec.dim);
  for (Eigen::Index c = 0; c < centers.rows(); ++c) {
    for (Eigen::Index j = 0; j < centers.cols(); ++j) centers(c, j) = spec.separation * normal(rng);
  }

  const std::size_t n = std::size_t{spec.n_classes} * spec.per_class;
  Dataset d;
  d.n_classes = spec.n_classes;
  d.features.resize(static_cast<Eigen::Index>(n), spec.dim);
  d.clean_labels.reserve(n);
  Eigen::Index row = 0;
  for (std::uint32_t c = 0; c < spec.n_classes; ++c) {
    for (std::uint32_t s = 0; s < spec.per_class; ++s, ++row) {
      for (Eigen::Index j = 0; j < centers.cols(); ++j) {
        d.features(row, j) = static_cast<float>(centers(c, j) + spec.sigma * normal(rng));
      }
      d.clean_labels.push_back(c);
    }
  }
  d.observed_labels = d.clean_labels;
  return d;
}

Dataset inject_uniform_noise(const Dataset& d, double rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 1.0)) {
    throw ConfigError(fmt::format("noise rate {} is outside [0, 1]", rate));
  }
  if (rate > 0.0 && d.n_classes < 2) {
    throw ConfigError("label noise needs at least 2 classes");
  }
  if (d.corrupted_count() != 0) {
    throw ContractViolation("inject_uniform_noise expects an uncorrupted dataset");
  }

  Dataset out = d;
  if (rate == 0.0) return out;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<ClassId> other(0, d.n_classes - 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    // Both draws happen for every sample so the corrupted set is nested in the rate.
    const bool corrupt = coin(rng) < rate;
    const ClassId pick = other(rng);
    if (corrupt) {
      const ClassId clean = out.clean_labels[i];
      out.observed_labels[i] = pick < clean ? pick : pick + 1;
    }
  }
  return out;
}

TrainTest split_train_test(const Dataset& d, double test_fraction, SplitPolicy policy) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError(fmt::format("test fraction {} is outside (0, 1)", test_fraction));
  }
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;

  if (policy == SplitPolicy::kSamples) {
    std::vector<std::vector<std::size_t>> by_class(d.n_classes);
    for (std::size_t i = 0; i < d.size(); ++i) by_class[d.clean_labels[i]].push_back(i);
    for (const auto& members : by_class) {
      const auto n_test = static_cast<std::size_t>(
          std::lround(test_fraction * static_cast<double>(members.size())));
      const std::size_t n_train = members.size() - n_test;
      train_rows.insert(train_rows.end(), members.begin(),
                        members.begin() + static_cast<std::ptrdiff_t>(n_train));
      test_rows.insert(test_rows.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train),
                       members.end());
    }
    std::sort(train_rows.begin(), train_rows.end());
    std::sort(test_rows.begin(), test_rows.end());
    TrainTest out{take_samples(d, train_rows), take_samples(d, test_rows)};
    out.train.split = Split::kTrain;
    out.test.split = Split::kTest;
    return out;
  }

  const auto n_test_classes = static_cast<std::uint32_t>(
      std::lround(test_fraction * static_cast<double>(d.n_classes)));
  const std::uint32_t n_train_classes = d.n_classes - n_test_classes;
  if (n_test_classes < 1 || n_train_classes < 1) {
    throw ConfigError("class-disjoint split leaves one side without classes");
  }
  for (std::size_t i = 0; i < d.size(); ++i) {
    (d.clean_labels[i] < n_train_classes ? train_rows : test_rows).push_back(i);
  }
  TrainTest out{take_samples(d, train_rows), take_samples(d, test_rows)};
  out.train.split = Split::kTrain;
  out.train.n_classes = n_train_classes;
  out.test.split = Split::kTest;
  out.test.n_classes = n_test_classes;
  for (auto* labels : {&out.test.clean_labels, &out.test.observed_labels}) {
    for (auto& y : *labels) y -= n_train_classes;
  }
  out.train.validate();
  out.test.validate();
  return out;
}

Dataset restrict_classes(const Dataset& d, std::uint32_t count) {
  if (count < 1 || count > d.n_classes) {
    throw ConfigError(fmt::format("class subset {} is outside [1, {}]", count, d.n_classes));
  }
  if (d.corrupted_count() != 0) {
    throw ContractViolation("restrict_classes expects an uncorrupted dataset");
  }
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.clean_labels[i] < count) rows.push_back(i);
  }
  Dataset out = take_samples(d, rows);
  out.n_classes = count;
  return out;
}

Eigen::MatrixXd gather_rows(const Dataset& d, std::span<const std::size_t> indices) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(indices.size()), d.features.cols());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= d.size()) throw ContractViolation("batch index out of range");
    x.row(static_cast<Eigen::Index>(r)) =
        d.features.row(static_cast<Eigen::Index>(indices[r])).cast<double>();
  }
  return x;
}

Eigen::MatrixXd all_rows(const Dataset& d) { return d.features.cast<double>(); }

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
  d.validate();
  detail::ByteWriter w;
  w.magic(kDatasetMagic);
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(d.size()));
  w.u32(static_cast<std::uint32_t>(d.dim()));
  w.u32(d.n_classes);
  w.u8(static_cast<std::uint8_t>(d.split));
  for (Eigen::Index i = 0; i < d.features.rows(); ++i) {
    for (Eigen::Index j = 0; j < d.features.cols(); ++j) w.f32(d.features(i, j));
  }
  for (ClassId y : d.clean_labels) w.u32(y);
  for (ClassId y : d.observed_labels) w.u32(y);
  w.write_to(path);
}

Dataset load_dataset(const std::filesystem::path& path) {
  auto r = detail::ByteReader::from_file(path);
  r.expect_magic(kDatasetMagic);
  const std::uint64_t version_at = r.offset();
  const std::uint32_t version = r.u32();
  if (version != kDatasetVersion) {
    throw FormatError(fmt::format("unsupported dataset version {}", version), version_at);
  }
  const std::uint32_t n = r.u32();
  const std::uint32_t dim = r.u32();
  Dataset d;
  d.n_classes = r.u32();
  const std::uint64_t split_at = r.offset();
  const std::uint8_t split = r.u8();
  if (split > 1) throw FormatError(fmt::format("bad split tag {}", split), split_at);
  d.split = static_cast<Split>(split);

  r.require(std::uint64_t{n} * dim * 4, "feature block");
  d.features.resize(n, dim);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < dim; ++j) d.features(i, j) = r.f32_unchecked();
  }
  for (auto* labels : {&d.clean_labels, &d.observed_labels}) {
    r.require(std::uint64_t{n} * 4,
              labels == &d.clean_labels ? "clean label block" : "observed label block");
    labels->resize(n);
    for (auto& y : *labels) y = r.u32_unchecked();
  }
  r.expect_end();
  try {
    d.validate();
  } catch (const ContractViolation& e) {
    throw FormatError(e.what(), r.offset());
  }
  return d;
}

void export_csv(const Dataset& d, std::ostream& out) {
  out << "id,clean_label,observed_label";
  for (std::size_t j = 0; j < d.dim(); ++j) out << ",f" << j;
  out << '\n';
  for (std::size_t i = 0; i < d.size(); ++i) {
    out << i << ',' << d.clean_labels[i] << ',' << d.observed_labels[i];
    for (Eigen::Index j = 0; j < d.features.cols(); ++j) {
      out << ',' << fmt::format("{}", d.features(static_cast<Eigen::Index>(i), j));
    }
    out << '\n';
  }
}

Batch sample_batch(const Dataset& d, std::size_t per_class, std::size_t batch_size,
                   std::mt19937_64& rng) {
  const auto members = members_by_observed_class(d);
  const auto present = present_classes(members);
  check_batch_shape(batch_size, per_class, present.size());
  return draw_batch(members, present, per_class, batch_size, rng);
}

BatchSampler::BatchSampler(const Dataset& d, std::size_t batch_size, std::size_t per_class,
                           std::uint64_t seed)
    : members_(members_by_observed_class(d)),
      present_(present_classes(members_)),
      batch_size_(batch_size),
      per_class_(per_class),
      rng_(seed) {
  check_batch_shape(batch_size, per_class, present_.size());
}

Batch BatchSampler::next() { return draw_batch(members_, present_, per_class_, batch_size_, rng_); }

}  // namespace nml
