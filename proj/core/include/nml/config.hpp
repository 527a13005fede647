#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nml/dataset.hpp"
#include "nml/embedder.hpp"
#include "nml/superloss.hpp"

namespace nml {

enum class Method { kContrastive, kTsint, kSuperLoss, kPrism };

std::string_view to_string(Method m);
Method parse_method(std::string_view s);  // throws ConfigError

struct DataConfig {
  // When both paths are set the splits are loaded from disk and the
  // synthetic block is ignored.
  std::filesystem::path train_path;
  std::filesystem::path test_path;
  SyntheticSpec synthetic;  // seed comes from RunConfig::seeds.data
  double test_fraction = 0.5;
  SplitPolicy split = SplitPolicy::kSamples;
  std::uint32_t class_subset = 0;  // 0 keeps every class

  bool from_files() const { return !train_path.empty() || !test_path.empty(); }
};

struct ModelConfig {
  std::uint32_t depth = 2;
  std::uint32_t hidden = 64;
  std::uint32_t out_dim = 16;
  Activation activation = Activation::kTanh;
};

struct SuperLossConfig {
  double lambda = 0.1;
  ThresholdMode mode = ThresholdMode::kGlobalAvg;
  double smoothing = 0.9;
};

struct PrismConfig {
  std::optional<double> rate;  // unset: the configured label-noise rate
  std::uint32_t window = 10;
  std::uint32_t capacity = 8192;
  double temperature = 1.0;
};

struct Seeds {
  std::uint64_t data = 1;
  std::uint64_t noise = 2;
  std::uint64_t train = 3;
};

struct RunConfig {
  Method method = Method::kTsint;
  DataConfig data;
  ModelConfig model;
  double noise = 0.0;
  std::uint32_t epochs = 30;
  std::uint32_t batch_size = 80;
  std::uint32_t per_class = 4;
  double lr = 0.05;
  double margin = 0.5;
  int exponent = 1;
  std::optional<double> tau;  // unset: estimated from noise and per_class
  double beta = 0.9;
  double alpha = 0.99;
  bool teacher_ema = true;
  bool dcut_ema = true;
  SuperLossConfig superloss;
  PrismConfig prism;
  Seeds seeds;
  std::filesystem::path out_dir;

  double resolved_tau() const;
  double resolved_prism_rate() const;

  // Throws ConfigError naming the offending key.
  void validate() const;
};

// Key-value text: one `key = value` per line, `#` starts a comment. Keys
// under the `run.` and `result.` namespaces (written into run manifests)
// are ignored so a manifest can be fed back as a config.
RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::filesystem::path& path);

// Sets one field from its textual form. Throws ConfigError.
void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value);

// Every config key in canonical order.
const std::vector<std::string>& config_keys();

// Textual value of one key.
std::string config_value(const RunConfig& cfg, std::string_view key);

// Canonical serialization: every key, in canonical order, defaults included.
std::string to_text(const RunConfig& cfg);

// Deterministic 64-bit seed derivation (splitmix64 over base and stream).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

// Shortest round-trip decimal form used in every emitted file.
std::string format_number(double v);

}  // namespace nml
