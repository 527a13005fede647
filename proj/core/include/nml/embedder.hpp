#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

namespace nml {

enum class Activation : std::uint8_t { kNone = 0, kTanh = 1 };

struct Architecture {
  std::uint32_t depth = 1;   // 1 or 2 affine layers
  std::uint32_t d_in = 0;
  std::uint32_t hidden = 0;  // used only when depth == 2
  std::uint32_t d_out = 0;
  Activation activation = Activation::kNone;

  // Throws ConfigError.
  void validate() const;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

// One affine map x -> x * weight + bias, weight stored in_dim x out_dim.
struct Layer {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
};

struct ModelParams {
  Architecture arch;
  std::vector<Layer> layers;

  static ModelParams zeros(const Architecture& arch);

  bool all_finite() const;
  std::size_t parameter_count() const;

  // Visits every scalar parameter in declaration order (layer by layer,
  // weight column-major, then bias).
  template <typename Fn>
  void for_each(Fn&& fn) {
    for (auto& layer : layers) {
      for (Eigen::Index i = 0; i < layer.weight.size(); ++i) fn(layer.weight.data()[i]);
      for (Eigen::Index i = 0; i < layer.bias.size(); ++i) fn(layer.bias.data()[i]);
    }
  }
  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (const auto& layer : layers) {
      for (Eigen::Index i = 0; i < layer.weight.size(); ++i) fn(layer.weight.data()[i]);
      for (Eigen::Index i = 0; i < layer.bias.size(); ++i) fn(layer.bias.data()[i]);
    }
  }

  friend bool operator==(const ModelParams& a, const ModelParams& b);
};

// Parameter gradients share the parameter layout.
using Gradients = ModelParams;

// Weights ~ N(0, 1/fan_in), biases zero.
ModelParams init_params(const Architecture& arch, std::uint64_t seed);

// Rows of a B x d_out matrix, each of unit Euclidean norm.
using Embeddings = Eigen::MatrixXd;

// Pre-normalization rows with norm below this are shifted by kNudge.
inline constexpr double kMinNorm = 1e-12;
inline constexpr double kNudge = 1e-6;

struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;  // input to each layer
  Eigen::MatrixXd pre_norm;             // last affine output (after any nudge)
  Eigen::VectorXd norms;                // row norms of pre_norm
};

Embeddings forward(const ModelParams& p, const Eigen::MatrixXd& x);
Embeddings forward(const ModelParams& p, const Eigen::MatrixXd& x, ForwardCache& cache);

// Gradient of sum(grad_z .* forward(p, x)) with respect to every parameter.
Gradients backward(const ModelParams& p, const ForwardCache& cache, const Eigen::MatrixXd& grad_z);
Gradients backward(const ModelParams& p, const Eigen::MatrixXd& x, const Eigen::MatrixXd& grad_z);

// p <- p - lr * grads. Throws NumericError on non-finite gradients and
// ConfigError on a non-positive rate; p is untouched when it throws.
void sgd_step(ModelParams& p, const Gradients& grads, double lr);

// Mean-teacher copy of the main model, tracked by exponential moving average.
struct TeacherState {
  ModelParams params;
  double momentum = 0.99;

  // Same architecture and same initialization as the main model.
  static TeacherState copy_of(const ModelParams& main, double momentum);
};

// teacher <- momentum * teacher + (1 - momentum) * main, elementwise.
void ema_update(TeacherState& teacher, const ModelParams& main);

void save_checkpoint(const ModelParams& p, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace nml
