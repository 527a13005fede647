#include "nml/embedder.hpp"

#include <cmath>
#include <random>

#include <fmt/format.h>

#include "binary_io.hpp"
#include "nml/errors.hpp"

namespace nml {
namespace {

constexpr std::string_view kCheckpointMagic = "NMLP";
constexpr std::uint32_t kCheckpointVersion = 1;

struct LayerShape {
  Eigen::Index in;
  Eigen::Index out;
};

std::vector<LayerShape> layer_shapes(const Architecture& a) {
  if (a.depth == 1) return {{a.d_in, a.d_out}};
  return {{a.d_in, a.hidden}, {a.hidden, a.d_out}};
}

bool same_shape(const ModelParams& a, const ModelParams& b) {
  if (a.arch != b.arch || a.layers.size() != b.layers.size()) return false;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    if (a.layers[l].weight.rows() != b.layers[l].weight.rows() ||
        a.layers[l].weight.cols() != b.layers[l].weight.cols() ||
        a.layers[l].bias.size() != b.layers[l].bias.size()) {
      return false;
    }
  }
  return true;
}

void check_input(const ModelParams& p, const Eigen::MatrixXd& x) {
  if (x.cols() != static_cast<Eigen::Index>(p.arch.d_in)) {
    throw ContractViolation(
        fmt::format("input has {} columns, model expects {}", x.cols(), p.arch.d_in));
  }
  if (!x.allFinite()) throw ContractViolation("non-finite model input");
}

}  // namespace

void Architecture::validate() const {
  if (depth != 1 && depth != 2) throw ConfigError("model depth must be 1 or 2");
  if (d_in == 0 || d_out == 0) throw ConfigError("model dimensions must be positive");
  if (depth == 2 && hidden == 0) throw ConfigError("a depth-2 model needs a hidden width");
}

ModelParams ModelParams::zeros(const Architecture& arch) {
  arch.validate();
  ModelParams p;
  p.arch = arch;
  for (const auto& s : layer_shapes(arch)) {
    p.layers.push_back({Eigen::MatrixXd::Zero(s.in, s.out), Eigen::VectorXd::Zero(s.out)});
  }
  return p;
}

bool ModelParams::all_finite() const {
  for (const auto& layer : layers) {
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) return false;
  }
  return true;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) {
    n += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
  }
  return n;
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  if (!same_shape(a, b)) return false;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    if (a.layers[l].weight != b.layers[l].weight || a.layers[l].bias != b.layers[l].bias) {
      return false;
    }
  }
  return true;
}

ModelParams init_params(const Architecture& arch, std::uint64_t seed) {
  ModelParams p = ModelParams::zeros(arch);
  std::mt19937_64 rng(seed);
  for (auto& layer : p.layers) {
    std::normal_distribution<double> normal(
        0.0, 1.0 / std::sqrt(static_cast<double>(layer.weight.rows())));
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = normal(rng);
  }
  return p;
}

Embeddings forward(const ModelParams& p, const Eigen::MatrixXd& x) {
  ForwardCache cache;
  return forward(p, x, cache);
}

Embeddings forward(const ModelParams& p, const Eigen::MatrixXd& x, ForwardCache& cache) {
  check_input(p, x);
  cache.inputs.clear();
  Eigen::MatrixXd h = x;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    cache.inputs.push_back(h);
    Eigen::MatrixXd a = h * p.layers[l].weight;
    a.rowwise() += p.layers[l].bias.transpose();
    const bool last = l + 1 == p.layers.size();
    if (!last && p.arch.activation == Activation::kTanh) a = a.array().tanh().matrix();
    h = std::move(a);
  }

  cache.norms.resize(h.rows());
  for (Eigen::Index i = 0; i < h.rows(); ++i) {
    double norm = h.row(i).norm();
    if (norm < kMinNorm) {
      h.row(i).array() += kNudge;
      norm = h.row(i).norm();
    }
    cache.norms(i) = norm;
  }
  cache.pre_norm = h;
  Embeddings z = h;
  for (Eigen::Index i = 0; i < z.rows(); ++i) z.row(i) /= cache.norms(i);
  return z;
}

Gradients backward(const ModelParams& p, const ForwardCache& cache,
                   const Eigen::MatrixXd& grad_z) {
  if (grad_z.rows() != cache.pre_norm.rows() || grad_z.cols() != cache.pre_norm.cols() ||
      cache.inputs.size() != p.layers.size()) {
    throw ContractViolation("gradient shape does not match the forward pass");
  }

  // Normalization Jacobian: d(a/|a|) = (I - y y^T) da / |a|.
  Eigen::MatrixXd g(grad_z.rows(), grad_z.cols());
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    const Eigen::RowVectorXd y = cache.pre_norm.row(i) / cache.norms(i);
    g.row(i) = (grad_z.row(i) - y * y.dot(grad_z.row(i))) / cache.norms(i);
  }

  Gradients grads = ModelParams::zeros(p.arch);
  for (std::size_t l = p.layers.size(); l-- > 0;) {
    const Eigen::MatrixXd& in = cache.inputs[l];
    grads.layers[l].weight.noalias() = in.transpose() * g;
    grads.layers[l].bias = g.colwise().sum().transpose();
    if (l == 0) break;
    Eigen::MatrixXd g_in = g * p.layers[l].weight.transpose();
    if (p.arch.activation == Activation::kTanh) {
      g_in.array() *= 1.0 - in.array().square();
    }
    g = std::move(g_in);
  }
  return grads;
}

Gradients backward(const ModelParams& p, const Eigen::MatrixXd& x,
                   const Eigen::MatrixXd& grad_z) {
  ForwardCache cache;
  forward(p, x, cache);
  return backward(p, cache, grad_z);
}

void sgd_step(ModelParams& p, const Gradients& grads, double lr) {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!same_shape(p, grads)) throw ContractViolation("gradient layout does not match model");
  if (!grads.all_finite()) throw NumericError("non-finite gradient; training aborted");
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    p.layers[l].weight -= lr * grads.layers[l].weight;
    p.layers[l].bias -= lr * grads.layers[l].bias;
  }
}

TeacherState TeacherState::copy_of(const ModelParams& main, double momentum) {
  if (!(momentum >= 0.0 && momentum <= 1.0)) {
    throw ConfigError("teacher momentum must lie in [0, 1]");
  }
  return TeacherState{main, momentum};
}

void ema_update(TeacherState& teacher, const ModelParams& main) {
  if (!same_shape(teacher.params, main)) {
    throw ContractViolation("teacher and main model architectures differ");
  }
  const double a = teacher.momentum;
  for (std::size_t l = 0; l < main.layers.size(); ++l) {
    auto& t = teacher.params.layers[l];
    t.weight = a * t.weight + (1.0 - a) * main.layers[l].weight;
    t.bias = a * t.bias + (1.0 - a) * main.layers[l].bias;
  }
}

void save_checkpoint(const ModelParams& p, const std::filesystem::path& path) {
  detail::ByteWriter w;
  w.magic(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u32(p.arch.depth);
  w.u32(p.arch.d_in);
  w.u32(p.arch.hidden);
  w.u32(p.arch.d_out);
  w.u8(static_cast<std::uint8_t>(p.arch.activation));
  p.for_each([&](double v) { w.f64(v); });
  w.write_to(path);
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  auto r = detail::ByteReader::from_file(path);
  r.expect_magic(kCheckpointMagic);
  const std::uint64_t version_at = r.offset();
  if (const auto version = r.u32(); version != kCheckpointVersion) {
    throw FormatError(fmt::format("unsupported checkpoint version {}", version), version_at);
  }
  Architecture arch;
  const std::uint64_t arch_at = r.offset();
  arch.depth = r.u32();
  arch.d_in = r.u32();
  arch.hidden = r.u32();
  arch.d_out = r.u32();
  const std::uint8_t act = r.u8();
  if (act > 1) throw FormatError(fmt::format("bad activation tag {}", act), r.offset() - 1);
  arch.activation = static_cast<Activation>(act);
  ModelParams p;
  try {
    p = ModelParams::zeros(arch);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("bad architecture descriptor: ") + e.what(), arch_at);
  }
  r.require(8 * p.parameter_count(), "parameter block");
  p.for_each([&](double& v) { v = r.f64_unchecked(); });
  r.expect_end();
  return p;
}

}  // namespace nml
