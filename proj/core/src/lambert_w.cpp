#include "nml/lambert_w.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace nml {
namespace {

constexpr double kE = 2.718281828459045;
constexpr double kInvE = 0.36787944117144233;
constexpr double kBranchSlack = 1e-12;
constexpr int kMaxIterations = 64;

double initial_guess(double x) {
  // Puiseux series around the branch point.
  if (x < -0.25) {
    const double p = std::sqrt(std::max(0.0, 2.0 * (kE * x + 1.0)));
    return -1.0 + p * (1.0 + p * (-1.0 / 3.0 + p * 11.0 / 72.0));
  }
  if (x < 3.0) return 0.5 * std::log1p(x) + 0.25 * x / (1.0 + x);
  // Asymptotic expansion for large x.
  const double l1 = std::log(x);
  const double l2 = std::log(l1);
  return l1 - l2 + l2 / l1;
}

}  // namespace

double lambert_w0(double x) {
  if (std::isnan(x)) throw std::domain_error("lambert_w0: NaN argument");
  if (x < -kInvE - kBranchSlack) {
    throw std::domain_error("lambert_w0: argument " + std::to_string(x) + " is below -1/e");
  }
  if (x <= -kInvE) return -1.0;
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return x;

  // Halley iteration on f(w) = w e^w - x.
  double w = initial_guess(x);
  for (int i = 0; i < kMaxIterations; ++i) {
    const double ew = std::exp(w);
    const double f = w * ew - x;
    const double wp1 = w + 1.0;
    if (wp1 == 0.0) break;
    const double denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
    const double step = f / denom;
    w -= step;
    if (std::abs(step) <= 4.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(w))) {
      break;
    }
  }
  return w;
}

}  // namespace nml
