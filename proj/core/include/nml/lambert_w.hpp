#pragma once

namespace nml {

// Principal branch W0 of the Lambert W function: the w >= -1 solving
// w * exp(w) = x. Throws std::domain_error for x < -1/e (inputs within
// 1e-12 below the branch point are treated as -1/e).
double lambert_w0(double x);

}  // namespace nml
