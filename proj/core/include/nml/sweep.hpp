#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nml/config.hpp"

namespace nml {

enum class SweepAxis { kNoise, kTau, kSubset };

std::string_view to_string(SweepAxis a);
SweepAxis parse_axis(std::string_view s);  // noise|tau|subset

struct SweepSpec {
  SweepAxis axis = SweepAxis::kNoise;
  std::vector<double> grid;
  std::vector<Method> methods;  // empty: the base config's method
  RunConfig base;
  // When set, every member run also emits its own report under
  // <out_dir>/points/<index>_<method>/.
  std::filesystem::path out_dir;
};

// Comma-separated grid. For the tau axis entries may be written relative to
// the estimated value of the base config: "auto", "auto-0.1", "auto+0.1".
std::vector<double> parse_grid(std::string_view text, SweepAxis axis, const RunConfig& base);

struct SweepRow {
  SweepAxis axis = SweepAxis::kNoise;
  double value = 0.0;
  Method method = Method::kTsint;
  double noise = 0.0;
  std::optional<double> tau;
  double p_at_1 = 0.0;
  double map_at_r = 0.0;
  double mean_ap = 0.0;
  double sel_precision = 0.0;
  double sel_recall = 0.0;
  std::optional<double> p1_ratio;  // subset axis: P@1(noise) / P@1(0)
  std::string status = "ok";
};

// Runs every (grid point, method) pair. Grid points share the data and train
// seeds; the noise seed is derived per point. Class-subset points train once
// at noise 0 and once at the base noise rate. Failed runs are recorded in
// their row's status and the sweep continues.
std::vector<SweepRow> run_sweep(const SweepSpec& spec);

std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace nml
