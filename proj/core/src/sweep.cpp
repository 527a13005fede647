#include "nml/sweep.hpp"

#include <charconv>
#include <cmath>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "nml/errors.hpp"
#include "nml/interactions.hpp"
#include "nml/train.hpp"

namespace nml {
namespace {

double parse_grid_number(std::string_view s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw ConfigError(fmt::format("bad grid value \"{}\"", s));
  }
  return v;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

struct Outcome {
  std::optional<RunReport> report;
  std::string status = "ok";
};

Outcome attempt(const RunConfig& cfg, const std::filesystem::path& out_dir) {
  Outcome o;
  try {
    o.report = run_train(cfg);
    if (!out_dir.empty()) emit_report(*o.report, out_dir);
  } catch (const std::exception& e) {
    o.status = fmt::format("failed: {}", e.what());
    spdlog::error("sweep member failed: {}", e.what());
  }
  return o;
}

// Keeps the status a single CSV field.
std::string csv_field(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  }
  return s;
}

}  // namespace

std::string_view to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::kNoise: return "noise";
    case SweepAxis::kTau: return "tau";
    case SweepAxis::kSubset: return "subset";
  }
  return "?";
}

SweepAxis parse_axis(std::string_view s) {
  if (s == "noise") return SweepAxis::kNoise;
  if (s == "tau") return SweepAxis::kTau;
  if (s == "subset") return SweepAxis::kSubset;
  throw ConfigError(fmt::format("unknown sweep axis \"{}\" (noise|tau|subset)", s));
}

std::vector<double> parse_grid(std::string_view text, SweepAxis axis, const RunConfig& base) {
  std::vector<double> grid;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const std::string_view item = trim(text.substr(0, comma));
    text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
    if (item.empty()) throw ConfigError("empty grid entry");
    if (item.starts_with("auto")) {
      if (axis != SweepAxis::kTau) throw ConfigError("\"auto\" grid entries need --axis tau");
      const double offset = item.size() == 4 ? 0.0 : parse_grid_number(item.substr(4));
      grid.push_back(estimate_tau(base.noise, base.per_class) + offset);
    } else {
      grid.push_back(parse_grid_number(item));
    }
  }
  if (grid.empty()) throw ConfigError("sweep grid is empty");
  for (double v : grid) {
    switch (axis) {
      case SweepAxis::kNoise:
        if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("noise grid values must lie in [0, 1]");
        break;
      case SweepAxis::kTau:
        if (!(v > 0.0 && v <= 1.0)) throw ConfigError("tau grid values must lie in (0, 1]");
        break;
      case SweepAxis::kSubset:
        if (v < 2.0 || v != std::floor(v)) {
          throw ConfigError("subset grid values must be integers >= 2");
        }
        break;
    }
  }
  return grid;
}

std::vector<SweepRow> run_sweep(const SweepSpec& spec) {
  spec.base.validate();
  const std::vector<Method> methods =
      spec.methods.empty() ? std::vector<Method>{spec.base.method} : spec.methods;

  std::vector<SweepRow> rows;
  for (std::size_t point = 0; point < spec.grid.size(); ++point) {
    const double value = spec.grid[point];
    for (Method method : methods) {
      RunConfig cfg = spec.base;
      cfg.method = method;
      cfg.out_dir.clear();
      switch (spec.axis) {
        case SweepAxis::kNoise:
          cfg.noise = value;
          cfg.seeds.noise = derive_seed(spec.base.seeds.noise, point);
          break;
        case SweepAxis::kTau:
          cfg.tau = value;
          break;
        case SweepAxis::kSubset:
          cfg.data.class_subset = static_cast<std::uint32_t>(value);
          break;
      }

      SweepRow row;
      row.axis = spec.axis;
      row.value = value;
      row.method = method;
      row.noise = cfg.noise;
      std::filesystem::path dir;
      if (!spec.out_dir.empty()) {
        dir = spec.out_dir / "points" / fmt::format("{:03}_{}", point, to_string(method));
      }
      const Outcome run = attempt(cfg, dir);
      row.status = run.status;
      if (run.report) {
        const auto& r = *run.report;
        row.tau = r.resolved_tau;
        row.p_at_1 = r.final_metrics.precision_at_1;
        row.map_at_r = r.final_metrics.map_at_r;
        row.mean_ap = r.final_metrics.mean_ap;
        row.sel_precision = r.mean_sel_precision();
        row.sel_recall = r.mean_sel_recall();
      }

      if (spec.axis == SweepAxis::kSubset && run.report) {
        RunConfig clean_cfg = cfg;
        clean_cfg.noise = 0.0;
        std::filesystem::path clean_dir;
        if (!dir.empty()) clean_dir = dir.string() + "_clean";
        const Outcome reference = attempt(clean_cfg, clean_dir);
        if (!reference.report) {
          row.status = "reference " + reference.status;
        } else if (reference.report->final_metrics.precision_at_1 > 0.0) {
          row.p1_ratio = row.p_at_1 / reference.report->final_metrics.precision_at_1;
        }
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out =
      "axis,value,method,noise,tau,p_at_1,map_at_r,mean_ap,sel_precision,sel_recall,"
      "p1_ratio,status\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{}\n", to_string(r.axis),
                       format_number(r.value), to_string(r.method), format_number(r.noise),
                       r.tau ? format_number(*r.tau) : "", format_number(r.p_at_1),
                       format_number(r.map_at_r), format_number(r.mean_ap),
                       format_number(r.sel_precision), format_number(r.sel_recall),
                       r.p1_ratio ? format_number(*r.p1_ratio) : "", csv_field(r.status));
  }
  return out;
}

}  // namespace nml
