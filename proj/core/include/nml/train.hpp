#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nml/config.hpp"
#include "nml/dataset.hpp"
#include "nml/embedder.hpp"
#include "nml/metrics.hpp"

namespace nml {

inline constexpr std::string_view kVersion = "nmlab 0.1.0";

// One row of iters.csv.
struct IterationRecord {
  std::size_t iter = 0;
  double loss = 0.0;
  double pos_loss = 0.0;
  double neg_loss = 0.0;
  std::optional<double> d_cut;
  double sel_ratio = 1.0;
  double sel_precision = 1.0;
  double sel_recall = 1.0;
  std::optional<double> extra1;
  std::optional<double> extra2;
};

struct EpochRecord {
  std::size_t epoch = 0;
  MetricsReport metrics;
};

struct RunReport {
  RunConfig config;
  std::optional<double> resolved_tau;  // tsint only
  std::vector<IterationRecord> iterations;
  std::vector<EpochRecord> epochs;
  MetricsReport final_metrics;
  ModelParams model;
  std::optional<ModelParams> teacher;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  double train_corrupted_fraction = 0.0;
  std::string extra1_name;
  std::string extra2_name;
  double wall_seconds = 0.0;

  double mean_sel_precision() const;
  double mean_sel_recall() const;
};

struct PreparedData {
  Dataset train;  // observed labels carry the injected noise
  Dataset test;   // clean
};

// Loads or generates the splits, applies the class subset and injects the
// configured noise into the training split (seed.noise).
PreparedData prepare_data(const RunConfig& cfg);

// Full training run; deterministic given the config. Throws ConfigError
// before any compute for invalid configs and NumericError on a non-finite
// loss or gradient (after writing last_good.nmlp into cfg.out_dir if set).
RunReport run_train(const RunConfig& cfg);
RunReport run_train(const RunConfig& cfg, const PreparedData& data);

// Embeds `d` and scores retrieval against its clean labels.
MetricsReport run_eval(const ModelParams& model, const Dataset& d);
MetricsReport run_eval(const std::filesystem::path& checkpoint,
                       const std::filesystem::path& dataset);

// Writes manifest.txt, iters.csv, epochs.csv, model.nmlp (+ teacher.nmlp)
// and timing.txt into `dir`. Everything except timing.txt is a pure
// function of the report.
void emit_report(const RunReport& report, const std::filesystem::path& dir);

std::string manifest_text(const RunReport& report);
std::string iterations_csv(const RunReport& report);
std::string epochs_csv(const RunReport& report);

}  // namespace nml
