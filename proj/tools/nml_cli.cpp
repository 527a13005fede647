// nml: generate, corrupt, train, evaluate and sweep noisy-label metric
// learning experiments.
//
// Exit codes: 0 success, 2 configuration error, 3 runtime/numeric failure.

#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "nml/config.hpp"
#include "nml/dataset.hpp"
#include "nml/errors.hpp"
#include "nml/sweep.hpp"
#include "nml/train.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Overrides {
  std::map<std::string, std::string> values;

  // One --<key> flag per config key.
  void attach(CLI::App& app) {
    for (const auto& key : nml::config_keys()) {
      if (key == "out") continue;
      app.add_option_function<std::string>(
             "--" + key, [this, key](const std::string& v) { values[key] = v; },
             "Override config key " + key)
          ->group("Config overrides");
    }
  }

  void apply(nml::RunConfig& cfg) const {
    for (const auto& [k, v] : values) nml::apply_setting(cfg, k, v);
  }
};

nml::RunConfig base_config(const std::string& path) {
  return path.empty() ? nml::RunConfig{} : nml::load_config(path);
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << text;
}

void print_metrics(const nml::MetricsReport& m) {
  fmt::print("p_at_1 = {}\nmap_at_r = {}\nmean_ap = {}\nn_queries = {}\nn_excluded = {}\n",
             nml::format_number(m.precision_at_1), nml::format_number(m.map_at_r),
             nml::format_number(m.mean_ap), m.n_queries, m.n_excluded);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noise-robust deep metric learning laboratory"};
  app.require_subcommand(1);
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off")
      ->capture_default_str();

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic class-clustered dataset");
  nml::SyntheticSpec spec;
  std::string gen_out;
  std::string gen_test_out;
  std::string gen_csv;
  double gen_test_fraction = 0.5;
  std::string gen_split = "samples";
  gen->add_option("--classes", spec.n_classes, "Number of classes")->capture_default_str();
  gen->add_option("--per-class", spec.per_class, "Samples per class")->capture_default_str();
  gen->add_option("--dim", spec.dim, "Input dimension")->capture_default_str();
  gen->add_option("--separation", spec.separation, "Class-center scale")->capture_default_str();
  gen->add_option("--sigma", spec.sigma, "Within-class standard deviation")
      ->capture_default_str();
  gen->add_option("--seed", spec.seed, "Generation seed")->capture_default_str();
  gen->add_option("--out", gen_out, "Output dataset file (train split when --test-out is set)")
      ->required();
  gen->add_option("--test-out", gen_test_out, "Also write a test split to this file");
  gen->add_option("--test-fraction", gen_test_fraction, "Share held out for test")
      ->capture_default_str();
  gen->add_option("--split", gen_split, "samples|classes")->capture_default_str();
  gen->add_option("--csv", gen_csv, "Also export the (train) dataset as CSV");

  // corrupt
  auto* corrupt = app.add_subcommand("corrupt", "Inject uniform label noise");
  std::string corrupt_in;
  std::string corrupt_out;
  double corrupt_rate = 0.0;
  std::uint64_t corrupt_seed = 0;
  corrupt->add_option("--in", corrupt_in, "Clean dataset file")->required();
  corrupt->add_option("--out", corrupt_out, "Corrupted dataset file")->required();
  corrupt->add_option("--rate", corrupt_rate, "Noise rate in [0, 1]")->required();
  corrupt->add_option("--seed", corrupt_seed, "Noise seed")->capture_default_str();

  // export
  auto* exporter = app.add_subcommand("export", "Export a dataset file as CSV");
  std::string export_in;
  std::string export_out;
  exporter->add_option("--in", export_in, "Dataset file")->required();
  exporter->add_option("--out", export_out, "CSV file (stdout when omitted)");

  // train
  auto* train = app.add_subcommand("train", "Run one training experiment");
  std::string train_config;
  std::string train_out;
  Overrides train_overrides;
  train->add_option("--config", train_config, "Config file (key = value)");
  train->add_option("--out", train_out, "Output directory")->required();
  train_overrides.attach(*train);

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  std::string eval_checkpoint;
  std::string eval_data;
  eval->add_option("--checkpoint", eval_checkpoint, "Model checkpoint (.nmlp)")->required();
  eval->add_option("--data", eval_data, "Dataset file (.nmld)")->required();

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Run a grid of experiments along one axis");
  std::string sweep_axis;
  std::string sweep_grid;
  std::string sweep_config;
  std::string sweep_out;
  std::vector<std::string> sweep_methods;
  Overrides sweep_overrides;
  sweep->add_option("--axis", sweep_axis, "noise|tau|subset")->required();
  sweep->add_option("--grid", sweep_grid, "Comma-separated grid, e.g. 0,0.1,0.2 or auto-0.1,auto")
      ->required();
  sweep->add_option("--config", sweep_config, "Base config file");
  sweep->add_option("--out", sweep_out, "Output directory")->required();
  sweep->add_option("--methods", sweep_methods, "Methods to compare (default: config method)")
      ->delimiter(',');
  sweep_overrides.attach(*sweep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  spdlog::set_default_logger(spdlog::stderr_color_mt("nml"));
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*gen) {
      const nml::Dataset full = nml::gen_synthetic(spec);
      nml::Dataset primary = full;
      if (!gen_test_out.empty()) {
        if (gen_split != "samples" && gen_split != "classes") {
          throw nml::ConfigError("--split must be samples or classes");
        }
        auto parts = nml::split_train_test(full, gen_test_fraction,
                                           gen_split == "samples" ? nml::SplitPolicy::kSamples
                                                                  : nml::SplitPolicy::kClasses);
        nml::save_dataset(parts.test, gen_test_out);
        primary = std::move(parts.train);
      }
      nml::save_dataset(primary, gen_out);
      if (!gen_csv.empty()) {
        std::ofstream csv(gen_csv);
        nml::export_csv(primary, csv);
      }
      fmt::print("wrote {} samples x {} features ({} classes) to {}\n", primary.size(),
                 primary.dim(), primary.n_classes, gen_out);
    } else if (*corrupt) {
      const nml::Dataset noisy =
          nml::inject_uniform_noise(nml::load_dataset(corrupt_in), corrupt_rate, corrupt_seed);
      nml::save_dataset(noisy, corrupt_out);
      fmt::print("corrupted {} of {} labels ({})\n", noisy.corrupted_count(), noisy.size(),
                 nml::format_number(noisy.corrupted_fraction()));
    } else if (*exporter) {
      const nml::Dataset d = nml::load_dataset(export_in);
      if (export_out.empty()) {
        nml::export_csv(d, std::cout);
      } else {
        std::ofstream csv(export_out);
        nml::export_csv(d, csv);
      }
    } else if (*train) {
      nml::RunConfig cfg = base_config(train_config);
      train_overrides.apply(cfg);
      cfg.out_dir = train_out;
      cfg.validate();
      const nml::RunReport report = nml::run_train(cfg);
      nml::emit_report(report, cfg.out_dir);
      print_metrics(report.final_metrics);
      fmt::print("wall_seconds = {:.3f}\n", report.wall_seconds);
    } else if (*eval) {
      print_metrics(nml::run_eval(eval_checkpoint, eval_data));
    } else if (*sweep) {
      nml::SweepSpec s;
      s.base = base_config(sweep_config);
      sweep_overrides.apply(s.base);
      s.base.validate();
      s.axis = nml::parse_axis(sweep_axis);
      s.grid = nml::parse_grid(sweep_grid, s.axis, s.base);
      for (const auto& m : sweep_methods) s.methods.push_back(nml::parse_method(m));
      s.out_dir = sweep_out;
      std::filesystem::create_directories(s.out_dir);
      const auto rows = nml::run_sweep(s);
      const std::string table = nml::sweep_csv(rows);
      write_file(s.out_dir / "sweep.csv", table);
      fmt::print("{}", table);
    }
  } catch (const nml::ConfigError& e) {
    fmt::print(stderr, "configuration error: {}\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitRuntime;
  }
  return 0;
}
