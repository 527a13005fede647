#include <fstream>

#include <fmt/format.h>

#include "nml/train.hpp"

namespace nml {
namespace {

std::string optional_number(const std::optional<double>& v) {
  return v ? format_number(*v) : std::string();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace

std::string manifest_text(const RunReport& report) {
  std::string out = "# nmlab run manifest\n";
  out += fmt::format("run.version = {}\n", kVersion);
  for (const auto& key : config_keys()) {
    // The output location is not part of the experiment.
    if (key == "out") continue;
    out += fmt::format("{} = {}\n", key, config_value(report.config, key));
  }
  const RunConfig& cfg = report.config;
  out += fmt::format("run.resolved_tau = {}\n", optional_number(report.resolved_tau));
  out += fmt::format("run.tau_source = {}\n", cfg.tau ? "config" : "estimated");
  if (cfg.method == Method::kPrism) {
    out += fmt::format("run.resolved_prism_rate = {}\n", format_number(cfg.resolved_prism_rate()));
  }
  out += "run.loss_aggregation = mean over positives + mean over negatives; "
         "constant 1/B^2 factor omitted\n";
  out += fmt::format("run.extra1 = {}\n", report.extra1_name);
  out += fmt::format("run.extra2 = {}\n", report.extra2_name);
  out += fmt::format("run.n_train = {}\n", report.n_train);
  out += fmt::format("run.n_test = {}\n", report.n_test);
  out += fmt::format("run.train_corrupted_fraction = {}\n",
                     format_number(report.train_corrupted_fraction));
  out += fmt::format("run.iterations = {}\n", report.iterations.size());
  out += fmt::format("run.epochs_completed = {}\n", report.epochs.size());
  const MetricsReport& m = report.final_metrics;
  out += fmt::format("result.p_at_1 = {}\n", format_number(m.precision_at_1));
  out += fmt::format("result.map_at_r = {}\n", format_number(m.map_at_r));
  out += fmt::format("result.mean_ap = {}\n", format_number(m.mean_ap));
  out += fmt::format("result.n_queries = {}\n", m.n_queries);
  out += fmt::format("result.n_excluded = {}\n", m.n_excluded);
  out += fmt::format("result.mean_sel_precision = {}\n", format_number(report.mean_sel_precision()));
  out += fmt::format("result.mean_sel_recall = {}\n", format_number(report.mean_sel_recall()));
  return out;
}

std::string iterations_csv(const RunReport& report) {
  std::string out =
      "iter,loss,pos_loss,neg_loss,d_cut,sel_ratio,sel_precision,sel_recall,extra1,extra2\n";
  for (const auto& r : report.iterations) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", r.iter, format_number(r.loss),
                       format_number(r.pos_loss), format_number(r.neg_loss),
                       optional_number(r.d_cut), format_number(r.sel_ratio),
                       format_number(r.sel_precision), format_number(r.sel_recall),
                       optional_number(r.extra1), optional_number(r.extra2));
  }
  return out;
}

std::string epochs_csv(const RunReport& report) {
  std::string out = "epoch,p_at_1,map_at_r,mean_ap\n";
  for (const auto& e : report.epochs) {
    out += fmt::format("{},{},{},{}\n", e.epoch, format_number(e.metrics.precision_at_1),
                       format_number(e.metrics.map_at_r), format_number(e.metrics.mean_ap));
  }
  return out;
}

void emit_report(const RunReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " +
                                   ec.message());
  write_text(dir / "manifest.txt", manifest_text(report));
  write_text(dir / "iters.csv", iterations_csv(report));
  write_text(dir / "epochs.csv", epochs_csv(report));
  save_checkpoint(report.model, dir / "model.nmlp");
  if (report.teacher) save_checkpoint(*report.teacher, dir / "teacher.nmlp");
  write_text(dir / "timing.txt", fmt::format("wall_seconds = {:.3f}\n", report.wall_seconds));
}

}  // namespace nml
