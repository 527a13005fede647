#include "nml/train.hpp"

#include <chrono>
#include <cmath>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "nml/errors.hpp"
#include "nml/interactions.hpp"
#include "nml/losses.hpp"
#include "nml/prism.hpp"
#include "nml/superloss.hpp"

namespace nml {
namespace {

// Seed streams derived from seed.train.
constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kSamplerStream = 1;

struct ExtraColumns {
  const char* first;
  const char* second;
};

ExtraColumns extra_columns(Method m) {
  switch (m) {
    case Method::kContrastive: return {"positive_count", "negative_count"};
    case Method::kTsint: return {"selected_positive_count", "positive_count"};
    case Method::kSuperLoss: return {"mean_sigma_positive", "mean_sigma_negative"};
    case Method::kPrism: return {"kept_count", "prism_threshold"};
  }
  return {"", ""};
}

[[noreturn]] void abort_training(const RunConfig& cfg, const ModelParams& last_good,
                                 std::size_t iter, std::string_view what) {
  std::string where = "no output directory configured";
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    const auto path = cfg.out_dir / "last_good.nmlp";
    save_checkpoint(last_good, path);
    where = "last good checkpoint written to " + path.string();
  }
  throw NumericError(fmt::format("iteration {}: {}; {}", iter, what, where));
}

}  // namespace

double RunReport::mean_sel_precision() const {
  if (iterations.empty()) return 1.0;
  double s = 0.0;
  for (const auto& r : iterations) s += r.sel_precision;
  return s / static_cast<double>(iterations.size());
}

double RunReport::mean_sel_recall() const {
  if (iterations.empty()) return 1.0;
  double s = 0.0;
  for (const auto& r : iterations) s += r.sel_recall;
  return s / static_cast<double>(iterations.size());
}

PreparedData prepare_data(const RunConfig& cfg) {
  cfg.validate();
  PreparedData out;
  if (cfg.data.from_files()) {
    out.train = load_dataset(cfg.data.train_path);
    out.test = load_dataset(cfg.data.test_path);
    // The subset applies to the training split only; test classes may be disjoint.
    if (cfg.data.class_subset > 0) {
      out.train = restrict_classes(out.train, cfg.data.class_subset);
    }
    if (cfg.noise > 0.0 && out.train.corrupted_count() != 0) {
      throw ConfigError("noise > 0 requested on a training file that is already corrupted");
    }
  } else {
    SyntheticSpec spec = cfg.data.synthetic;
    spec.seed = cfg.seeds.data;
    Dataset full = gen_synthetic(spec);
    if (cfg.data.class_subset > 0) full = restrict_classes(full, cfg.data.class_subset);
    TrainTest parts = split_train_test(full, cfg.data.test_fraction, cfg.data.split);
    out.train = std::move(parts.train);
    out.test = std::move(parts.test);
  }
  if (cfg.noise > 0.0) out.train = inject_uniform_noise(out.train, cfg.noise, cfg.seeds.noise);
  if (out.train.dim() != out.test.dim()) {
    throw ConfigError("train and test splits have different input dimensions");
  }
  return out;
}

RunReport run_train(const RunConfig& cfg) { return run_train(cfg, prepare_data(cfg)); }

RunReport run_train(const RunConfig& cfg, const PreparedData& data) {
  const auto started = std::chrono::steady_clock::now();
  cfg.validate();

  Architecture arch;
  arch.depth = cfg.model.depth;
  arch.d_in = static_cast<std::uint32_t>(data.train.dim());
  arch.hidden = cfg.model.depth == 2 ? cfg.model.hidden : 0;
  arch.d_out = cfg.model.out_dim;
  arch.activation = cfg.model.activation;
  arch.validate();

  RunReport report;
  report.config = cfg;
  report.n_train = data.train.size();
  report.n_test = data.test.size();
  report.train_corrupted_fraction = data.train.corrupted_fraction();
  const auto extras = extra_columns(cfg.method);
  report.extra1_name = extras.first;
  report.extra2_name = extras.second;

  double tau = 1.0;
  if (cfg.method == Method::kTsint) {
    tau = cfg.resolved_tau();
    if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("resolved tau must lie in (0, 1]");
    report.resolved_tau = tau;
  }

  BatchSampler sampler(data.train, cfg.batch_size, cfg.per_class,
                       derive_seed(cfg.seeds.train, kSamplerStream));
  ModelParams model = init_params(arch, derive_seed(cfg.seeds.train, kInitStream));

  std::optional<TeacherState> teacher;
  SelectionState selection;
  selection.momentum = cfg.dcut_ema ? cfg.beta : 0.0;
  if (cfg.method == Method::kTsint) teacher = TeacherState::copy_of(model, cfg.alpha);

  SuperLossState superloss;
  superloss.lambda = cfg.superloss.lambda;
  superloss.mode = cfg.superloss.mode;
  superloss.smoothing = cfg.superloss.smoothing;

  std::optional<PrismState> prism;
  if (cfg.method == Method::kPrism) {
    prism.emplace(PrismState::Options{cfg.resolved_prism_rate(), cfg.prism.window,
                                      cfg.prism.capacity, cfg.prism.temperature});
  }

  const Eigen::MatrixXd test_x = all_rows(data.test);
  const std::size_t iters_per_epoch =
      std::max<std::size_t>(1, data.train.size() / cfg.batch_size);
  std::vector<ClassId> clean(cfg.batch_size);
  std::size_t iter = 0;

  for (std::uint32_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t step = 0; step < iters_per_epoch; ++step, ++iter) {
      const Batch batch = sampler.next();
      for (std::size_t i = 0; i < batch.size(); ++i) {
        clean[i] = data.train.clean_labels[batch.indices[i]];
      }
      const Eigen::MatrixXd x = gather_rows(data.train, batch.indices);
      ForwardCache cache;
      const Embeddings z = forward(model, x, cache);
      if (!z.allFinite()) abort_training(cfg, model, iter, "non-finite embedding");
      const DistanceMatrix d = pairwise_distances(z);
      const ObservedMasks masks = observed_masks(batch.labels);

      IterationRecord rec;
      rec.iter = iter;
      MaskMatrix selected = masks.positive;
      LossResult loss;

      switch (cfg.method) {
        case Method::kContrastive:
          loss = contrastive_loss(d, masks.positive, masks.negative, cfg.margin, cfg.exponent);
          rec.extra1 = static_cast<double>(loss.pos_count);
          rec.extra2 = static_cast<double>(loss.neg_count);
          break;
        case Method::kTsint: {
          const Embeddings zt = forward(teacher->params, x);
          if (!zt.allFinite()) abort_training(cfg, model, iter, "non-finite teacher embedding");
          const DistanceMatrix d_teacher = pairwise_distances(zt);
          update_cut(selection, positive_percentile(d_teacher, masks.positive, tau));
          selected = selection_mask(d_teacher, masks.positive, selection);
          loss = tsint_loss(d, selected, masks.negative, cfg.margin);
          rec.d_cut = selection.d_cut;
          rec.extra1 = static_cast<double>(selected.count());
          rec.extra2 = static_cast<double>(masks.positive.count());
          break;
        }
        case Method::kSuperLoss: {
          const InteractionLosses terms = interaction_losses(d, masks.positive, masks.negative,
                                                             cfg.margin, cfg.exponent);
          SuperLossResult sl = superloss_wrap(terms, masks.positive, masks.negative, superloss);
          loss = std::move(sl.loss);
          rec.extra1 = sl.mean_sigma_pos;
          rec.extra2 = sl.mean_sigma_neg;
          break;
        }
        case Method::kPrism: {
          const PrismSelection sel = prism_select(z, batch.labels, *prism);
          loss = prism_loss(d, sel.kept, batch.labels, cfg.margin, cfg.exponent);
          selected.setConstant(false);
          for (std::size_t a : sel.kept) {
            for (std::size_t b : sel.kept) {
              const auto ia = static_cast<Eigen::Index>(a);
              const auto ib = static_cast<Eigen::Index>(b);
              selected(ia, ib) = masks.positive(ia, ib);
            }
          }
          rec.extra1 = static_cast<double>(sel.kept.size());
          rec.extra2 = sel.threshold;
          break;
        }
      }

      if (!std::isfinite(loss.loss)) abort_training(cfg, model, iter, "non-finite loss");
      const Eigen::MatrixXd grad_z = distance_backward(z, d, loss.grad);
      const Gradients grads = backward(model, cache, grad_z);
      if (!grads.all_finite()) abort_training(cfg, model, iter, "non-finite gradient");
      ModelParams updated = model;
      sgd_step(updated, grads, cfg.lr);
      if (!updated.all_finite()) abort_training(cfg, model, iter, "parameters overflowed");
      model = std::move(updated);
      if (teacher && cfg.teacher_ema) ema_update(*teacher, model);

      const auto quality = selection_quality(selected, masks.positive, clean);
      rec.loss = loss.loss;
      rec.pos_loss = loss.pos_loss;
      rec.neg_loss = loss.neg_loss;
      rec.sel_ratio = static_cast<double>(selected.count()) /
                      static_cast<double>(masks.positive.count());
      rec.sel_precision = quality.precision;
      rec.sel_recall = quality.recall;
      report.iterations.push_back(rec);
    }
    const MetricsReport m = evaluate_retrieval(forward(model, test_x), data.test.clean_labels);
    report.epochs.push_back({epoch, m});
    spdlog::debug("epoch {}: P@1={} MAP@R={} mAP={}", epoch, m.precision_at_1, m.map_at_r,
                  m.mean_ap);
  }

  report.final_metrics = report.epochs.empty()
                             ? evaluate_retrieval(forward(model, test_x), data.test.clean_labels)
                             : report.epochs.back().metrics;
  report.model = std::move(model);
  if (teacher) report.teacher = std::move(teacher->params);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

MetricsReport run_eval(const ModelParams& model, const Dataset& d) {
  if (d.dim() != model.arch.d_in) {
    throw ContractViolation(fmt::format("checkpoint expects {} input features, dataset has {}",
                                        model.arch.d_in, d.dim()));
  }
  return evaluate_retrieval(forward(model, all_rows(d)), d.clean_labels);
}

MetricsReport run_eval(const std::filesystem::path& checkpoint,
                       const std::filesystem::path& dataset) {
  return run_eval(load_checkpoint(checkpoint), load_dataset(dataset));
}

}  // namespace nml
