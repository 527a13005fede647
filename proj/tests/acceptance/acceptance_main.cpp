// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 if any fail.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "nml/config.hpp"
#include "nml/dataset.hpp"
#include "nml/embedder.hpp"
#include "nml/interactions.hpp"
#include "nml/lambert_w.hpp"
#include "nml/losses.hpp"
#include "nml/metrics.hpp"
#include "nml/superloss.hpp"
#include "nml/sweep.hpp"
#include "nml/train.hpp"
#include "oracles.hpp"

#ifndef NML_DESK_CONFIG
#error "NML_DESK_CONFIG must name the desk-scale config file"
#endif

namespace {

using nml::ClassId;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

std::string fmt_num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string fmt_sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

void report(int id, const char* name, double limit_s, const std::function<Outcome()>& check) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  if (limit_s > 0 && secs >= limit_s) {
    o.pass = false;
    o.detail += "; over time budget of " + fmt_num(limit_s, 0) + " s";
  }
  if (!o.pass) ++failures;
  std::printf("%s [%02d] %s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(),
              secs);
  std::fflush(stdout);
}

nml::RunConfig desk() { return nml::load_config(NML_DESK_CONFIG); }

// Seed triple for replicate s, kept apart from the shipped defaults.
nml::RunConfig with_seed(nml::RunConfig c, std::uint64_t s) {
  c.seeds.data = s;
  c.seeds.noise = s + 10;
  c.seeds.train = s + 20;
  return c;
}

double p_at_1(const nml::RunConfig& c) { return nml::run_train(c).final_metrics.precision_at_1; }

Eigen::MatrixXd gaussian(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

// 1. Closed-form tau estimate against the reported per-noise tau values.
Outcome tau_estimate() {
  const double rates[] = {0.1, 0.2, 0.5, 0.7};
  const double exact[] = {0.8575, 0.73, 0.4375, 0.3175};
  const double reported[] = {0.84, 0.74, 0.44, 0.34};
  Outcome o{true, ""};
  for (int i = 0; i < 4; ++i) {
    const double t = nml::estimate_tau(rates[i], 4);
    const bool ok = std::abs(t - exact[i]) < 1e-12 && std::abs(t - reported[i]) <= 0.03;
    o.pass = o.pass && ok;
    o.detail += "r=" + fmt_num(rates[i], 1) + "->" + fmt_num(t) + " ";
  }
  return o;
}

// 2. Parameter gradients of the full tsint pipeline against central differences.
Outcome tsint_gradients() {
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  int configs = 0;
  for (int trial = 0; trial < 24; ++trial) {
    const std::uint32_t b = 2 + trial % 5;   // 2..6
    const std::uint32_t d_in = 2 + trial % 7;  // 2..8
    const std::uint32_t depth = 1 + trial % 2;
    nml::Architecture arch{depth, d_in, depth == 2 ? 5u : 0u, 3,
                           depth == 2 ? nml::Activation::kTanh : nml::Activation::kNone};
    nml::ModelParams p = nml::init_params(arch, 100 + trial);
    const Eigen::MatrixXd x = gaussian(b, d_in, rng);
    std::vector<ClassId> labels;
    std::uniform_int_distribution<ClassId> lab(0, 1);
    for (std::uint32_t i = 0; i < b; ++i) labels.push_back(lab(rng));
    labels[0] = 0;  // both classes present, so negatives exist
    labels[1] = 1;
    const auto masks = nml::observed_masks(labels);

    // Frozen selection from an independent teacher.
    const nml::ModelParams teacher = nml::init_params(arch, 900 + trial);
    const auto dt = nml::pairwise_distances(nml::forward(teacher, x));
    nml::SelectionState sel_state;
    nml::update_cut(sel_state, nml::positive_percentile(dt, masks.positive, 0.6));
    const nml::MaskMatrix sel = nml::selection_mask(dt, masks.positive, sel_state);
    const double margin = 1.0;

    auto loss_of = [&](const nml::ModelParams& q) {
      const auto d = nml::pairwise_distances(nml::forward(q, x));
      return nml::tsint_loss(d, sel, masks.negative, margin).loss;
    };
    nml::ForwardCache cache;
    const Eigen::MatrixXd z = nml::forward(p, x, cache);
    const auto d = nml::pairwise_distances(z);
    const auto l = nml::tsint_loss(d, sel, masks.negative, margin);
    const auto g = nml::backward(p, cache, nml::distance_backward(z, d, l.grad));
    std::vector<double> analytic;
    g.for_each([&](double v) { analytic.push_back(v); });

    std::vector<double*> slots;
    p.for_each([&](double& v) { slots.push_back(&v); });
    const double h = 1e-6;
    for (std::size_t k = 0; k < slots.size(); ++k) {
      const double keep = *slots[k];
      *slots[k] = keep + h;
      const double up = loss_of(p);
      *slots[k] = keep - h;
      const double dn = loss_of(p);
      *slots[k] = keep;
      const double fd = (up - dn) / (2 * h);
      const double scale = std::max({std::abs(fd), std::abs(analytic[k]), 1e-6});
      worst = std::max(worst, std::abs(fd - analytic[k]) / scale);
    }
    ++configs;
  }
  return {worst <= 1e-4,
          std::to_string(configs) + " configs, worst relative error " + fmt_sci(worst)};
}

// 3. SuperLoss weight against a brute-force minimizer, and Lambert W residuals.
Outcome superloss_closed_form() {
  // Keep (l - tau) / lambda above -2/e where the objective is bounded below.
  double worst_sigma = 0.0;
  for (int i = 0; i < 10; ++i) {
    const double lt = -0.18 + (5.0 + 0.18) * i / 9.0;
    for (int j = 0; j < 10; ++j) {
      const double lambda = 0.25 + 2.25 * j / 9.0;
      const double closed = nml::superloss_sigma(lt, 0.0, lambda);
      const double grid = oracle::sigma_by_grid(lt, lambda, 4.0, 400000);
      worst_sigma = std::max(worst_sigma, std::abs(closed - grid));
    }
  }
  double worst_w = 0.0;
  const double lo = -1.0 / std::exp(1.0);
  for (int i = 0; i < 1000; ++i) {
    const double x = lo + (10.0 - lo) * i / 999.0;
    const double w = nml::lambert_w0(x);
    worst_w = std::max(worst_w, std::abs(w * std::exp(w) - x));
  }
  return {worst_sigma <= 1e-3 && worst_w <= 1e-12,
          "max |sigma - grid| " + fmt_sci(worst_sigma) + ", max |W e^W - x| " + fmt_sci(worst_w)};
}

// 4. Retrieval metrics against pairwise enumeration.
Outcome metric_oracles() {
  std::mt19937_64 rng(77);
  double worst = 0.0;
  bool counts_ok = true;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + rng() % 29;  // 2..30
    const int dim = 1 + static_cast<int>(rng() % 3);
    const ClassId classes = 1 + static_cast<ClassId>(rng() % 5);
    // Half the instances use an integer lattice so distance ties occur.
    const bool lattice = t % 2 == 0;
    std::uniform_int_distribution<int> coord(-2, 2);
    std::normal_distribution<double> g;
    Eigen::MatrixXd e(n, dim);
    oracle::Table rows(n, std::vector<double>(dim));
    std::vector<ClassId> labels;
    for (std::size_t i = 0; i < n; ++i) {
      for (int k = 0; k < dim; ++k) {
        e(i, k) = lattice ? coord(rng) : g(rng);
        rows[i][k] = e(i, k);
      }
      labels.push_back(static_cast<ClassId>(rng() % classes));
    }
    const auto m = nml::evaluate_retrieval(e, labels);
    const auto ref = oracle::retrieval(rows, labels);
    counts_ok = counts_ok && m.n_queries == ref.queries;
    worst = std::max({worst, std::abs(m.precision_at_1 - ref.p_at_1),
                      std::abs(m.map_at_r - ref.map_at_r), std::abs(m.mean_ap - ref.mean_ap)});
  }
  return {counts_ok && worst <= 1e-12, "100 instances, max deviation " + fmt_sci(worst)};
}

// 5. A teacher that separates true classes recovers the clean positives.
Outcome perfect_teacher() {
  nml::SyntheticSpec spec;
  spec.n_classes = 10;
  spec.per_class = 8;
  spec.seed = 5;
  const auto noisy = nml::inject_uniform_noise(nml::gen_synthetic(spec), 0.5, 6);
  nml::BatchSampler sampler(noisy, 40, 4, 7);
  const auto batch = sampler.next();
  std::vector<ClassId> clean;
  for (auto i : batch.indices) clean.push_back(noisy.clean_labels[i]);

  // One-hot by clean class plus jitter: same class < 0.2 apart, others > 0.8.
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> jitter(-0.02, 0.02);
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(batch.size(), spec.n_classes);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    t(i, clean[i]) = 1.0;
    for (Eigen::Index k = 0; k < t.cols(); ++k) t(i, k) += jitter(rng);
  }
  const auto d = nml::pairwise_distances(t);
  const auto masks = nml::observed_masks(batch.labels);
  nml::SelectionState s;
  s.d_cut = 0.5;
  const auto sel = nml::selection_mask(d, masks.positive, s);

  std::size_t mismatches = 0;
  std::size_t false_pairs = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (std::size_t j = 0; j < batch.size(); ++j) {
      const bool truth = masks.positive(i, j) && clean[i] == clean[j];
      if (masks.positive(i, j) && !truth) ++false_pairs;
      if (sel(i, j) != truth) ++mismatches;
    }
  }
  const auto q = nml::selection_quality(sel, masks.positive, clean);
  return {mismatches == 0 && q.precision == 1.0 && q.recall == 1.0 && false_pairs > 0,
          std::to_string(false_pairs) + " false positives in batch, " +
              std::to_string(mismatches) + " mask mismatches, precision " +
              fmt_num(q.precision) + " recall " + fmt_num(q.recall)};
}

// 6. Without momentum the kept share tracks tau batch by batch.
Outcome selection_ratio() {
  nml::SyntheticSpec spec;
  spec.seed = 11;
  const auto noisy = nml::inject_uniform_noise(nml::gen_synthetic(spec), 0.5, 12);
  const nml::ModelParams teacher =
      nml::init_params(nml::Architecture{2, 64, 32, 16, nml::Activation::kTanh}, 13);
  Outcome o{true, ""};
  for (double tau : {0.3, 0.5, 0.8}) {
    nml::BatchSampler sampler(noisy, 80, 4, 14);
    nml::SelectionState s;
    s.momentum = 0.0;
    double sum = 0.0;
    for (int b = 0; b < 500; ++b) {
      const auto batch = sampler.next();
      const auto d = nml::pairwise_distances(nml::forward(teacher, nml::gather_rows(noisy, batch.indices)));
      const auto masks = nml::observed_masks(batch.labels);
      nml::update_cut(s, nml::positive_percentile(d, masks.positive, tau));
      const auto sel = nml::selection_mask(d, masks.positive, s);
      sum += static_cast<double>(sel.count()) / static_cast<double>(masks.positive.count());
    }
    const double mean = sum / 500.0;
    o.pass = o.pass && std::abs(mean - tau) <= 0.02;
    o.detail += "tau " + fmt_num(tau, 1) + " kept " + fmt_num(mean) + "  ";
  }
  return o;
}

// 7. Noise robustness at desk scale.
Outcome desk_robustness() {
  nml::RunConfig c = desk();
  c.noise = 0.5;
  c.tau.reset();
  auto run = [&](nml::Method m, double noise) {
    nml::RunConfig r = c;
    r.method = m;
    r.noise = noise;
    return p_at_1(r);
  };
  const double t0 = run(nml::Method::kTsint, 0.0);
  const double t5 = run(nml::Method::kTsint, 0.5);
  const double c0 = run(nml::Method::kContrastive, 0.0);
  const double c5 = run(nml::Method::kContrastive, 0.5);
  const double tr = t5 / t0;
  const double cr = c5 / c0;
  return {tr >= 0.95 && cr <= 0.85, "tsint " + fmt_num(t5, 3) + "/" + fmt_num(t0, 3) + " = " +
                                        fmt_num(tr, 3) + ", contrastive " + fmt_num(c5, 3) + "/" +
                                        fmt_num(c0, 3) + " = " + fmt_num(cr, 3)};
}

// 8. Full selection without momentum is the contrastive loss.
Outcome degenerate_trace() {
  nml::RunConfig c = desk();
  c.method = nml::Method::kContrastive;
  const auto a = nml::run_train(c);
  c.method = nml::Method::kTsint;
  c.tau = 1.0;
  c.beta = 0.0;
  const auto b = nml::run_train(c);
  bool same = a.iterations.size() == b.iterations.size() && !a.iterations.empty();
  for (std::size_t i = 0; same && i < a.iterations.size(); ++i) {
    const auto& x = a.iterations[i];
    const auto& y = b.iterations[i];
    same = std::memcmp(&x.loss, &y.loss, sizeof(double)) == 0 &&
           std::memcmp(&x.pos_loss, &y.pos_loss, sizeof(double)) == 0 &&
           std::memcmp(&x.neg_loss, &y.neg_loss, sizeof(double)) == 0;
  }
  same = same && a.model == b.model;
  return {same, std::to_string(a.iterations.size()) + " iterations compared bitwise"};
}

// 9 and 11 share their runs: seeds 7, 8, 9 at r = 0.5.
struct SeedRuns {
  std::vector<double> full, ablated, below, above;
};

const SeedRuns& seed_runs() {
  static const SeedRuns runs = [] {
    SeedRuns r;
    nml::RunConfig base = desk();
    base.method = nml::Method::kTsint;
    base.noise = 0.5;
    base.tau.reset();
    const double tau = base.resolved_tau();
    for (std::uint64_t s : {7, 8, 9}) {
      const nml::RunConfig c = with_seed(base, s);
      r.full.push_back(p_at_1(c));
      nml::RunConfig ab = c;
      ab.teacher_ema = false;
      ab.dcut_ema = false;
      r.ablated.push_back(p_at_1(ab));
      nml::RunConfig lo = c;
      lo.tau = tau - 0.1;
      r.below.push_back(p_at_1(lo));
      nml::RunConfig hi = c;
      hi.tau = tau + 0.1;
      r.above.push_back(p_at_1(hi));
    }
    return r;
  }();
  return runs;
}

Outcome ablation() {
  const auto& r = seed_runs();
  double worst = -1.0;
  std::string detail = "ablated - full:";
  for (std::size_t i = 0; i < r.full.size(); ++i) {
    const double delta = r.ablated[i] - r.full[i];
    worst = std::max(worst, delta);
    detail += " " + fmt_num(delta, 3);
  }
  return {worst <= 0.01, detail};
}

// 10. Repeated train and sweep calls write identical files.
Outcome determinism() {
  const auto root = std::filesystem::temp_directory_path() / "nml_acceptance_determinism";
  std::filesystem::remove_all(root);
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  nml::RunConfig c = desk();
  std::size_t compared = 0;
  bool same = true;
  for (auto m : {nml::Method::kTsint, nml::Method::kContrastive, nml::Method::kSuperLoss,
                 nml::Method::kPrism}) {
    c.method = m;
    const auto a = root / (std::string(nml::to_string(m)) + "_a");
    const auto b = root / (std::string(nml::to_string(m)) + "_b");
    nml::emit_report(nml::run_train(c), a);
    nml::emit_report(nml::run_train(c), b);
    for (const char* f : {"manifest.txt", "iters.csv", "epochs.csv"}) {
      same = same && slurp(a / f) == slurp(b / f) && !slurp(a / f).empty();
      ++compared;
    }
  }
  nml::SweepSpec s;
  s.axis = nml::SweepAxis::kTau;
  s.base = desk();
  s.base.epochs = 5;
  s.grid = nml::parse_grid("auto-0.1,auto", s.axis, s.base);
  s.methods = {nml::Method::kTsint};
  std::string first;
  for (const char* tag : {"sweep_a", "sweep_b"}) {
    s.out_dir = root / tag;
    const std::string csv = nml::sweep_csv(nml::run_sweep(s));
    if (first.empty()) {
      first = csv;
    } else {
      same = same && csv == first;
    }
  }
  for (const char* f : {"manifest.txt", "iters.csv", "epochs.csv"}) {
    for (const char* point : {"000_tsint", "001_tsint"}) {
      same = same && slurp(root / "sweep_a" / "points" / point / f) ==
                         slurp(root / "sweep_b" / "points" / point / f);
      ++compared;
    }
  }
  std::filesystem::remove_all(root);
  return {same, std::to_string(compared + 1) + " files compared"};
}

// 11. P@1 around the estimated tau, averaged over the replicate seeds.
Outcome tau_plateau() {
  const auto& r = seed_runs();
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  const double lo = mean(r.below), mid = mean(r.full), hi = mean(r.above);
  const double spread = std::max({lo, mid, hi}) - std::min({lo, mid, hi});
  std::string detail = "mean P@1 " + fmt_num(lo, 3) + " / " + fmt_num(mid, 3) + " / " +
                       fmt_num(hi, 3) + ", spread " + fmt_num(spread, 3) + "; per seed";
  for (std::size_t i = 0; i < r.full.size(); ++i) {
    const double si = std::max({r.below[i], r.full[i], r.above[i]}) -
                      std::min({r.below[i], r.full[i], r.above[i]});
    detail += " " + fmt_num(si, 3);
  }
  return {spread < 0.05, detail};
}

}  // namespace

int main() {
  report(1, "tau estimate matches reported values", 0, tau_estimate);
  report(2, "tsint parameter gradients vs finite differences", 10, tsint_gradients);
  report(3, "superloss closed form and Lambert W", 5, superloss_closed_form);
  report(4, "retrieval metrics vs brute force", 10, metric_oracles);
  report(5, "perfect teacher recovers clean positives", 0, perfect_teacher);
  report(6, "kept fraction tracks tau without momentum", 5, selection_ratio);
  report(7, "desk-scale robustness at 50% noise", 300, desk_robustness);
  report(8, "tau=1 beta=0 reproduces contrastive trace", 0, degenerate_trace);
  report(9, "ablation never beats full method by > 0.01", 0, ablation);
  report(10, "train and sweep outputs are bit-identical", 0, determinism);
  report(11, "P@1 plateau across tau +- 0.1", 600, tau_plateau);
  std::printf("%s: %d failed\n", failures == 0 ? "ALL PASS" : "SOME FAILED", failures);
  return failures == 0 ? 0 : 1;
}
