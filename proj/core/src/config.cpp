#include "nml/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "nml/errors.hpp"
#include "nml/interactions.hpp"

namespace nml {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end || !std::isfinite(out)) {
    throw ConfigError(fmt::format("{}: expected a number, got \"{}\"", key, v));
  }
  return out;
}

template <typename Int>
Int parse_int(std::string_view key, std::string_view v) {
  Int out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError(fmt::format("{}: expected a non-negative integer, got \"{}\"", key, v));
  }
  return out;
}

bool parse_switch(std::string_view key, std::string_view v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw ConfigError(fmt::format("{}: expected on/off, got \"{}\"", key, v));
}

std::string switch_text(bool b) { return b ? "on" : "off"; }

struct Field {
  std::function<void(RunConfig&, std::string_view key, std::string_view value)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Member>
Field number_field(Member RunConfig::*m) {
  return {[m](RunConfig& c, std::string_view k, std::string_view v) {
            if constexpr (std::is_floating_point_v<Member>) {
              c.*m = parse_double(k, v);
            } else {
              c.*m = parse_int<Member>(k, v);
            }
          },
          [m](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<Member>) {
              return format_number(c.*m);
            } else {
              return std::to_string(c.*m);
            }
          }};
}

// Insertion-ordered field table.
struct FieldTable {
  std::vector<std::string> order;
  std::map<std::string, Field, std::less<>> fields;

  void add(std::string name, Field f) {
    order.push_back(name);
    fields.emplace(std::move(name), std::move(f));
  }
};

const FieldTable& table() {
  static const FieldTable t = [] {
    FieldTable t;
    t.add("method", {[](RunConfig& c, auto, auto v) { c.method = parse_method(v); },
                     [](const RunConfig& c) { return std::string(to_string(c.method)); }});
    t.add("noise", number_field(&RunConfig::noise));
    t.add("epochs", number_field(&RunConfig::epochs));
    t.add("batch_size", number_field(&RunConfig::batch_size));
    t.add("instances_per_class", number_field(&RunConfig::per_class));
    t.add("lr", number_field(&RunConfig::lr));
    t.add("margin", number_field(&RunConfig::margin));
    t.add("exponent", number_field(&RunConfig::exponent));
    t.add("tau", {[](RunConfig& c, auto k, auto v) {
                    if (v == "auto") {
                      c.tau.reset();
                    } else {
                      c.tau = parse_double(k, v);
                    }
                  },
                  [](const RunConfig& c) {
                    return c.tau ? format_number(*c.tau) : std::string("auto");
                  }});
    t.add("beta", number_field(&RunConfig::beta));
    t.add("alpha", number_field(&RunConfig::alpha));
    t.add("ablation.teacher_ema",
          {[](RunConfig& c, auto k, auto v) { c.teacher_ema = parse_switch(k, v); },
           [](const RunConfig& c) { return switch_text(c.teacher_ema); }});
    t.add("ablation.dcut_ema",
          {[](RunConfig& c, auto k, auto v) { c.dcut_ema = parse_switch(k, v); },
           [](const RunConfig& c) { return switch_text(c.dcut_ema); }});

    t.add("data.train", {[](RunConfig& c, auto, auto v) { c.data.train_path = std::string(v); },
                         [](const RunConfig& c) { return c.data.train_path.string(); }});
    t.add("data.test", {[](RunConfig& c, auto, auto v) { c.data.test_path = std::string(v); },
                        [](const RunConfig& c) { return c.data.test_path.string(); }});
    t.add("data.classes",
          {[](RunConfig& c, auto k, auto v) {
             c.data.synthetic.n_classes = parse_int<std::uint32_t>(k, v);
           },
           [](const RunConfig& c) { return std::to_string(c.data.synthetic.n_classes); }});
    t.add("data.per_class",
          {[](RunConfig& c, auto k, auto v) {
             c.data.synthetic.per_class = parse_int<std::uint32_t>(k, v);
           },
           [](const RunConfig& c) { return std::to_string(c.data.synthetic.per_class); }});
    t.add("data.dim",
          {[](RunConfig& c, auto k, auto v) {
             c.data.synthetic.dim = parse_int<std::uint32_t>(k, v);
           },
           [](const RunConfig& c) { return std::to_string(c.data.synthetic.dim); }});
    t.add("data.separation",
          {[](RunConfig& c, auto k, auto v) { c.data.synthetic.separation = parse_double(k, v); },
           [](const RunConfig& c) { return format_number(c.data.synthetic.separation); }});
    t.add("data.sigma",
          {[](RunConfig& c, auto k, auto v) { c.data.synthetic.sigma = parse_double(k, v); },
           [](const RunConfig& c) { return format_number(c.data.synthetic.sigma); }});
    t.add("data.test_fraction",
          {[](RunConfig& c, auto k, auto v) { c.data.test_fraction = parse_double(k, v); },
           [](const RunConfig& c) { return format_number(c.data.test_fraction); }});
    t.add("data.split",
          {[](RunConfig& c, auto k, auto v) {
             if (v == "samples") {
               c.data.split = SplitPolicy::kSamples;
             } else if (v == "classes") {
               c.data.split = SplitPolicy::kClasses;
             } else {
               throw ConfigError(fmt::format("{}: expected samples|classes, got \"{}\"", k, v));
             }
           },
           [](const RunConfig& c) {
             return std::string(c.data.split == SplitPolicy::kSamples ? "samples" : "classes");
           }});
    t.add("data.class_subset",
          {[](RunConfig& c, auto k, auto v) {
             c.data.class_subset = parse_int<std::uint32_t>(k, v);
           },
           [](const RunConfig& c) { return std::to_string(c.data.class_subset); }});

    t.add("model.depth",
          {[](RunConfig& c, auto k, auto v) { c.model.depth = parse_int<std::uint32_t>(k, v); },
           [](const RunConfig& c) { return std::to_string(c.model.depth); }});
    t.add("model.hidden",
          {[](RunConfig& c, auto k, auto v) { c.model.hidden = parse_int<std::uint32_t>(k, v); },
           [](const RunConfig& c) { return std::to_string(c.model.hidden); }});
    t.add("model.out_dim",
          {[](RunConfig& c, auto k, auto v) { c.model.out_dim = parse_int<std::uint32_t>(k, v); },
           [](const RunConfig& c) { return std::to_string(c.model.out_dim); }});
    t.add("model.activation",
          {[](RunConfig& c, auto k, auto v) {
             if (v == "tanh") {
               c.model.activation = Activation::kTanh;
             } else if (v == "none") {
               c.model.activation = Activation::kNone;
             } else {
               throw ConfigError(fmt::format("{}: expected tanh|none, got \"{}\"", k, v));
             }
           },
           [](const RunConfig& c) {
             return std::string(c.model.activation == Activation::kTanh ? "tanh" : "none");
           }});

    t.add("superloss.lambda",
          {[](RunConfig& c, auto k, auto v) { c.superloss.lambda = parse_double(k, v); },
           [](const RunConfig& c) { return format_number(c.superloss.lambda); }});
    t.add("superloss.mode",
          {[](RunConfig& c, auto k, auto v) {
             if (v == "global") {
               c.superloss.mode = ThresholdMode::kGlobalAvg;
             } else if (v == "exp") {
               c.superloss.mode = ThresholdMode::kExpAvg;
             } else {
               throw ConfigError(fmt::format("{}: expected global|exp, got \"{}\"", k, v));
             }
           },
           [](const RunConfig& c) {
             return std::string(c.superloss.mode == ThresholdMode::kGlobalAvg ? "global" : "exp");
           }});
    t.add("superloss.smoothing",
          {[](RunConfig& c, auto k, auto v) { c.superloss.smoothing = parse_double(k, v); },
           [](const RunConfig& c) { return format_number(c.superloss.smoothing); }});

    t.add("prism.rate", {[](RunConfig& c, auto k, auto v) {
                           if (v == "auto") {
                             c.prism.rate.reset();
                           } else {
                             c.prism.rate = parse_double(k, v);
                           }
                         },
                         [](const RunConfig& c) {
                           return c.prism.rate ? format_number(*c.prism.rate) : std::string("auto");
                         }});
    t.add("prism.window",
          {[](RunConfig& c, auto k, auto v) { c.prism.window = parse_int<std::uint32_t>(k, v); },
           [](const RunConfig& c) { return std::to_string(c.prism.window); }});
    t.add("prism.capacity",
          {[](RunConfig& c, auto k, auto v) { c.prism.capacity = parse_int<std::uint32_t>(k, v); },
           [](const RunConfig& c) { return std::to_string(c.prism.capacity); }});
    t.add("prism.temperature",
          {[](RunConfig& c, auto k, auto v) { c.prism.temperature = parse_double(k, v); },
           [](const RunConfig& c) { return format_number(c.prism.temperature); }});

    t.add("seed.data",
          {[](RunConfig& c, auto k, auto v) { c.seeds.data = parse_int<std::uint64_t>(k, v); },
           [](const RunConfig& c) { return std::to_string(c.seeds.data); }});
    t.add("seed.noise",
          {[](RunConfig& c, auto k, auto v) { c.seeds.noise = parse_int<std::uint64_t>(k, v); },
           [](const RunConfig& c) { return std::to_string(c.seeds.noise); }});
    t.add("seed.train",
          {[](RunConfig& c, auto k, auto v) { c.seeds.train = parse_int<std::uint64_t>(k, v); },
           [](const RunConfig& c) { return std::to_string(c.seeds.train); }});
    t.add("out", {[](RunConfig& c, auto, auto v) { c.out_dir = std::string(v); },
                  [](const RunConfig& c) { return c.out_dir.string(); }});
    return t;
  }();
  return t;
}

bool ignored_namespace(std::string_view key) {
  return key.starts_with("run.") || key.starts_with("result.");
}

void require(bool ok, std::string_view key, std::string_view what) {
  if (!ok) throw ConfigError(fmt::format("{}: {}", key, what));
}

}  // namespace

std::string_view to_string(Method m) {
  switch (m) {
    case Method::kContrastive: return "contrastive";
    case Method::kTsint: return "tsint";
    case Method::kSuperLoss: return "superloss";
    case Method::kPrism: return "prism";
  }
  return "?";
}

Method parse_method(std::string_view s) {
  if (s == "contrastive") return Method::kContrastive;
  if (s == "tsint") return Method::kTsint;
  if (s == "superloss") return Method::kSuperLoss;
  if (s == "prism") return Method::kPrism;
  throw ConfigError(fmt::format("unknown method \"{}\" (contrastive|tsint|superloss|prism)", s));
}

double RunConfig::resolved_tau() const {
  return tau ? *tau : estimate_tau(noise, per_class);
}

double RunConfig::resolved_prism_rate() const { return prism.rate.value_or(noise); }

void RunConfig::validate() const {
  require(noise >= 0.0 && noise <= 1.0, "noise", "must lie in [0, 1]");
  require(batch_size > 0, "batch_size", "must be positive");
  require(per_class > 0, "instances_per_class", "must be positive");
  require(batch_size % per_class == 0, "batch_size", "must be a multiple of instances_per_class");
  require(lr > 0.0, "lr", "must be positive");
  require(margin > 0.0, "margin", "must be positive");
  require(exponent == 1 || exponent == 2, "exponent", "must be 1 or 2");
  if (tau) require(*tau > 0.0 && *tau <= 1.0, "tau", "must lie in (0, 1] or be auto");
  require(beta >= 0.0 && beta < 1.0, "beta", "must lie in [0, 1)");
  require(alpha >= 0.0 && alpha <= 1.0, "alpha", "must lie in [0, 1]");
  require(data.train_path.empty() == data.test_path.empty(), "data.train",
          "data.train and data.test must be given together");
  if (!data.from_files()) {
    SyntheticSpec spec = data.synthetic;
    spec.validate();
    require(data.test_fraction > 0.0 && data.test_fraction < 1.0, "data.test_fraction",
            "must lie in (0, 1)");
    require(data.class_subset <= spec.n_classes, "data.class_subset",
            "exceeds the number of classes");
  }
  require(data.class_subset != 1, "data.class_subset", "needs at least 2 classes");
  require(model.depth == 1 || model.depth == 2, "model.depth", "must be 1 or 2");
  require(model.out_dim > 0, "model.out_dim", "must be positive");
  require(model.depth == 1 || model.hidden > 0, "model.hidden", "must be positive");
  if (method == Method::kSuperLoss) {
    require(superloss.lambda > 0.0, "superloss.lambda", "must be positive");
    require(superloss.smoothing >= 0.0 && superloss.smoothing < 1.0, "superloss.smoothing",
            "must lie in [0, 1)");
  }
  if (method == Method::kPrism) {
    const double r = resolved_prism_rate();
    require(r >= 0.0 && r < 1.0, "prism.rate", "must lie in [0, 1)");
    require(prism.window > 0, "prism.window", "must be positive");
    require(prism.capacity > 0, "prism.capacity", "must be positive");
    require(prism.temperature > 0.0, "prism.temperature", "must be positive");
  }
}

void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value) {
  const auto& t = table();
  const auto it = t.fields.find(key);
  if (it == t.fields.end()) throw ConfigError(fmt::format("unknown config key \"{}\"", key));
  it->second.set(cfg, key, value);
}

RunConfig parse_config(std::istream& in) {
  RunConfig cfg;
  std::set<std::string, std::less<>> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view s = line;
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(fmt::format("line {}: expected `key = value`", line_no));
    }
    const std::string_view key = trim(s.substr(0, eq));
    const std::string_view value = trim(s.substr(eq + 1));
    if (ignored_namespace(key)) continue;
    if (!seen.emplace(key).second) {
      throw ConfigError(fmt::format("line {}: duplicate key \"{}\"", line_no, key));
    }
    try {
      apply_setting(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("line {}: {}", line_no, e.what()));
    }
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  return parse_config(in);
}

const std::vector<std::string>& config_keys() { return table().order; }

std::string config_value(const RunConfig& cfg, std::string_view key) {
  const auto& t = table();
  const auto it = t.fields.find(key);
  if (it == t.fields.end()) throw ConfigError(fmt::format("unknown config key \"{}\"", key));
  return it->second.get(cfg);
}

std::string to_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& key : config_keys()) {
    out += fmt::format("{} = {}\n", key, config_value(cfg, key));
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string format_number(double v) { return fmt::format("{}", v); }

}  // namespace nml
