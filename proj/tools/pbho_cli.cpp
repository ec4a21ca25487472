// Copyright 2026 The pbho Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// pbho command-line front end.
//
//   pbho run --config FILE [--set key=value]... [--out DIR] [--json]
//   pbho privacy --h H --s S --gamma G (--eps E --delta D | --eta ETA) [--chains C] [--json]
//   pbho bound --trace FILE --n N --eps E --delta D [--kind simplified|general|bounded] ...
//   pbho plot-data --run DIR [--out DIR]
//
// Exit status: 0 success, 1 invalid configuration or arguments, 2 runtime
// failure, 3 missing or unreadable dataset.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#define TOML_EXCEPTIONS 1
#include "toml.hpp"

#include "pbho/bounds/bounds.hpp"
#include "pbho/experiments/freedman.hpp"
#include "pbho/experiments/weight_decay.hpp"
#include "pbho/samplers/privacy.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace pbho::cli {

constexpr int kExitConfig = 1, kExitRuntime = 2, kExitDataset = 3;

// ---------------------------------------------------------------------------
// Configuration: a TOML table plus `--set` overrides, read through a cursor
// that remembers which keys were consumed so typos are rejected.

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

// Parses `value` as a TOML value; bare words fall back to strings.
void assign(toml::table& root, const std::string& key, const std::string& value) {
  auto parts = split(key, '.');
  toml::table* t = &root;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    toml::node* n = t->get(parts[i]);
    if (!n) {
      t->insert_or_assign(parts[i], toml::table{});
      n = t->get(parts[i]);
    }
    if (!n->is_table()) throw ConfigError(key, "'" + parts[i] + "' is not a table");
    t = n->as_table();
  }
  toml::table parsed;
  try {
    parsed = toml::parse("v = " + value);
  } catch (const toml::parse_error&) {
    parsed.insert_or_assign("v", value);
  }
  parsed.get("v")->visit([&](auto& node) { t->insert_or_assign(parts.back(), node); });
}

class Config {
 public:
  explicit Config(toml::table t) : t_(std::move(t)) {}
  const toml::table& table() const { return t_; }

  bool has(const std::string& path) const { return static_cast<bool>(t_.at_path(path)); }

  template <typename T>
  T get(const std::string& path, T fallback) {
    used_.insert(path);
    auto node = t_.at_path(path);
    if (!node) return fallback;
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      auto v = node.value<std::int64_t>();
      if (!v || *v < 0) throw ConfigError(path, "expected a non-negative integer");
      return static_cast<T>(*v);
    } else if constexpr (std::is_same_v<T, int>) {
      auto v = node.value<std::int64_t>();
      if (!v) throw ConfigError(path, "expected an integer");
      return static_cast<int>(*v);
    } else if constexpr (std::is_same_v<T, double>) {
      auto v = node.value<double>();
      if (!v) throw ConfigError(path, "expected a number");
      return *v;
    } else if constexpr (std::is_same_v<T, bool>) {
      auto v = node.value<bool>();
      if (!v) throw ConfigError(path, "expected true or false");
      return *v;
    } else {
      auto v = node.value<std::string>();
      if (!v) throw ConfigError(path, "expected a string");
      return *v;
    }
  }

  std::vector<double> get_numbers(const std::string& path, std::vector<double> fallback) {
    used_.insert(path);
    auto node = t_.at_path(path);
    if (!node) return fallback;
    const toml::array* a = node.as_array();
    if (!a) throw ConfigError(path, "expected an array of numbers");
    std::vector<double> out;
    for (const auto& e : *a) {
      auto v = e.value<double>();
      if (!v) throw ConfigError(path, "expected an array of numbers");
      out.push_back(*v);
    }
    return out;
  }

  std::vector<std::string> get_strings(const std::string& path,
                                       std::vector<std::string> fallback) {
    used_.insert(path);
    auto node = t_.at_path(path);
    if (!node) return fallback;
    const toml::array* a = node.as_array();
    if (!a) throw ConfigError(path, "expected an array of strings");
    std::vector<std::string> out;
    for (const auto& e : *a) {
      auto v = e.value<std::string>();
      if (!v) throw ConfigError(path, "expected an array of strings");
      out.push_back(*v);
    }
    return out;
  }

  template <typename E>
  E get_enum(const std::string& path, E fallback,
             const std::vector<std::pair<std::string, E>>& names) {
    if (!has(path)) {
      used_.insert(path);
      return fallback;
    }
    const std::string s = get<std::string>(path, "");
    for (const auto& [n, e] : names)
      if (n == s) return e;
    std::string opts;
    for (const auto& [n, e] : names) opts += (opts.empty() ? "" : ", ") + n;
    throw ConfigError(path, "unknown value '" + s + "' (expected one of: " + opts + ")");
  }

  // Every leaf in the table must have been read.
  void reject_unknown() const { walk(t_, ""); }

 private:
  void walk(const toml::table& t, const std::string& prefix) const {
    for (const auto& [k, v] : t) {
      const std::string path = prefix.empty() ? std::string(k.str()) : prefix + "." + std::string(k.str());
      if (v.is_table()) {
        walk(*v.as_table(), path);
      } else if (!used_.count(path)) {
        throw ConfigError(path, "unknown configuration key");
      }
    }
  }

  toml::table t_;
  std::set<std::string> used_;
};

std::string git_describe() {
  const std::string cmd = "git -C \"" + std::string(PBHO_SOURCE_DIR) +
                          "\" describe --always --dirty --tags 2>/dev/null";
  std::unique_ptr<FILE, int (*)(FILE*)> pipe(popen(cmd.c_str(), "r"), pclose);
  if (!pipe) return "unknown";
  std::array<char, 256> buf{};
  std::string out;
  while (fgets(buf.data(), buf.size(), pipe.get())) out += buf.data();
  while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
  return out.empty() ? "unknown" : out;
}

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json num_json(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p);
  if (!os) throw Error("cannot write " + p.string());
  return os;
}

// ---------------------------------------------------------------------------
// run

struct RunCommon {
  std::string experiment;
  std::uint64_t seed = 0;
  std::size_t num_seeds = 1;
  std::size_t workers = 0;
  fs::path out;
};

std::vector<std::uint64_t> seed_list(const RunCommon& c) {
  std::vector<std::uint64_t> s(c.num_seeds);
  std::iota(s.begin(), s.end(), c.seed);
  return s;
}

FreedmanConfig read_freedman(Config& cfg) {
  FreedmanConfig f;
  f.version = cfg.get_enum<FreedmanVersion>(
      "freedman.version", f.version,
      {{"null", FreedmanVersion::kNull}, {"signal", FreedmanVersion::kSignal}});
  f.n = cfg.get<std::size_t>("freedman.n", f.n);
  f.d = cfg.get<std::size_t>("freedman.d", f.d);
  f.n_test = cfg.get<std::size_t>("freedman.n_test", f.n_test);
  f.max_p = cfg.get<std::size_t>("freedman.max_p", f.max_p);
  f.zeta_reading = cfg.get_enum<ZetaReading>(
      "freedman.zeta_reading", f.zeta_reading,
      {{"eta/4", ZetaReading::kEtaOverFour}, {"sqrt(eta/4)", ZetaReading::kSqrtEtaOverFour}});
  if (cfg.has("freedman.zeta")) f.zeta = cfg.get<double>("freedman.zeta", 0.0);
  else cfg.get<double>("freedman.zeta", 0.0);
  f.ld.chains = cfg.get<std::size_t>("freedman.ld.chains", f.ld.chains);
  f.ld.eta = cfg.get<double>("freedman.ld.eta", f.ld.eta);
  f.ld.steps = cfg.get<std::size_t>("freedman.ld.steps", f.ld.steps);
  f.ld.init_sd = cfg.get<double>("freedman.ld.init_sd", f.ld.init_sd);
  f.ld.tau_grid = cfg.get_numbers("freedman.ld.tau_grid", f.ld.tau_grid);
  std::vector<std::string> objs = cfg.get_strings("freedman.objectives", {"eq1", "eq5", "aic"});
  f.objectives.clear();
  for (const auto& o : objs) {
    if (o == "eq1") f.objectives.push_back(SelectionObjective::kEq1);
    else if (o == "eq5") f.objectives.push_back(SelectionObjective::kEq5);
    else if (o == "aic") f.objectives.push_back(SelectionObjective::kAic);
    else throw ConfigError("freedman.objectives", "unknown objective '" + o + "'");
  }
  if (f.objectives.empty()) throw ConfigError("freedman.objectives", "must not be empty");
  if (f.n < 4) throw ConfigError("freedman.n", "need at least 4 rows");
  if (f.d == 0) throw ConfigError("freedman.d", "must be positive");
  if (f.max_p > f.d) throw ConfigError("freedman.max_p", "exceeds the number of features");
  if (f.zeta && !(*f.zeta >= 0.0)) throw ConfigError("freedman.zeta", "must be non-negative");
  f.ld.validate();
  return f;
}

WeightDecayConfig read_weight_decay(Config& cfg) {
  WeightDecayConfig w;
  const std::string s = "weight_decay.";
  w.dataset = cfg.get_enum<WdDataset>(s + "dataset", w.dataset,
                                      {{"mnist", WdDataset::kMnist}, {"mixture", WdDataset::kMixture}});
  w.mnist_dir = cfg.get<std::string>(s + "mnist_dir", w.mnist_dir);
  w.mixture.dim = cfg.get<std::size_t>(s + "mixture.dim", w.mixture.dim);
  w.mixture.classes = cfg.get<int>(s + "mixture.classes", w.mixture.classes);
  w.mixture.mean_scale = cfg.get<double>(s + "mixture.mean_scale", w.mixture.mean_scale);
  w.mixture.noise_sd = cfg.get<double>(s + "mixture.noise_sd", w.mixture.noise_sd);
  w.mixture_seed = cfg.get<std::uint64_t>(s + "mixture.seed", w.mixture_seed);
  w.mixture_pool = cfg.get<std::size_t>(s + "mixture.pool", w.mixture_pool);
  w.mixture_test = cfg.get<std::size_t>(s + "mixture.test", w.mixture_test);
  w.model = cfg.get_enum<ModelKind>(s + "model", w.model,
                                    {{"linear-softmax", ModelKind::kLinearSoftmax},
                                     {"mlp", ModelKind::kMlp}});
  w.hidden = cfg.get<std::size_t>(s + "hidden", w.hidden);
  w.activation = cfg.get_enum<Activation>(s + "activation", w.activation,
                                          {{"relu", Activation::kRelu}, {"tanh", Activation::kTanh}});
  w.objective = cfg.get_enum<ObjectiveKind>(s + "objective", w.objective,
                                            {{"eq1", ObjectiveKind::kEq1}, {"eq5", ObjectiveKind::kEq5}});
  w.zeta = cfg.get<double>(s + "zeta", w.zeta);
  w.n_train = cfg.get<std::size_t>(s + "n_train", w.n_train);
  w.n_val = cfg.get<std::size_t>(s + "n_val", w.n_val);
  w.inner_steps = cfg.get<std::size_t>(s + "inner_steps", w.inner_steps);
  w.outer_steps = cfg.get<std::size_t>(s + "outer_steps", w.outer_steps);
  w.adam_lr = cfg.get<double>(s + "adam_lr", w.adam_lr);
  w.outer_lr = cfg.get<double>(s + "outer_lr", w.outer_lr);
  w.lambda0 = cfg.get<double>(s + "lambda0", w.lambda0);
  w.init_sd = cfg.get<double>(s + "init_sd", w.init_sd);
  w.standardize = cfg.get<bool>(s + "standardize", w.standardize);
  w.input_shift = cfg.get<double>(s + "input_shift", w.input_shift);
  w.input_scale = cfg.get<double>(s + "input_scale", w.input_scale);
  w.validate();
  return w;
}

const char* selection_header = "seed,p,features,objective,val_r2,val_mse,train_mse,test_mse,aic";

json run_freedman_cmd(const FreedmanConfig& f, const RunCommon& c) {
  const auto seeds = seed_list(c);
  auto results = parallel_map<FreedmanResult>(seeds.size(), c.workers, [&](std::size_t i) {
    return run_freedman(f, seeds[i]);
  });
  json summary = json::array();
  for (SelectionObjective o : f.objectives) {
    std::ofstream os = open_out(c.out / (std::string("path_") + to_string(o) + ".csv"));
    os << selection_header << '\n';
    std::size_t true_pair = 0, p0 = 0, good_sign = 0;
    for (const auto& r : results) {
      const SelectionPath& path = *r.path(o);
      for (const auto& e : path.entries) {
        std::string feats;
        for (auto k : e.features) feats += (feats.empty() ? "" : " ") + std::to_string(k);
        os << r.seed << ',' << e.p << ',' << feats << ',' << num(e.objective) << ','
           << num(e.val_r2) << ',' << num(e.val_mse) << ',' << num(e.train_mse) << ','
           << num(e.test_mse) << ',' << num(e.aic) << '\n';
      }
      Features best = path.best().features;
      std::sort(best.begin(), best.end());
      true_pair += best == Features{0, 1};
      p0 += best.empty();
      const double rho = r.spearman_for(o);
      good_sign += o == SelectionObjective::kEq1 ? rho < 0.0 : rho > 0.0;
    }
    summary.push_back({{"objective", to_string(o)},
                       {"seeds", results.size()},
                       {"argmin_true_pair", true_pair},
                       {"argmin_empty", p0},
                       {"expected_spearman_sign", good_sign}});
  }
  std::ofstream os = open_out(c.out / "spearman.csv");
  os << "seed";
  for (auto o : f.objectives) os << ',' << to_string(o);
  os << '\n';
  for (const auto& r : results) {
    os << r.seed;
    for (double rho : r.test_spearman) os << ',' << num(rho);
    os << '\n';
  }
  return {{"experiment", "freedman"}, {"objectives", summary}};
}

json run_weight_decay_cmd(const WeightDecayConfig& w, const RunCommon& c) {
  WeightDecayConfig cfg = w;
  cfg.workers = c.workers;
  auto runs = run_weight_decay_experiment(cfg, seed_list(c));
  std::vector<HistoryRow> all;
  json per_seed = json::array();
  for (const auto& r : runs) {
    all.insert(all.end(), r.records.begin(), r.records.end());
    const HistoryRow& base = min_weight_norm_baseline(r);
    per_seed.push_back({{"seed", r.seed},
                        {"final_val_acc", num_json(r.records.back().val_acc)},
                        {"final_test_acc", num_json(final_test_accuracy(r))},
                        {"final_sqrt_Y", num_json(r.records.back().sqrt_Y)},
                        {"gen_error_estimate", num_json(generalization_error_estimate(r))},
                        {"min_norm_step", base.outer_step},
                        {"min_norm_test_acc", num_json(base.test_acc)}});
  }
  std::ofstream os = open_out(c.out / "history.csv");
  write_history_csv(os, all);
  std::ofstream ls = open_out(c.out / "lambda.csv");
  ls << "seed,index,lambda\n";
  for (const auto& r : runs)
    for (std::size_t i = 0; i < r.lambda.size(); ++i)
      ls << r.seed << ',' << i << ',' << num(r.lambda[i]) << '\n';
  return {{"experiment", "weight_decay"},
          {"objective", to_string(w.objective)},
          {"zeta", w.objective == ObjectiveKind::kEq1 ? 0.0 : w.zeta},
          {"runs", per_seed}};
}

int cmd_run(const std::string& config_path, const std::vector<std::string>& sets,
            const std::string& out_override, bool as_json) {
  toml::table table;
  try {
    table = toml::parse_file(config_path);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << config_path << ": " << e.description() << " (line " << e.source().begin.line << ")";
    throw ConfigError("", msg.str());
  }
  const std::string experiment = table["experiment"].value_or(std::string{});
  for (const std::string& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set", "expected key=value, got '" + kv + "'");
    std::string key = kv.substr(0, eq);
    // Bare keys that are not top-level settings belong to the experiment's table.
    static const std::set<std::string> top = {"experiment", "seed", "num_seeds", "workers",
                                              "output_dir"};
    if (key.find('.') == std::string::npos && !top.count(key) && !experiment.empty())
      key = experiment + "." + key;
    assign(table, key, kv.substr(eq + 1));
  }

  Config cfg(table);
  RunCommon c;
  c.experiment = cfg.get<std::string>("experiment", "");
  c.seed = cfg.get<std::uint64_t>("seed", 0);
  c.num_seeds = cfg.get<std::size_t>("num_seeds", 1);
  c.workers = cfg.get<std::size_t>("workers", 0);
  c.out = out_override.empty() ? fs::path(cfg.get<std::string>("output_dir", "pbho-out"))
                               : fs::path(out_override);
  if (!out_override.empty()) cfg.get<std::string>("output_dir", "");
  if (c.num_seeds == 0) throw ConfigError("num_seeds", "must be positive");

  std::optional<FreedmanConfig> fcfg;
  std::optional<WeightDecayConfig> wcfg;
  if (c.experiment == "freedman") {
    fcfg = read_freedman(cfg);
  } else if (c.experiment == "weight_decay") {
    wcfg = read_weight_decay(cfg);
  } else {
    throw ConfigError("experiment", "expected 'freedman' or 'weight_decay', got '" + c.experiment + "'");
  }
  cfg.reject_unknown();

  fs::create_directories(c.out);
  {
    std::ostringstream toml_text;
    toml_text << cfg.table();
    std::ofstream(c.out / "config.toml") << toml_text.str() << '\n';
    json manifest = {{"tool", "pbho"},
                     {"version", "0.1.0"},
                     {"git_describe", git_describe()},
                     {"config_file", config_path},
                     {"overrides", sets},
                     {"seed", c.seed},
                     {"num_seeds", c.num_seeds},
                     {"config", toml_text.str()}};
    open_out(c.out / "manifest.json") << manifest.dump(2) << '\n';
  }

  json summary = fcfg ? run_freedman_cmd(*fcfg, c) : run_weight_decay_cmd(*wcfg, c);
  summary["output_dir"] = c.out.string();
  open_out(c.out / "summary.json") << summary.dump(2) << '\n';
  if (as_json) {
    std::cout << summary.dump(2) << '\n';
  } else {
    std::cout << "wrote " << c.out.string() << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------------------
// privacy

int cmd_privacy(std::size_t h, std::size_t s, double gamma, std::optional<double> eps,
                std::optional<double> delta, std::optional<double> eta, int chains, bool as_json) {
  json out;
  if (eta) {
    if (eps || delta) throw ConfigError("--eta", "give either --eta or --eps/--delta, not both");
    std::vector<double> deltas;
    for (double d = 1e-10; d < 0.5; d *= 10.0) deltas.push_back(d);
    auto pts = privacy_frontier(*eta, h, s, gamma, deltas);
    out = {{"eta", *eta}, {"h", h}, {"s", s}, {"gamma", gamma}, {"frontier", json::array()}};
    for (const auto& p : pts) out["frontier"].push_back({{"eps", p.eps}, {"delta", p.delta}});
    if (!as_json) {
      std::printf("(eps, delta) frontier certified at eta = %.6g (h=%zu, s=%zu, gamma=%g)\n", *eta,
                  h, s, gamma);
      if (pts.empty()) std::printf("  no point with eps <= 1/2 and delta < eps\n");
      for (const auto& p : pts) std::printf("  eps = %.6g  delta = %.3g\n", p.eps, p.delta);
    }
  } else {
    if (!eps || !delta) throw ConfigError("--eps", "need --eps and --delta (or --eta)");
    PrivacyBudget b{*eps, *delta, chains, h, s};
    b.validate();
    const double eta_max = max_dp_step_size(b, gamma);
    out = {{"eps", *eps}, {"delta", *delta}, {"h", h}, {"s", s}, {"gamma", gamma},
           {"eta_max", eta_max}, {"chains", json::array()}};
    for (int C = 1; C <= chains; ++C) {
      auto cost = account_privacy(b, C);
      out["chains"].push_back({{"C", C}, {"eps", cost.eps}, {"delta", cost.delta}});
    }
    if (!as_json) {
      std::printf("eta_max = %.10g\n", eta_max);
      for (int C = 1; C <= chains; ++C) {
        auto cost = account_privacy(b, C);
        std::printf("  C = %d chains: (eps, delta) = (%.6g, %.6g)\n", C, cost.eps, cost.delta);
      }
    }
  }
  if (as_json) std::cout << out.dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// bound

struct Trace {
  double emp = 0.0;  // empirical risk at the final step
  double Y = 0.0;    // sum of squared gradient-difference summands
  std::size_t rows = 0;
};

// Accepts either the run history schema (uses the last row's val_loss and Y)
// or a per-step table with columns `risk` and `d2` (sums d2, last risk).
Trace read_trace(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("--trace", "cannot open " + path);
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("--trace", path + ": empty file");
  auto header = split(line, ',');
  auto col = [&](const std::string& name) -> long {
    auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : it - header.begin();
  };
  const long c_val = col("val_loss"), c_Y = col("Y"), c_risk = col("risk"), c_d2 = col("d2");
  const bool history = c_val >= 0 && c_Y >= 0;
  if (!history && (c_risk < 0 || c_d2 < 0))
    throw ConfigError("--trace", path + ": need columns val_loss,Y or risk,d2");
  Trace t;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cells = split(line, ',');
    if (cells.size() != header.size())
      throw ConfigError("--trace", path + ":" + std::to_string(lineno) + ": wrong column count");
    auto cell = [&](long k) {
      try {
        std::size_t used = 0;
        double v = std::stod(cells[k], &used);
        if (used != cells[k].size()) throw std::invalid_argument("trailing");
        return v;
      } catch (const std::exception&) {
        throw ConfigError("--trace", path + ":" + std::to_string(lineno) + ": not a number: '" +
                                         cells[k] + "'");
      }
    };
    if (history) {
      t.emp = cell(c_val);
      t.Y = cell(c_Y);
    } else {
      const double d2 = cell(c_d2);
      if (d2 < 0.0) throw ConfigError("--trace", path + ":" + std::to_string(lineno) + ": negative d2");
      t.Y += d2;
      t.emp = cell(c_risk);
    }
    ++t.rows;
  }
  if (t.rows == 0) throw ConfigError("--trace", path + ": no data rows");
  return t;
}

struct BoundArgs {
  std::string trace, kind = "simplified";
  std::size_t n = 0;
  double eps = 0.0, delta = 0.0, eta = 0.0, Delta = 0.05, c1 = 1.0, c2 = 1.0, c_beta = 1.0;
  std::optional<double> kl;
  std::vector<double> range;
  bool uncertified = false;
};

int cmd_bound(const BoundArgs& a) {
  const Trace t = read_trace(a.trace);
  if (a.n == 0) throw ConfigError("--n", "must be positive");
  BoundConfig cfg;
  cfg.Delta = a.Delta;
  cfg.c1 = a.c1;
  cfg.c2 = a.c2;
  cfg.c_beta = a.c_beta;
  cfg.privacy_certified = !a.uncertified;
  BoundForm form = BoundForm::kSimplified;
  if (a.kind == "general" || a.kind == "bounded") form = BoundForm::kGeneral;
  else if (a.kind != "simplified") throw ConfigError("--kind", "expected simplified, general or bounded");
  if (!a.range.empty()) {
    if (a.range.size() != 2) throw ConfigError("--range", "expected two values a,b");
    cfg.range = std::make_pair(a.range[0], a.range[1]);
  } else if (a.kind == "bounded") {
    throw ConfigError("--range", "the bounded kind needs --range a,b");
  }
  double kl;
  if (a.kl) {
    kl = *a.kl;
  } else {
    if (!(a.eta > 0.0)) throw ConfigError("--eta", "needed to turn the trace into a KL estimate");
    kl = fisher_kl_estimate(t.Y, static_cast<double>(a.n), a.eta);
  }
  try {
    cfg.validate();
    check_privacy_domain(a.eps, a.delta, static_cast<double>(a.n));
  } catch (const DomainError& e) {
    throw ConfigError("bound", e.what());
  }
  BoundReport r = pac_bayes_bound(t.emp, kl, a.n, a.eps, a.delta, cfg, form);
  json j = r;
  j["trace"] = {{"file", a.trace}, {"rows", t.rows}, {"Y", t.Y}};
  std::cout << j.dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// plot-data: every CSV in a run directory becomes a whitespace-separated
// gnuplot file with one block per seed; selection paths also get a per-p
// mean/CI table.

int cmd_plot_data(const fs::path& run, fs::path out) {
  if (!fs::is_directory(run)) throw ConfigError("--run", run.string() + " is not a directory");
  if (out.empty()) out = run;
  fs::create_directories(out);
  std::size_t written = 0;
  for (const auto& entry : fs::directory_iterator(run)) {
    if (entry.path().extension() != ".csv") continue;
    std::ifstream is(entry.path());
    std::string line;
    if (!std::getline(is, line)) continue;
    const auto header = split(line, ',');
    const long seed_col =
        std::find(header.begin(), header.end(), "seed") - header.begin();
    const bool by_seed = seed_col < static_cast<long>(header.size());
    std::ofstream os = open_out(out / (entry.path().stem().string() + ".dat"));
    os << "#";
    for (const auto& h : header) os << ' ' << h;
    os << '\n';
    std::string last_seed;
    // p -> (objective values, test mses) for path files.
    std::map<long, std::pair<std::vector<double>, std::vector<double>>> by_p;
    const bool is_path = entry.path().stem().string().rfind("path_", 0) == 0;
    while (std::getline(is, line)) {
      auto cells = split(line, ',');
      if (by_seed && cells.size() > static_cast<std::size_t>(seed_col)) {
        if (!last_seed.empty() && cells[seed_col] != last_seed) os << "\n\n";
        last_seed = cells[seed_col];
      }
      for (std::size_t i = 0; i < cells.size(); ++i) {
        std::string v = cells[i].empty() ? "-" : cells[i];
        std::replace(v.begin(), v.end(), ' ', '+');
        os << (i ? " " : "") << v;
      }
      os << '\n';
      if (is_path && cells.size() >= 8) {
        auto& slot = by_p[std::stol(cells[1])];
        slot.first.push_back(std::stod(cells[3]));
        slot.second.push_back(std::stod(cells[7]));
      }
    }
    ++written;
    if (is_path) {
      std::ofstream ms = open_out(out / (entry.path().stem().string() + "_mean.dat"));
      ms << "# p objective_mean objective_ci95 test_mse_mean test_mse_ci95 seeds\n";
      auto mean_ci = [](const std::vector<double>& v) {
        const double n = static_cast<double>(v.size());
        const double m = std::accumulate(v.begin(), v.end(), 0.0) / n;
        double ss = 0.0;
        for (double x : v) ss += (x - m) * (x - m);
        const double sd = v.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
        return std::make_pair(m, 1.96 * sd / std::sqrt(n));
      };
      for (const auto& [p, vals] : by_p) {
        auto [om, oc] = mean_ci(vals.first);
        auto [tm, tc] = mean_ci(vals.second);
        ms << p << ' ' << num(om) << ' ' << num(oc) << ' ' << num(tm) << ' ' << num(tc) << ' '
           << vals.first.size() << '\n';
      }
      ++written;
    }
  }
  std::cout << "wrote " << written << " .dat files to " << out.string() << '\n';
  return 0;
}

}  // namespace pbho::cli

int main(int argc, char** argv) {
  using namespace pbho;
  using namespace pbho::cli;
  CLI::App app{"PAC-Bayes hyperparameter optimization toolkit"};
  app.require_subcommand(1);

  std::string config, out;
  std::vector<std::string> sets;
  bool json_out = false;
  auto* run = app.add_subcommand("run", "run a configured experiment");
  run->add_option("--config", config, "TOML experiment configuration")->required();
  run->add_option("--set", sets, "override a configuration value (key=value)");
  run->add_option("--out", out, "output directory (overrides output_dir)");
  run->add_flag("--json", json_out, "print the run summary as JSON");

  std::size_t h = 0, s = 0;
  double gamma = 1.0;
  std::optional<double> eps, delta, eta;
  int chains = 1;
  auto* priv = app.add_subcommand("privacy", "step-size certificate or (eps, delta) frontier");
  priv->set_help_flag("--help", "print this help message and exit");  // frees -h
  priv->add_option("--h", h, "minibatch size")->required();
  priv->add_option("--s", s, "dataset size")->required();
  priv->add_option("--gamma", gamma, "clipping threshold");
  priv->add_option("--eps", eps, "target epsilon");
  priv->add_option("--delta", delta, "target delta");
  priv->add_option("--eta", eta, "step size whose frontier to print");
  priv->add_option("--chains", chains, "show accounting for 1..C chains");
  priv->add_flag("--json", json_out, "machine-readable output");

  BoundArgs b;
  auto* bound = app.add_subcommand("bound", "assemble a PAC-Bayes bound from a trace");
  bound->add_option("--trace", b.trace, "history CSV or per-step risk,d2 CSV")->required();
  bound->add_option("--kind", b.kind, "simplified | general | bounded");
  bound->add_option("--n", b.n, "validation sample size")->required();
  bound->add_option("--eps", b.eps, "privacy epsilon")->required();
  bound->add_option("--delta", b.delta, "privacy delta")->required();
  bound->add_option("--eta", b.eta, "inner step size (for the KL estimate)");
  bound->add_option("--kl", b.kl, "use this KL value instead of the trace estimate");
  bound->add_option("--Delta", b.Delta, "confidence parameter");
  bound->add_option("--c1", b.c1, "constant c1");
  bound->add_option("--c2", b.c2, "constant c2");
  bound->add_option("--c-beta", b.c_beta, "constant in beta");
  bound->add_option("--range", b.range, "loss range a,b")->delimiter(',');
  bound->add_flag("--uncertified", b.uncertified, "mark the privacy certificate as invalid");

  std::string run_dir, plot_out;
  auto* plot = app.add_subcommand("plot-data", "export gnuplot .dat files from a run directory");
  plot->add_option("--run", run_dir, "run output directory")->required();
  plot->add_option("--out", plot_out, "destination (default: the run directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return cmd_run(config, sets, out, json_out);
    if (*priv) return cmd_privacy(h, s, gamma, eps, delta, eta, chains, json_out);
    if (*bound) return cmd_bound(b);
    if (*plot) return cmd_plot_data(run_dir, plot_out);
  } catch (const ConfigError& e) {
    std::cerr << "pbho: invalid configuration: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DatasetError& e) {
    std::cerr << "pbho: dataset error: " << e.what() << '\n';
    return kExitDataset;
  } catch (const DomainError& e) {
    // Argument-domain violations surface before any work starts.
    std::cerr << "pbho: invalid argument: " << e.what() << '\n';
    return *priv ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "pbho: runtime failure: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
