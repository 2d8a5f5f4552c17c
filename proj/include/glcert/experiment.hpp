#pragma once

#include <sys/resource.h>

#include <chrono>
#include <filesystem>

#include "glcert/certify.hpp"
#include "glcert/defend.hpp"
#include "glcert/io.hpp"

namespace glcert {

enum class Mode { certify, robust_curve, label_sweep, timing };

inline std::string to_string(Mode m) {
  switch (m) {
    case Mode::certify: return "certify";
    case Mode::robust_curve: return "robust_curve";
    case Mode::label_sweep: return "label_sweep";
    case Mode::timing: return "timing";
  }
  return "?";
}

inline Mode mode_from_string(const std::string& s) {
  if (s == "certify") return Mode::certify;
  if (s == "robust_curve" || s == "curves") return Mode::robust_curve;
  if (s == "label_sweep" || s == "label-sweep") return Mode::label_sweep;
  if (s == "timing") return Mode::timing;
  throw ConfigError("unknown mode '" + s + "'");
}

/// The eight classifier variants of the robustness curves.
inline const std::vector<std::string>& all_variants() {
  static const std::vector<std::string> v{"GL", "ATGL", "ATGL-ALL", "RobustGL", "kNN", "ATNN", "ATNN-ALL", "RobustNN"};
  return v;
}

struct DatasetConfig {
  std::string name = "halfmoon";  // halfmoon | abalone | mnist
  std::size_t n_labeled = 2000;   // N - M
  std::size_t n_test = 1000;
  std::size_t n_validation = 1000;
  double noise = 0.2;
  std::string abalone_path;
  bool abalone_header = false;
  SexEncoding abalone_sex = SexEncoding::drop;
  std::string mnist_images, mnist_labels;
};

struct SurrogateConfig {
  TrainConfig train{};
  std::size_t bb_rounds = 3;
  std::size_t bb_seed_points = 100;
  double bb_aug_step = 0.1;
  std::size_t pool_cap = 10000;
};

struct CalibrationConfig {
  bool enabled = true;
  CalibrationGrid grid{{0.1, 0.2, 0.3, 0.5, 1.0}, {0.5, 0.85, 1.2}};
  double subset_fraction = 0.2;
  std::vector<std::uint64_t> seeds{1001, 1002, 1003};
  std::size_t budgets = 5;
  double band_floor = 0.0;
  double c_small = 0.3;  // used when calibration is disabled
  double c_big = 0.85;
};

struct ExperimentConfig {
  Mode mode = Mode::certify;
  DatasetConfig data;
  GraphSpec graph;
  std::size_t knn_k = 10;
  SolverConfig solver;
  std::vector<AttackKind> attacks{std::begin(kAllAttacks), std::end(kAllAttacks)};
  DirectionSign direction_sign = DirectionSign::paper;
  std::vector<double> r_grid{0.0, 0.05, 0.1, 0.15, 0.2};
  std::size_t budgets_per_run = 20;
  std::vector<std::size_t> label_sizes;  // certify rows / label sweep; empty: {data.n_labeled}
  std::vector<std::string> variants = all_variants();
  std::vector<double> a_grid{0.05, 0.1, 0.2, 0.4};
  std::vector<std::size_t> timing_k{5, 10, 15, 20};
  std::size_t timing_repeats = 3;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  SurrogateConfig surrogate;
  CalibrationConfig calibration;

  std::vector<std::size_t> sizes() const {
    return label_sizes.empty() ? std::vector<std::size_t>{data.n_labeled} : label_sizes;
  }
};

// ---------------------------------------------------------------------------
// key=value settings
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
std::string join(const std::vector<T>& v, const std::function<std::string(const T&)>& f) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + f(v[i]);
  return out;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != ' ' && c != '\t') {
      cur += c;
    }
  }
  if (!cur.empty() || !out.empty()) out.push_back(cur);
  return out;
}

inline double to_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0') throw ConfigError(key + ": expected a number, got '" + v + "'");
  return x;
}

inline std::uint64_t to_uint(const std::string& key, const std::string& v) {
  char* end = nullptr;
  if (v.empty() || v[0] == '-') throw ConfigError(key + ": expected a nonnegative integer, got '" + v + "'");
  const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (*end != '\0') throw ConfigError(key + ": expected a nonnegative integer, got '" + v + "'");
  return x;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

inline std::vector<double> to_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& s : split_list(v)) out.push_back(to_double(key, s));
  return out;
}

template <class T>
std::vector<T> to_uints(const std::string& key, const std::string& v) {
  std::vector<T> out;
  for (const auto& s : split_list(v)) out.push_back(static_cast<T>(to_uint(key, s)));
  return out;
}

}  // namespace detail

/// Applies one `section.key = value` setting. Unknown keys are errors.
inline void apply_setting(ExperimentConfig& c, const std::string& key, const std::string& v) {
  using namespace detail;
  auto& d = c.data;
  auto& s = c.surrogate;
  auto& cal = c.calibration;
  try {
    if (key == "run.mode") c.mode = mode_from_string(v);
    else if (key == "run.seeds") c.seeds = to_uints<std::uint64_t>(key, v);
    else if (key == "data.name") d.name = v;
    else if (key == "data.n_labeled") d.n_labeled = to_uint(key, v);
    else if (key == "data.n_test") d.n_test = to_uint(key, v);
    else if (key == "data.n_validation") d.n_validation = to_uint(key, v);
    else if (key == "data.noise") d.noise = to_double(key, v);
    else if (key == "data.label_sizes") c.label_sizes = to_uints<std::size_t>(key, v);
    else if (key == "data.abalone_path") d.abalone_path = v;
    else if (key == "data.abalone_header") d.abalone_header = to_bool(key, v);
    else if (key == "data.abalone_sex") {
      if (v != "drop" && v != "one_hot") throw ConfigError(key + ": expected drop|one_hot");
      d.abalone_sex = v == "drop" ? SexEncoding::drop : SexEncoding::one_hot;
    } else if (key == "data.mnist_images") d.mnist_images = v;
    else if (key == "data.mnist_labels") d.mnist_labels = v;
    else if (key == "graph.type") {
      if (v != "knn" && v != "epsilon") throw ConfigError(key + ": expected knn|epsilon");
      c.graph.type = v == "knn" ? GraphSpec::Type::knn : GraphSpec::Type::epsilon;
    } else if (key == "graph.k") c.graph.k = to_uint(key, v);
    else if (key == "graph.weights") c.graph.weights = knn_weights_from_string(v);
    else if (key == "graph.sigma_index") c.graph.sigma_index = to_uint(key, v);
    else if (key == "graph.kernel") c.graph.kernel.kind = kernel_kind_from_string(v);
    else if (key == "graph.epsilon") c.graph.kernel.epsilon = to_double(key, v);
    else if (key == "classifier.knn_k") c.knn_k = to_uint(key, v);
    else if (key == "classifier.solver_tol") c.solver.tol = to_double(key, v);
    else if (key == "classifier.solver_max_iter") c.solver.max_iter = to_uint(key, v);
    else if (key == "attack.kinds") {
      c.attacks.clear();
      for (const auto& k : split_list(v)) c.attacks.push_back(attack_kind_from_string(k));
    } else if (key == "attack.direction_sign") {
      if (v != "paper" && v != "toward_opponent") throw ConfigError(key + ": expected paper|toward_opponent");
      c.direction_sign = v == "paper" ? DirectionSign::paper : DirectionSign::toward_opponent;
    } else if (key == "attack.r_grid") c.r_grid = to_doubles(key, v);
    else if (key == "attack.budgets_per_run") c.budgets_per_run = to_uint(key, v);
    else if (key == "defense.variants") c.variants = split_list(v);
    else if (key == "defense.a_grid") c.a_grid = to_doubles(key, v);
    else if (key == "surrogate.learning_rate") s.train.learning_rate = to_double(key, v);
    else if (key == "surrogate.epochs") s.train.epochs = to_uint(key, v);
    else if (key == "surrogate.batch_size") s.train.batch_size = to_uint(key, v);
    else if (key == "surrogate.l2") s.train.l2 = to_double(key, v);
    else if (key == "surrogate.hidden") s.train.hidden = to_uint(key, v);
    else if (key == "surrogate.max_centers") s.train.max_centers = to_uint(key, v);
    else if (key == "surrogate.bb_rounds") s.bb_rounds = to_uint(key, v);
    else if (key == "surrogate.bb_seed_points") s.bb_seed_points = to_uint(key, v);
    else if (key == "surrogate.bb_aug_step") s.bb_aug_step = to_double(key, v);
    else if (key == "surrogate.pool_cap") s.pool_cap = to_uint(key, v);
    else if (key == "calibration.enabled") cal.enabled = to_bool(key, v);
    else if (key == "calibration.c_small_grid") cal.grid.c_small = to_doubles(key, v);
    else if (key == "calibration.c_big_grid") cal.grid.c_big = to_doubles(key, v);
    else if (key == "calibration.subset_fraction") cal.subset_fraction = to_double(key, v);
    else if (key == "calibration.seeds") cal.seeds = to_uints<std::uint64_t>(key, v);
    else if (key == "calibration.budgets") cal.budgets = to_uint(key, v);
    else if (key == "calibration.band_floor") cal.band_floor = to_double(key, v);
    else if (key == "calibration.c_small") cal.c_small = to_double(key, v);
    else if (key == "calibration.c_big") cal.c_big = to_double(key, v);
    else if (key == "timing.k_values") c.timing_k = to_uints<std::size_t>(key, v);
    else if (key == "timing.repeats") c.timing_repeats = to_uint(key, v);
    else throw ConfigError("unknown setting '" + key + "'");
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

/// Every setting as `section.key=value` lines, in a fixed order. Feeding the
/// lines back through apply_setting reproduces the config.
inline std::string canonical_settings(const ExperimentConfig& c) {
  using detail::join;
  const auto num = [](const double& x) { return format_double(x); };
  const auto u64 = [](const std::uint64_t& x) { return std::to_string(x); };
  const auto sz = [](const std::size_t& x) { return std::to_string(x); };
  const auto str = [](const std::string& x) { return x; };
  const auto& d = c.data;
  const auto& s = c.surrogate;
  const auto& cal = c.calibration;
  std::ostringstream os;
  os << "run.mode=" << to_string(c.mode) << '\n'
     << "run.seeds=" << join<std::uint64_t>(c.seeds, u64) << '\n'
     << "data.name=" << d.name << '\n'
     << "data.n_labeled=" << d.n_labeled << '\n'
     << "data.n_test=" << d.n_test << '\n'
     << "data.n_validation=" << d.n_validation << '\n'
     << "data.noise=" << num(d.noise) << '\n'
     << "data.label_sizes=" << join<std::size_t>(c.label_sizes, sz) << '\n'
     << "data.abalone_path=" << d.abalone_path << '\n'
     << "data.abalone_header=" << (d.abalone_header ? 1 : 0) << '\n'
     << "data.abalone_sex=" << (d.abalone_sex == SexEncoding::drop ? "drop" : "one_hot") << '\n'
     << "data.mnist_images=" << d.mnist_images << '\n'
     << "data.mnist_labels=" << d.mnist_labels << '\n'
     << "graph.type=" << (c.graph.type == GraphSpec::Type::knn ? "knn" : "epsilon") << '\n'
     << "graph.k=" << c.graph.k << '\n'
     << "graph.weights=" << to_string(c.graph.weights) << '\n'
     << "graph.sigma_index=" << c.graph.sigma_index << '\n'
     << "graph.kernel=" << to_string(c.graph.kernel.kind) << '\n'
     << "graph.epsilon=" << num(c.graph.kernel.epsilon) << '\n'
     << "classifier.knn_k=" << c.knn_k << '\n'
     << "classifier.solver_tol=" << num(c.solver.tol) << '\n'
     << "classifier.solver_max_iter=" << c.solver.max_iter << '\n'
     << "attack.kinds="
     << join<AttackKind>(c.attacks, [](const AttackKind& k) { return to_string(k); }) << '\n'
     << "attack.direction_sign=" << (c.direction_sign == DirectionSign::paper ? "paper" : "toward_opponent") << '\n'
     << "attack.r_grid=" << join<double>(c.r_grid, num) << '\n'
     << "attack.budgets_per_run=" << c.budgets_per_run << '\n'
     << "defense.variants=" << join<std::string>(c.variants, str) << '\n'
     << "defense.a_grid=" << join<double>(c.a_grid, num) << '\n'
     << "surrogate.learning_rate=" << num(s.train.learning_rate) << '\n'
     << "surrogate.epochs=" << s.train.epochs << '\n'
     << "surrogate.batch_size=" << s.train.batch_size << '\n'
     << "surrogate.l2=" << num(s.train.l2) << '\n'
     << "surrogate.hidden=" << s.train.hidden << '\n'
     << "surrogate.max_centers=" << s.train.max_centers << '\n'
     << "surrogate.bb_rounds=" << s.bb_rounds << '\n'
     << "surrogate.bb_seed_points=" << s.bb_seed_points << '\n'
     << "surrogate.bb_aug_step=" << num(s.bb_aug_step) << '\n'
     << "surrogate.pool_cap=" << s.pool_cap << '\n'
     << "calibration.enabled=" << (cal.enabled ? 1 : 0) << '\n'
     << "calibration.c_small_grid=" << join<double>(cal.grid.c_small, num) << '\n'
     << "calibration.c_big_grid=" << join<double>(cal.grid.c_big, num) << '\n'
     << "calibration.subset_fraction=" << num(cal.subset_fraction) << '\n'
     << "calibration.seeds=" << join<std::uint64_t>(cal.seeds, u64) << '\n'
     << "calibration.budgets=" << cal.budgets << '\n'
     << "calibration.band_floor=" << num(cal.band_floor) << '\n'
     << "calibration.c_small=" << num(cal.c_small) << '\n'
     << "calibration.c_big=" << num(cal.c_big) << '\n'
     << "timing.k_values=" << join<std::size_t>(c.timing_k, sz) << '\n'
     << "timing.repeats=" << c.timing_repeats << '\n';
  return os.str();
}

inline std::string config_hash(const ExperimentConfig& c) { return fnv1a_hex(canonical_settings(c)); }

inline void validate_config(const ExperimentConfig& c) {
  auto fail = [](const std::string& m) { throw ConfigError("config: " + m); };
  if (c.seeds.empty()) fail("seeds must be nonempty");
  if (!std::is_sorted(c.r_grid.begin(), c.r_grid.end())) fail("r_grid must be sorted ascending");
  for (double r : c.r_grid)
    if (!(r >= 0.0)) fail("r_grid values must be >= 0");
  if (c.data.name != "halfmoon" && c.data.name != "abalone" && c.data.name != "mnist")
    fail("unknown dataset '" + c.data.name + "'");
  if (c.data.name == "abalone" && c.data.abalone_path.empty()) fail("abalone needs data.abalone_path");
  if (c.data.name == "mnist" && (c.data.mnist_images.empty() || c.data.mnist_labels.empty()))
    fail("mnist needs data.mnist_images and data.mnist_labels");
  for (const auto* path : {&c.data.abalone_path, &c.data.mnist_images, &c.data.mnist_labels})
    if (!path->empty() && !std::filesystem::exists(*path)) fail("no such file '" + *path + "'");
  if (c.data.n_labeled < 2 || c.data.n_test < 1) fail("need n_labeled >= 2 and n_test >= 1");
  if (c.attacks.empty() && c.mode != Mode::timing) fail("attack list must be nonempty");
  if (c.graph.k < 1 || c.knn_k < 1) fail("k must be >= 1");
  for (const auto& v : c.variants)
    if (std::find(all_variants().begin(), all_variants().end(), v) == all_variants().end())
      fail("unknown classifier variant '" + v + "'");
  if (c.mode == Mode::certify) {
    if (c.budgets_per_run < 1) fail("budgets_per_run must be >= 1");
    if (c.calibration.enabled) {
      if (c.calibration.seeds.empty()) fail("calibration seeds must be nonempty");
      if (!(c.calibration.subset_fraction > 0.0 && c.calibration.subset_fraction <= 1.0))
        fail("calibration.subset_fraction must lie in (0, 1]");
      if (c.calibration.grid.c_small.empty() || c.calibration.grid.c_big.empty()) fail("calibration grid is empty");
    }
  }
  if (c.mode == Mode::timing && c.timing_k.empty()) fail("timing.k_values must be nonempty");
  if (c.mode == Mode::label_sweep && c.r_grid.empty()) fail("r_grid must be nonempty");
  if (c.mode == Mode::robust_curve && c.r_grid.empty()) fail("r_grid must be nonempty");
}

// ---------------------------------------------------------------------------
// Data splits and attack preparation
// ---------------------------------------------------------------------------

struct SplitData {
  Dataset train;       // N - M labeled points
  Dataset validation;  // scored as queries
  Dataset test;        // scored as queries
};

inline SplitData load_split(const DatasetConfig& dc, std::size_t n_labeled, std::uint64_t seed) {
  SplitData s;
  if (dc.name == "halfmoon") {
    auto [tr, te] = gen_halfmoon(n_labeled + dc.n_validation, dc.n_test, dc.noise, seed);
    std::vector<std::size_t> a(n_labeled), b(dc.n_validation);
    std::iota(a.begin(), a.end(), std::size_t{0});
    std::iota(b.begin(), b.end(), n_labeled);
    s.train = tr.subset(a);
    s.validation = tr.subset(b);
    s.test = std::move(te);
  } else if (dc.name == "abalone") {
    auto [tr, te, va] = load_abalone(dc.abalone_path, SplitSpec{n_labeled, dc.n_test, dc.n_validation, seed},
                                     AbaloneOptions{dc.abalone_header, dc.abalone_sex});
    s.train = std::move(tr);
    s.test = std::move(te);
    s.validation = std::move(va);
  } else if (dc.name == "mnist") {
    const std::size_t per_class = std::max((n_labeled + dc.n_validation + 1) / 2, (dc.n_test + 1) / 2);
    auto [tr, te] = load_mnist_1v7(dc.mnist_images, dc.mnist_labels, per_class, seed);
    Rng rng(mix_seed(seed, 40));
    auto idx = sample_without_replacement(tr.size(), n_labeled + dc.n_validation, rng);
    s.train = tr.subset(std::span(idx).first(n_labeled));
    s.validation = tr.subset(std::span(idx).subspan(n_labeled));
    auto tidx = sample_without_replacement(te.size(), dc.n_test, rng);
    s.test = te.subset(tidx);
  } else {
    throw ConfigError("unknown dataset '" + dc.name + "'");
  }
  s.train.labeled_mask.assign(s.train.size(), true);
  s.validation = as_queries(std::move(s.validation));
  s.test = as_queries(std::move(s.test));
  return s;
}

/// Frozen surrogates for one seed. KSA uses a kernel model fit to the
/// training set; BB surrogates come from substitute training against `victim`.
struct AttackSuite {
  std::map<AttackKind, std::shared_ptr<const SurrogateModel>> surrogates;
  std::map<AttackKind, std::map<std::string, std::string>> provenance;
  std::uint64_t seed = 0;
  DirectionSign sign = DirectionSign::paper;

  AttackSpec spec(AttackKind k, double r) const {
    AttackSpec s;
    s.kind = k;
    s.budget_r = r;
    s.seed = seed;
    s.direction_sign = sign;
    if (k != AttackKind::direct) {
      auto it = surrogates.find(k);
      if (it == surrogates.end()) throw ConfigError("attack '" + to_string(k) + "' has no trained surrogate");
      s.surrogate = it->second;
      s.provenance = provenance.at(k);
    }
    return s;
  }
};

inline AttackSuite prepare_attacks(const ExperimentConfig& cfg, const std::vector<AttackKind>& kinds,
                                   const SplitData& data, const Pipeline& victim, std::uint64_t seed) {
  AttackSuite suite;
  suite.seed = seed;
  suite.sign = cfg.direction_sign;
  for (auto k : kinds) {
    if (k == AttackKind::direct || suite.surrogates.count(k)) continue;
    TrainConfig tc = cfg.surrogate.train;
    tc.seed = mix_seed(seed, 20 + static_cast<std::uint64_t>(k));
    std::map<std::string, std::string> prov{{"training_seed", std::to_string(tc.seed)}};
    if (k == AttackKind::ksa) {
      suite.surrogates[k] = std::make_shared<SurrogateModel>(train_surrogate(ModelKind::kernel, data.train, tc));
      prov["kind"] = "kernel";
      prov["rounds"] = "0";
      prov["victim_queries"] = "0";
    } else {
      const ModelKind mk = k == AttackKind::bb_lr ? ModelKind::logistic
                           : k == AttackKind::bb_nn ? ModelKind::mlp
                                                    : ModelKind::kernel;
      const std::size_t m = std::min(cfg.surrogate.bb_seed_points, data.validation.size());
      auto seeds = data.validation.points.subset(iota_indices(m));
      auto res = substitute_train_loop(make_victim_oracle(victim, data.train), seeds, cfg.surrogate.bb_rounds,
                                       cfg.surrogate.bb_aug_step, mk, tc, cfg.surrogate.pool_cap);
      suite.surrogates[k] = std::make_shared<SurrogateModel>(std::move(res.model));
      prov["kind"] = to_string(mk);
      prov["rounds"] = std::to_string(res.rounds);
      prov["victim_queries"] = std::to_string(res.victim_queries);
    }
    suite.provenance[k] = std::move(prov);
  }
  return suite;
}

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

/// One evaluation of one classifier on one attacked query set.
struct RunRecord {
  std::string dataset;
  std::size_t n_labeled = 0;
  std::string classifier;
  std::uint64_t seed = 0;
  std::string attack;
  double r = 0.0;
  double accuracy = 0.0;
  double u_deviation = 0.0;  // sup over queries of |score(attacked) - score(clean)|
  std::size_t iterations = 0;
  double wall_seconds = 0.0;
  long peak_rss_kb = 0;
};

inline long peak_rss_kb() {
  rusage ru{};
  getrusage(RUSAGE_SELF, &ru);
  return ru.ru_maxrss;
}

struct ExperimentResult {
  std::string config_hash;
  Mode mode = Mode::certify;
  std::vector<RunRecord> runs;
  Table summary;
  std::vector<CertBounds> bounds;  // certify: one per row
  std::vector<CalibrationResult> calibrations;
  std::size_t invariant_violations = 0;
  std::vector<std::string> errors;
  bool calibration_ok = true;
  std::vector<std::pair<std::string, std::vector<Series>>> plots;  // file stem -> series
  std::string plot_xlabel = "r";

  bool ok() const { return invariant_violations == 0 && errors.empty() && calibration_ok; }
};

/// Deterministic record table (no timing columns).
inline Table records_table(const ExperimentResult& res) {
  Table t;
  t.columns = {"config_hash", "dataset", "n_labeled", "classifier", "seed", "attack", "r", "accuracy", "u_deviation",
               "iterations"};
  for (const auto& r : res.runs)
    t.add_row({res.config_hash, r.dataset, std::to_string(r.n_labeled), r.classifier, std::to_string(r.seed), r.attack,
               format_double(r.r), format_double(r.accuracy), format_double(r.u_deviation),
               std::to_string(r.iterations)});
  return t;
}

/// Wall time and peak resident set (process high-water mark, not per run).
inline Table instrumentation_table(const ExperimentResult& res) {
  Table t;
  t.columns = {"config_hash", "dataset", "n_labeled", "classifier", "seed", "attack", "r", "wall_seconds",
               "peak_rss_kb"};
  for (const auto& r : res.runs)
    t.add_row({res.config_hash, r.dataset, std::to_string(r.n_labeled), r.classifier, std::to_string(r.seed), r.attack,
               format_double(r.r), format_double(r.wall_seconds), std::to_string(r.peak_rss_kb)});
  return t;
}

namespace detail {

inline double sup_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Budgets uniform in [0, r], sorted.
inline std::vector<double> sample_budgets(double r, std::size_t count, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 31));
  std::uniform_real_distribution<double> u(0.0, r);
  std::vector<double> out(count);
  for (auto& v : out) v = u(rng);
  std::sort(out.begin(), out.end());
  return out;
}

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); }
};

inline Pipeline make_pipeline(const ExperimentConfig& cfg, ClassifierFamily fam, std::size_t k) {
  Pipeline p;
  p.family = fam;
  p.graph = cfg.graph;
  p.graph.k = k;
  p.knn_k = cfg.knn_k;
  p.solver = cfg.solver;
  return p;
}

// Attack `queries` at budget r with precomputed directions; counts contract violations.
inline Dataset attacked_queries(const Dataset& queries, const AttackDirections& dirs, double r, std::size_t& violations) {
  auto pd = apply_directions(queries, dirs, r);
  violations += check_attack_contract(pd, r, AttackScope::unlabeled).total();
  return std::move(pd.perturbed);
}

inline void merge(ExperimentResult& res, std::vector<std::vector<RunRecord>>& per_seed,
                  std::vector<std::size_t>& violations, std::vector<std::string>& errors) {
  for (auto& v : per_seed)
    for (auto& r : v) res.runs.push_back(std::move(r));
  for (auto v : violations) res.invariant_violations += v;
  for (auto& e : errors)
    if (!e.empty()) res.errors.push_back(e);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// certify
// ---------------------------------------------------------------------------

namespace detail {

// Per calibration seed: subset data, surrogates and directions on the validation set.
struct CalibrationSeed {
  SplitData data;
  std::map<AttackKind, AttackDirections> dirs;
};

inline CalibrationResult calibrate_row(const ExperimentConfig& cfg, std::size_t n_labeled, std::size_t& violations) {
  const auto& cc = cfg.calibration;
  const auto n_cal = std::max<std::size_t>(
      2, static_cast<std::size_t>(std::llround(cc.subset_fraction * static_cast<double>(n_labeled))));
  std::vector<CalibrationSeed> seeds(cc.seeds.size());
  std::vector<std::size_t> viol(cc.seeds.size(), 0);
  parallel_for(cc.seeds.size(), [&](std::size_t s) {
    auto& cs = seeds[s];
    cs.data = load_split(cfg.data, n_cal, cc.seeds[s]);
    const auto victim = make_pipeline(cfg, ClassifierFamily::gl, std::min(cfg.graph.k, n_cal + cs.data.validation.size() - 1));
    auto suite = prepare_attacks(cfg, cfg.attacks, cs.data, victim, cc.seeds[s]);
    for (auto k : cfg.attacks)
      cs.dirs[k] = attack_directions(suite.spec(k, 0.0), cs.data.validation, AttackContext{&cs.data.train});
  });
  const std::size_t dim = seeds.front().data.train.dim();
  const std::size_t n_total = n_cal + seeds.front().data.validation.size();

  auto evaluator = [&](const CertBounds& b) {
    CandidateAccuracies acc;
    acc.clean.assign(seeds.size(), 0.0);
    acc.attacks.assign(cfg.attacks.size(), std::vector<double>(seeds.size(), 0.0));
    parallel_for(seeds.size(), [&](std::size_t s) {
      const auto& cs = seeds[s];
      const auto p = make_pipeline(cfg, ClassifierFamily::gl, std::min(b.k_min, n_total - 1));
      acc.clean[s] = evaluate(p, cs.data.train, cs.data.validation).accuracy;
      const auto budgets = sample_budgets(b.r_max, cc.budgets, cc.seeds[s]);
      for (std::size_t a = 0; a < cfg.attacks.size(); ++a) {
        double sum = 0.0;
        for (double r : budgets)
          sum += evaluate(p, cs.data.train, attacked_queries(cs.data.validation, cs.dirs.at(cfg.attacks[a]), r, viol[s]))
                     .accuracy;
        acc.attacks[a][s] = sum / static_cast<double>(budgets.size());
      }
    });
    return acc;
  };
  auto res = calibrate_constants(n_total, n_cal, dim, cc.grid, evaluator, cc.band_floor);
  res.dataset = cfg.data.name;
  res.subset_seed = cc.seeds.front();
  for (auto v : viol) violations += v;
  return res;
}

}  // namespace detail

/// Calibrates (c, C) on a labeled subset, then evaluates every attack at
/// `budgets_per_run` budgets uniform in [0, r_max] for each seed, with the GL
/// graph built at k = k_min.
inline ExperimentResult run_certify_experiment(const ExperimentConfig& cfg) {
  validate_config(cfg);
  ExperimentResult res;
  res.mode = Mode::certify;
  res.config_hash = config_hash(cfg);
  res.summary.columns = {"config_hash", "dataset", "n_labeled", "n_total", "k", "r", "delta", "c_small", "c_big",
                         "calibration_ok", "violations", "no_attack_mean", "no_attack_std"};
  for (auto k : cfg.attacks) {
    res.summary.columns.push_back(to_string(k) + "_mean");
    res.summary.columns.push_back(to_string(k) + "_std");
  }

  for (std::size_t n_labeled : cfg.sizes()) {
    double c_small = cfg.calibration.c_small, c_big = cfg.calibration.c_big;
    bool cal_ok = true;
    if (cfg.calibration.enabled) {
      auto cal = detail::calibrate_row(cfg, n_labeled, res.invariant_violations);
      c_small = cal.c_small;
      c_big = cal.c_big;
      cal_ok = cal.ok;
      res.calibration_ok = res.calibration_ok && cal.ok;
      res.calibrations.push_back(std::move(cal));
    }

    std::vector<std::vector<RunRecord>> per_seed(cfg.seeds.size());
    std::vector<std::size_t> viol(cfg.seeds.size(), 0);
    std::vector<std::string> errors(cfg.seeds.size());
    std::vector<double> clean(cfg.seeds.size(), std::numeric_limits<double>::quiet_NaN());
    std::vector<CertBounds> seed_bounds(cfg.seeds.size());
    parallel_for(cfg.seeds.size(), [&](std::size_t s) {
      const auto seed = cfg.seeds[s];
      try {
        const auto data = load_split(cfg.data, n_labeled, seed);
        const std::size_t n_total = n_labeled + data.test.size();
        const auto b = certified_bounds_k_form(n_total, n_labeled, data.train.dim(), c_small, c_big);
        seed_bounds[s] = b;
        const auto p = detail::make_pipeline(cfg, ClassifierFamily::gl, std::min(b.k_min, n_total - 1));
        const auto suite = prepare_attacks(cfg, cfg.attacks, data, p, seed);
        detail::Timer tc;
        const auto base = evaluate(p, data.train, data.test);
        viol[s] += !base.invariants_ok;
        clean[s] = base.accuracy;
        per_seed[s].push_back({cfg.data.name, n_labeled, "GL", seed, "none", 0.0, base.accuracy, 0.0, base.iterations,
                               tc.seconds(), peak_rss_kb()});
        const auto budgets = detail::sample_budgets(b.r_max, cfg.budgets_per_run, seed);
        for (auto k : cfg.attacks) {
          const auto dirs = attack_directions(suite.spec(k, 0.0), data.test, AttackContext{&data.train});
          for (double r : budgets) {
            detail::Timer t;
            const auto q = detail::attacked_queries(data.test, dirs, r, viol[s]);
            const auto ev = evaluate(p, data.train, q);
            viol[s] += !ev.invariants_ok;
            per_seed[s].push_back({cfg.data.name, n_labeled, "GL", seed, to_string(k), r, ev.accuracy,
                                   detail::sup_diff(ev.pred.scores, base.pred.scores), ev.iterations, t.seconds(),
                                   peak_rss_kb()});
          }
        }
      } catch (const std::exception& e) {
        errors[s] = "certify n_labeled=" + std::to_string(n_labeled) + " seed=" + std::to_string(seed) + ": " + e.what();
      }
    });
    const std::size_t first_run = res.runs.size();
    const std::size_t viol_before = res.invariant_violations;
    detail::merge(res, per_seed, viol, errors);

    std::size_t ok_seed = 0;
    while (ok_seed < cfg.seeds.size() && !errors[ok_seed].empty()) ++ok_seed;
    if (ok_seed == cfg.seeds.size()) continue;
    const auto& b = seed_bounds[ok_seed];
    res.bounds.push_back(b);
    std::vector<double> cl;
    for (double v : clean)
      if (!std::isnan(v)) cl.push_back(v);
    std::vector<std::string> row{res.config_hash,
                                 cfg.data.name,
                                 std::to_string(n_labeled),
                                 std::to_string(n_labeled + cfg.data.n_test),
                                 std::to_string(b.k_min),
                                 format_double(b.r_max),
                                 format_double(b.delta),
                                 format_double(c_small),
                                 format_double(c_big),
                                 cal_ok ? "1" : "0",
                                 std::to_string(res.invariant_violations - viol_before),
                                 format_double(mean(cl)),
                                 format_double(cl.size() > 1 ? stddev(cl) : 0.0)};
    for (auto k : cfg.attacks) {
      std::vector<double> acc;
      for (std::size_t i = first_run; i < res.runs.size(); ++i)
        if (res.runs[i].attack == to_string(k)) acc.push_back(res.runs[i].accuracy);
      row.push_back(format_double(acc.empty() ? std::nan("") : mean(acc)));
      row.push_back(format_double(acc.size() > 1 ? stddev(acc) : 0.0));
    }
    res.summary.add_row(std::move(row));
  }
  return res;
}

// ---------------------------------------------------------------------------
// robust curves and label sweep
// ---------------------------------------------------------------------------

namespace detail {

inline ClassifierFamily family_of(const std::string& v) {
  return v == "GL" || v == "ATGL" || v == "ATGL-ALL" || v == "RobustGL" ? ClassifierFamily::gl : ClassifierFamily::knn;
}

inline DefenseKind defense_of(const std::string& v) {
  if (v == "ATGL" || v == "ATNN") return DefenseKind::at_single;
  if (v == "ATGL-ALL" || v == "ATNN-ALL") return DefenseKind::at_all;
  if (v == "RobustGL" || v == "RobustNN") return DefenseKind::prune;
  return DefenseKind::none;
}

// Every (attack, r, variant) cell for one seed and one labeled size.
inline std::vector<RunRecord> robustness_cells(const ExperimentConfig& cfg, std::size_t n_labeled, std::uint64_t seed,
                                               std::size_t& violations) {
  std::vector<RunRecord> out;
  const auto data = load_split(cfg.data, n_labeled, seed);
  const auto gl = make_pipeline(cfg, ClassifierFamily::gl, cfg.graph.k);
  const auto knn = make_pipeline(cfg, ClassifierFamily::knn, cfg.graph.k);
  bool need_all = false, need_prune = false;
  for (const auto& v : cfg.variants) {
    need_all = need_all || defense_of(v) == DefenseKind::at_all;
    need_prune = need_prune || defense_of(v) == DefenseKind::prune;
  }
  std::vector<AttackKind> kinds = cfg.attacks;
  if (need_all) kinds.assign(std::begin(kAllAttacks), std::end(kAllAttacks));
  const auto suite = prepare_attacks(cfg, kinds, data, gl, seed);
  const double r_top = cfg.r_grid.back();

  // Defended training sets depend on r (augmentation) or the attack (pruning a).
  std::map<double, Dataset> aug_single, aug_all;
  auto training_set = [&](const std::string& variant, double r, AttackKind attack,
                          std::map<std::pair<int, AttackKind>, double>& a_sel) -> Dataset {
    switch (defense_of(variant)) {
      case DefenseKind::none: return data.train;
      case DefenseKind::at_single: {
        auto it = aug_single.find(r);
        if (it == aug_single.end())
          it = aug_single.emplace(r, r == 0.0 ? data.train : augment_adversarial(data.train, {suite.spec(AttackKind::direct, r)}).data).first;
        return it->second;
      }
      case DefenseKind::at_all: {
        auto it = aug_all.find(r);
        if (it == aug_all.end()) {
          std::vector<AttackSpec> specs;
          for (auto k : kAllAttacks) specs.push_back(suite.spec(k, r));
          it = aug_all.emplace(r, r == 0.0 ? data.train : augment_adversarial(data.train, specs).data).first;
        }
        return it->second;
      }
      case DefenseKind::prune: {
        const auto fam = family_of(variant);
        const std::pair<int, AttackKind> key{static_cast<int>(fam), attack};
        auto it = a_sel.find(key);
        if (it == a_sel.end()) {
          const auto spec = suite.spec(attack, r_top);
          it = a_sel.emplace(key, select_separation(data.train, data.validation, cfg.a_grid, fam == ClassifierFamily::gl ? gl : knn, &spec).a).first;
        }
        return robust_prune(data.train, it->second);
      }
    }
    return data.train;
  };
  std::map<std::pair<int, AttackKind>, double> a_sel;
  (void)need_prune;

  for (auto attack : cfg.attacks) {
    const auto dirs = attack_directions(suite.spec(attack, 0.0), data.test, AttackContext{&data.train});
    for (double r : cfg.r_grid) {
      const auto q = attacked_queries(data.test, dirs, r, violations);
      for (const auto& v : cfg.variants) {
        Timer t;
        const Dataset train = training_set(v, r, attack, a_sel);
        const auto p = family_of(v) == ClassifierFamily::gl ? gl : knn;
        const auto clean = evaluate(p, train, data.test);
        const auto ev = r == 0.0 ? clean : evaluate(p, train, q);
        violations += !clean.invariants_ok + !ev.invariants_ok;
        out.push_back({cfg.data.name, n_labeled, v, seed, to_string(attack), r, ev.accuracy,
                       sup_diff(ev.pred.scores, clean.pred.scores), ev.iterations, t.seconds(), peak_rss_kb()});
      }
    }
  }
  return out;
}

inline std::vector<RunRecord> run_cells(const ExperimentConfig& cfg, std::size_t n_labeled, ExperimentResult& res) {
  std::vector<std::vector<RunRecord>> per_seed(cfg.seeds.size());
  std::vector<std::size_t> viol(cfg.seeds.size(), 0);
  std::vector<std::string> errors(cfg.seeds.size());
  parallel_for(cfg.seeds.size(), [&](std::size_t s) {
    try {
      per_seed[s] = robustness_cells(cfg, n_labeled, cfg.seeds[s], viol[s]);
    } catch (const std::exception& e) {
      errors[s] = "n_labeled=" + std::to_string(n_labeled) + " seed=" + std::to_string(cfg.seeds[s]) + ": " + e.what();
    }
  });
  const std::size_t first = res.runs.size();
  merge(res, per_seed, viol, errors);
  return {res.runs.begin() + static_cast<std::ptrdiff_t>(first), res.runs.end()};
}

}  // namespace detail

/// Accuracy of every classifier variant under every attack across the r grid.
inline ExperimentResult run_robust_curves(const ExperimentConfig& cfg) {
  validate_config(cfg);
  ExperimentResult res;
  res.mode = Mode::robust_curve;
  res.config_hash = config_hash(cfg);
  const auto runs = detail::run_cells(cfg, cfg.data.n_labeled, res);
  res.summary.columns = {"config_hash", "dataset", "attack", "classifier", "r", "mean_accuracy", "std_accuracy", "runs"};
  for (auto attack : cfg.attacks) {
    std::vector<Series> series;
    for (const auto& v : cfg.variants) {
      Series s{v, {}, {}};
      for (double r : cfg.r_grid) {
        std::vector<double> acc;
        for (const auto& rec : runs)
          if (rec.attack == to_string(attack) && rec.classifier == v && rec.r == r) acc.push_back(rec.accuracy);
        if (acc.empty()) continue;
        const double m = mean(acc);
        res.summary.add_row({res.config_hash, cfg.data.name, to_string(attack), v, format_double(r), format_double(m),
                             format_double(acc.size() > 1 ? stddev(acc) : 0.0), std::to_string(acc.size())});
        s.x.push_back(r);
        s.y.push_back(m);
      }
      series.push_back(std::move(s));
    }
    res.plots.emplace_back(cfg.data.name + "_" + to_string(attack), std::move(series));
  }
  return res;
}

/// Robustness across labeled-set sizes at fixed budgets, with the Spearman
/// correlation of mean accuracy against N - M per (classifier, attack, r).
inline ExperimentResult run_label_sweep(const ExperimentConfig& cfg) {
  validate_config(cfg);
  ExperimentResult res;
  res.mode = Mode::label_sweep;
  res.config_hash = config_hash(cfg);
  res.plot_xlabel = "N-M";
  const auto sizes = cfg.sizes();
  for (auto n : sizes) detail::run_cells(cfg, n, res);

  res.summary.columns = {"config_hash", "dataset", "attack", "classifier", "r", "spearman", "sizes", "mean_accuracies"};
  for (auto attack : cfg.attacks) {
    std::vector<Series> series;
    for (const auto& v : cfg.variants)
      for (double r : cfg.r_grid) {
        std::vector<double> xs, ys;
        for (auto n : sizes) {
          std::vector<double> acc;
          for (const auto& rec : res.runs)
            if (rec.n_labeled == n && rec.attack == to_string(attack) && rec.classifier == v && rec.r == r)
              acc.push_back(rec.accuracy);
          if (acc.empty()) continue;
          xs.push_back(static_cast<double>(n));
          ys.push_back(mean(acc));
        }
        const double rho = xs.size() >= 2 ? spearman(xs, ys) : std::nan("");
        std::string accs;
        for (std::size_t i = 0; i < ys.size(); ++i) accs += (i ? ";" : "") + format_double(ys[i]);
        std::string sz;
        for (std::size_t i = 0; i < xs.size(); ++i) sz += (i ? ";" : "") + format_double(xs[i]);
        res.summary.add_row({res.config_hash, cfg.data.name, to_string(attack), v, format_double(r),
                             std::isnan(rho) ? "undefined" : format_double(rho), sz, accs});
        series.push_back({v + " r=" + format_double(r), xs, ys});
      }
    res.plots.emplace_back(cfg.data.name + "_" + to_string(attack) + "_labels", std::move(series));
  }
  return res;
}

// ---------------------------------------------------------------------------
// timing
// ---------------------------------------------------------------------------

/// Median wall time of kNN classification and GL (graph + solve) per k, with a
/// working-set estimate from container sizes. Only orderings are meaningful.
inline ExperimentResult run_timing(const ExperimentConfig& cfg) {
  validate_config(cfg);
  ExperimentResult res;
  res.mode = Mode::timing;
  res.config_hash = config_hash(cfg);
  res.plot_xlabel = "k";
  const auto data = load_split(cfg.data, cfg.data.n_labeled, cfg.seeds.front());
  const std::size_t reps = std::max<std::size_t>(1, cfg.timing_repeats);
  res.summary.columns = {"config_hash", "dataset", "k", "knn_seconds", "gl_seconds", "knn_bytes_estimate",
                         "gl_bytes_estimate", "peak_rss_kb", "gl_iterations"};
  auto median_of = [](std::vector<double> v) { return median(v); };
  Series knn_s{"kNN", {}, {}}, gl_s{"GL", {}, {}};
  for (auto k : cfg.timing_k) {
    std::vector<double> tk, tg;
    std::size_t iters = 0, gl_bytes = 0;
    for (std::size_t rep = 0; rep < reps; ++rep) {
      detail::Timer t1;
      auto pk = knn_classify(data.train, data.test.points, std::min(k, data.train.size()));
      tk.push_back(t1.seconds());
      detail::Timer t2;
      const Dataset all = transductive_union(data.train, data.test);
      GraphSpec gs = cfg.graph;
      gs.k = k;
      const Graph g = build_graph(gs, all);
      const auto sol = harmonic_extend(g, all, cfg.solver);
      tg.push_back(t2.seconds());
      iters = sol.iterations;
      gl_bytes = g.row_ptr.size() * sizeof(std::size_t) + g.cols.size() * sizeof(std::size_t) +
                 g.vals.size() * sizeof(double) + 6 * all.size() * sizeof(double) + all.points.raw().size() * sizeof(double);
      (void)pk;
    }
    const std::size_t knn_bytes = data.train.points.raw().size() * sizeof(double) +
                                  data.test.size() * (k * (sizeof(double) + sizeof(std::size_t)) + sizeof(double) + sizeof(int));
    const double mk = median_of(tk), mg = median_of(tg);
    res.summary.add_row({res.config_hash, cfg.data.name, std::to_string(k), format_double(mk), format_double(mg),
                         std::to_string(knn_bytes), std::to_string(gl_bytes), std::to_string(peak_rss_kb()),
                         std::to_string(iters)});
    knn_s.x.push_back(static_cast<double>(k));
    knn_s.y.push_back(mk);
    gl_s.x.push_back(static_cast<double>(k));
    gl_s.y.push_back(mg);
  }
  res.plots.emplace_back(cfg.data.name + "_timing", std::vector<Series>{knn_s, gl_s});
  return res;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  switch (cfg.mode) {
    case Mode::certify: return run_certify_experiment(cfg);
    case Mode::robust_curve: return run_robust_curves(cfg);
    case Mode::label_sweep: return run_label_sweep(cfg);
    case Mode::timing: return run_timing(cfg);
  }
  throw ConfigError("unknown mode");
}

/// Writes config.txt, records.csv, instrumentation.csv, summary.csv,
/// calibration_*.txt and one SVG per plot into `dir`.
inline void write_outputs(const ExperimentResult& res, const ExperimentConfig& cfg, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream os(fs::path(dir) / "config.txt", std::ios::binary);
    os << "# config_hash=" << res.config_hash << '\n' << canonical_settings(cfg);
  }
  const std::string m = to_string(res.mode);
  if (res.mode != Mode::timing) {
    write_table_csv((fs::path(dir) / (m + "_records.csv")).string(), records_table(res));
    write_table_csv((fs::path(dir) / (m + "_instrumentation.csv")).string(), instrumentation_table(res));
  }
  write_table_csv((fs::path(dir) / (m + "_summary.csv")).string(), res.summary);
  for (std::size_t i = 0; i < res.calibrations.size(); ++i) {
    std::ofstream os(fs::path(dir) / ("calibration_" + std::to_string(i) + ".txt"), std::ios::binary);
    write_calibration(os, res.calibrations[i]);
  }
  for (const auto& [stem, series] : res.plots)
    write_svg_plot((fs::path(dir) / (stem + ".svg")).string(), stem, res.plot_xlabel,
                   res.mode == Mode::timing ? "seconds" : "accuracy", series);
  std::ofstream os(fs::path(dir) / "status.txt", std::ios::binary);
  os << "config_hash=" << res.config_hash << '\n'
     << "ok=" << (res.ok() ? 1 : 0) << '\n'
     << "invariant_violations=" << res.invariant_violations << '\n'
     << "calibration_ok=" << (res.calibration_ok ? 1 : 0) << '\n';
  for (const auto& e : res.errors) os << "error=" << e << '\n';
}

}  // namespace glcert
