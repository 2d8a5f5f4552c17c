#pragma once

#include <fstream>
#include <iomanip>
#include <sstream>

#include "glcert/solve.hpp"

namespace glcert {

struct CertInputs {
  std::size_t n_total = 0;    // N
  std::size_t n_labeled = 0;  // N - M
  std::size_t dim = 0;        // d
  double epsilon = 0.0;
  double c_small = 1.0;     // c in r_max = c sqrt(beta) eps
  double c_big = 1.0;       // C in k_min and delta
  double c_boundary = 1.0;  // C0 in the boundary margin
};

struct CertBounds {
  std::size_t k_min = 0;
  double r_max = 0.0;
  double delta = 0.0;
  double prob_proxy = 0.0;  // N exp(-N beta eps^d); relative indicator, not a probability
  double log_prob_proxy = 0.0;  // log N - N beta eps^d, finite where prob_proxy underflows
  double boundary_margin = 0.0;
  double beta = 0.0;
  double epsilon = 0.0;
  std::vector<std::string> violations;  // failed hypotheses (k-form route only)

  friend bool operator==(const CertBounds&, const CertBounds&) = default;
};

/// ε matching k neighbours on average: (k/N)^{1/d}.
inline double epsilon_from_k(std::size_t k, std::size_t n, std::size_t d) {
  return std::pow(static_cast<double>(k) / static_cast<double>(n), 1.0 / static_cast<double>(d));
}

/// ε = (log N / (N - M))^{1/d}, the substitution that gives the k-form of the bounds.
inline double k_form_epsilon(std::size_t n_total, std::size_t n_labeled, std::size_t d) {
  return std::pow(std::log(static_cast<double>(n_total)) / static_cast<double>(n_labeled), 1.0 / static_cast<double>(d));
}

namespace detail {

inline void check_cert_inputs(const CertInputs& in) {
  detail::require(in.n_labeled >= 1 && in.n_labeled <= in.n_total, "certified_bounds: need 0 < N-M <= N");
  detail::require(in.dim >= 1, "certified_bounds: dim must be positive");
  detail::require(in.epsilon > 0.0 && in.epsilon < 1.0, "certified_bounds: epsilon must lie in (0,1)");
  detail::require(in.c_small >= 0.0 && in.c_big >= 0.0 && in.c_boundary >= 0.0,
                  "certified_bounds: constants must be >= 0");
}

inline CertBounds evaluate_bounds(const CertInputs& in) {
  const double n = static_cast<double>(in.n_total);
  const double nl = static_cast<double>(in.n_labeled);
  CertBounds b;
  b.beta = nl / n;
  b.epsilon = in.epsilon;
  const double sb = std::sqrt(b.beta);
  // Guard against ceil(integer + rounding noise).
  const double kval = in.c_big * n * std::log(n) / nl;
  b.k_min = static_cast<std::size_t>(std::ceil(kval - 1e-9 * std::max(1.0, kval)));
  b.r_max = in.c_small * sb * in.epsilon;
  const double lg = sb > in.epsilon ? std::log(sb / in.epsilon) : 0.0;
  b.delta = in.c_big * in.epsilon / sb * lg;
  b.boundary_margin = in.c_boundary * in.epsilon / sb * lg;
  b.log_prob_proxy = std::log(n) - n * b.beta * std::pow(in.epsilon, static_cast<double>(in.dim));
  b.prob_proxy = std::exp(b.log_prob_proxy);
  return b;
}

}  // namespace detail

/// k_min, r_max, δ, probability proxy and boundary margin. Throws
/// HypothesisViolation when β < ε².
inline CertBounds certified_bounds(const CertInputs& in) {
  detail::check_cert_inputs(in);
  const double beta = static_cast<double>(in.n_labeled) / static_cast<double>(in.n_total);
  if (beta < in.epsilon * in.epsilon * (1.0 - 1e-12)) {
    std::ostringstream os;
    os << std::setprecision(6) << "certified_bounds: hypothesis beta >= eps^2 fails (beta = " << beta
       << ", eps^2 = " << in.epsilon * in.epsilon << ")";
    throw HypothesisViolation(os.str());
  }
  return detail::evaluate_bounds(in);
}

/// Bounds in terms of (N, N - M) only, with ε = (log N / (N - M))^{1/d}.
/// A failed β >= ε² hypothesis is listed in `violations` instead of thrown,
/// since the k form is what calibration reports for every row.
inline CertBounds certified_bounds_k_form(std::size_t n_total, std::size_t n_labeled, std::size_t dim,
                                          double c_small, double c_big, double c_boundary = 1.0) {
  detail::require(n_labeled >= 1 && n_labeled <= n_total && n_total >= 2, "certified_bounds_k_form: bad sizes");
  detail::require(dim >= 1, "certified_bounds_k_form: dim must be positive");
  CertInputs in{n_total, n_labeled, dim, k_form_epsilon(n_total, n_labeled, dim), c_small, c_big, c_boundary};
  detail::require(in.c_small >= 0.0 && in.c_big >= 0.0, "certified_bounds_k_form: constants must be >= 0");
  auto b = detail::evaluate_bounds(in);
  if (b.beta < in.epsilon * in.epsilon * (1.0 - 1e-12)) {
    std::ostringstream os;
    os << std::setprecision(6) << "beta >= eps^2 fails (beta = " << b.beta << ", eps^2 = " << in.epsilon * in.epsilon
       << ")";
    b.violations.push_back(os.str());
  }
  if (in.epsilon >= 1.0) b.violations.push_back("eps < 1 fails");
  return b;
}

// ---------------------------------------------------------------------------
// Calibration of (c, C) by grid search
// ---------------------------------------------------------------------------

struct CalibrationGrid {
  std::vector<double> c_small;
  std::vector<double> c_big;
};

/// Accuracies per seed: clean and one vector per attack.
struct CandidateAccuracies {
  std::vector<double> clean;
  std::vector<std::vector<double>> attacks;
};

struct CandidateResult {
  double c_small = 0.0;
  double c_big = 0.0;
  CertBounds bounds;
  double clean_mean = 0.0;
  double clean_std = 0.0;
  std::vector<double> attack_means;
  double spread = 0.0;  // max - min over {clean mean, attack means}
  double band = 0.0;    // allowed spread
  bool feasible = false;
};

struct CalibrationResult {
  bool ok = false;
  double c_small = 0.0;
  double c_big = 0.0;
  std::size_t chosen = 0;          // index into table (best infeasible when !ok)
  std::vector<CandidateResult> table;
  std::string rule;
  std::string dataset;
  std::uint64_t subset_seed = 0;
};

/// Maps candidate bounds to accuracies measured on the calibration subset.
using CandidateEvaluator = std::function<CandidateAccuracies(const CertBounds&)>;

/// Feasible iff max - min over {clean mean, attack means} <= max(2 std(clean), band_floor).
/// Among feasible pairs, the largest r_max wins; ties go to the larger k_min.
inline CalibrationResult calibrate_constants(std::size_t n_total, std::size_t n_labeled, std::size_t dim,
                                             const CalibrationGrid& grid, const CandidateEvaluator& evaluate,
                                             double band_floor = 0.0) {
  detail::require(!grid.c_small.empty() && !grid.c_big.empty(), "calibrate_constants: empty grid");
  CalibrationResult res;
  std::ostringstream rule;
  rule << "feasible iff max-min over {clean mean, attack means} <= max(2*std(clean over seeds), " << band_floor
       << "); maximize r_max, ties -> larger k_min";
  res.rule = rule.str();
  for (double cs : grid.c_small)
    for (double cb : grid.c_big) {
      CandidateResult cand;
      cand.c_small = cs;
      cand.c_big = cb;
      cand.bounds = certified_bounds_k_form(n_total, n_labeled, dim, cs, cb);
      auto acc = evaluate(cand.bounds);
      detail::require(!acc.clean.empty(), "calibrate_constants: evaluator returned no seeds");
      cand.clean_mean = mean(acc.clean);
      cand.clean_std = stddev(acc.clean);
      double lo = cand.clean_mean, hi = cand.clean_mean;
      for (const auto& a : acc.attacks) {
        cand.attack_means.push_back(mean(a));
        lo = std::min(lo, cand.attack_means.back());
        hi = std::max(hi, cand.attack_means.back());
      }
      cand.spread = hi - lo;
      cand.band = std::max(2.0 * cand.clean_std, band_floor);
      cand.feasible = cand.spread <= cand.band;
      res.table.push_back(std::move(cand));
    }
  bool found = false;
  for (std::size_t i = 0; i < res.table.size(); ++i) {
    const auto& c = res.table[i];
    if (!c.feasible) continue;
    const auto& best = res.table[res.chosen];
    if (!found || c.bounds.r_max > best.bounds.r_max ||
        (c.bounds.r_max == best.bounds.r_max && c.bounds.k_min > best.bounds.k_min)) {
      res.chosen = i;
      found = true;
    }
  }
  if (!found) {
    // Report the candidate closest to feasibility.
    double best_ratio = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < res.table.size(); ++i) {
      const auto& c = res.table[i];
      const double ratio = c.band > 0.0 ? c.spread / c.band : std::numeric_limits<double>::max();
      if (ratio < best_ratio) {
        best_ratio = ratio;
        res.chosen = i;
      }
    }
  }
  res.ok = found;
  res.c_small = res.table[res.chosen].c_small;
  res.c_big = res.table[res.chosen].c_big;
  return res;
}

inline void write_calibration(std::ostream& os, const CalibrationResult& r) {
  os << std::setprecision(17);
  os << "dataset=" << r.dataset << '\n'
     << "subset_seed=" << r.subset_seed << '\n'
     << "ok=" << (r.ok ? 1 : 0) << '\n'
     << "c_small=" << r.c_small << '\n'
     << "c_big=" << r.c_big << '\n'
     << "rule=" << r.rule << '\n'
     << "candidates=" << r.table.size() << '\n'
     << "c_small,c_big,k_min,r_max,clean_mean,clean_std,spread,band,feasible,attack_means\n";
  for (const auto& c : r.table) {
    os << c.c_small << ',' << c.c_big << ',' << c.bounds.k_min << ',' << c.bounds.r_max << ',' << c.clean_mean << ','
       << c.clean_std << ',' << c.spread << ',' << c.band << ',' << (c.feasible ? 1 : 0) << ',';
    for (std::size_t a = 0; a < c.attack_means.size(); ++a) os << (a ? ";" : "") << c.attack_means[a];
    os << '\n';
  }
}

inline void write_calibration(const std::string& path, const CalibrationResult& r) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write '" + path + "'");
  write_calibration(os, r);
}

/// Reads the chosen constants and metadata back (the table is informational).
inline CalibrationResult read_calibration(std::istream& is) {
  CalibrationResult r;
  std::string line;
  std::map<std::string, std::string> kv;
  while (std::getline(is, line)) {
    if (line.rfind("c_small,c_big", 0) == 0) break;
    auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  for (const char* key : {"dataset", "ok", "c_small", "c_big"})
    if (!kv.count(key)) throw LoadError(std::string("read_calibration: missing '") + key + "'");
  r.dataset = kv["dataset"];
  r.ok = kv["ok"] == "1";
  r.c_small = std::strtod(kv["c_small"].c_str(), nullptr);
  r.c_big = std::strtod(kv["c_big"].c_str(), nullptr);
  r.rule = kv["rule"];
  r.subset_seed = kv.count("subset_seed") ? std::stoull(kv["subset_seed"]) : 0;
  return r;
}

inline CalibrationResult read_calibration(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw LoadError("read_calibration: cannot open '" + path + "'");
  return read_calibration(is);
}

// ---------------------------------------------------------------------------
// Empirical checks
// ---------------------------------------------------------------------------

/// Largest r in the ascending grid such that every budget up to it keeps the
/// worst deviation <= delta. `max_deviation(r)` returns the sup over attacks and
/// test nodes of |u(x) - u(x̂)|. An attack-based estimate, so an upper estimate of
/// the true radius.
inline double empirical_robustness_radius(const std::function<double(double)>& max_deviation, double delta,
                                          std::span<const double> r_grid) {
  detail::require(!r_grid.empty(), "empirical_robustness_radius: empty grid");
  for (std::size_t i = 0; i < r_grid.size(); ++i) {
    detail::require(r_grid[i] > 0.0, "empirical_robustness_radius: grid must be positive");
    if (i) detail::require(r_grid[i] > r_grid[i - 1], "empirical_robustness_radius: grid must be ascending");
  }
  double best = 0.0;
  for (double r : r_grid) {
    if (!(max_deviation(r) <= delta)) break;
    best = r;
  }
  return best;
}

struct BoundCheckReport {
  double max_error = 0.0;
  double fraction_exceeding = 0.0;
  std::size_t nodes = 0;
};

/// max over masked nodes of |u_hat(i) - ell(i)| and the fraction above delta.
inline BoundCheckReport check_certified_bound(std::span<const double> u_hat, std::span<const double> ell,
                                         const std::vector<bool>& mask, double delta) {
  detail::require(u_hat.size() == ell.size() && mask.size() == ell.size(), "check_certified_bound: length mismatch");
  BoundCheckReport rep;
  std::size_t above = 0;
  for (std::size_t i = 0; i < ell.size(); ++i) {
    if (!mask[i]) continue;
    ++rep.nodes;
    const double e = std::abs(u_hat[i] - ell[i]);
    rep.max_error = std::max(rep.max_error, e);
    if (e > delta) ++above;
  }
  rep.fraction_exceeding = rep.nodes ? static_cast<double>(above) / static_cast<double>(rep.nodes) : 0.0;
  return rep;
}

/// Nodes with |u - 1/2| > 2 delta; their class is certified under budgets <= r_max.
inline std::vector<std::size_t> margin_robust_set(std::span<const double> u, double delta) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < u.size(); ++i)
    if (std::abs(u[i] - 0.5) > 2.0 * delta) out.push_back(i);
  return out;
}

}  // namespace glcert
