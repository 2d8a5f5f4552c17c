#pragma once

#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "glcert/core.hpp"
#include "glcert/data.hpp"
#include "glcert/spatial.hpp"

namespace glcert {

enum class KernelKind { indicator, lipschitz_bump, self_tuning_gaussian };

inline std::string to_string(KernelKind k) {
  switch (k) {
    case KernelKind::indicator: return "indicator";
    case KernelKind::lipschitz_bump: return "lipschitz_bump";
    case KernelKind::self_tuning_gaussian: return "self_tuning_gaussian";
  }
  return "?";
}

inline KernelKind kernel_kind_from_string(const std::string& s) {
  if (s == "indicator") return KernelKind::indicator;
  if (s == "lipschitz_bump") return KernelKind::lipschitz_bump;
  if (s == "self_tuning_gaussian") return KernelKind::self_tuning_gaussian;
  throw InvalidArgument("unknown kernel kind '" + s + "'");
}

struct KernelSpec {
  KernelKind kind = KernelKind::indicator;
  double epsilon = 0.0;
  std::size_t dim = 0;

  /// Profile η(t).
  double eta(double t) const {
    switch (kind) {
      case KernelKind::indicator: return t <= 1.0 ? 1.0 : 0.0;
      case KernelKind::lipschitz_bump: return std::max(0.0, std::min(2.0 - t, 1.0));
      case KernelKind::self_tuning_gaussian: break;
    }
    throw InvalidArgument("eta: self_tuning_gaussian has no radial profile");
  }

  /// Support radius of η in units of t.
  double support() const { return kind == KernelKind::indicator ? 1.0 : 2.0; }
};

enum class KnnWeights { uniform_nk, self_tuning_gaussian };

inline std::string to_string(KnnWeights w) {
  return w == KnnWeights::uniform_nk ? "uniform_nk" : "self_tuning_gaussian";
}

inline KnnWeights knn_weights_from_string(const std::string& s) {
  if (s == "uniform_nk") return KnnWeights::uniform_nk;
  if (s == "self_tuning_gaussian") return KnnWeights::self_tuning_gaussian;
  throw InvalidArgument("unknown kNN weighting '" + s + "'");
}

/// Symmetric sparse weight matrix in CSR form. Rows are sorted by column.
struct Graph {
  std::size_t n = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::size_t> cols;
  std::vector<double> vals;
  std::vector<double> degrees;
  std::string kernel_kind;  // "indicator", ..., or "knn_uniform_nk" / "knn_self_tuning_gaussian"
  double param = 0.0;       // epsilon or k

  std::size_t edge_count() const { return cols.size() / 2; }

  double weight(std::size_t i, std::size_t j) const {
    auto b = cols.begin() + static_cast<std::ptrdiff_t>(row_ptr[i]);
    auto e = cols.begin() + static_cast<std::ptrdiff_t>(row_ptr[i + 1]);
    auto it = std::lower_bound(b, e, j);
    return it != e && *it == j ? vals[static_cast<std::size_t>(it - cols.begin())] : 0.0;
  }

  std::vector<double> recompute_degrees() const {
    std::vector<double> d(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t t = row_ptr[i]; t < row_ptr[i + 1]; ++t) d[i] += vals[t];
    return d;
  }
};

namespace detail {

// Builds CSR from per-row adjacency lists that are already symmetric.
inline Graph graph_from_rows(std::vector<std::vector<std::pair<std::size_t, double>>>& rows) {
  Graph g;
  g.n = rows.size();
  g.row_ptr.assign(g.n + 1, 0);
  for (std::size_t i = 0; i < g.n; ++i) {
    std::sort(rows[i].begin(), rows[i].end());
    g.row_ptr[i + 1] = g.row_ptr[i] + rows[i].size();
  }
  g.cols.reserve(g.row_ptr.back());
  g.vals.reserve(g.row_ptr.back());
  for (auto& r : rows)
    for (auto& [j, w] : r) {
      g.cols.push_back(j);
      g.vals.push_back(w);
    }
  g.degrees = g.recompute_degrees();
  return g;
}

}  // namespace detail

/// W_ij = eps^{-d} η(|x_i - x_j| / eps), i != j, zero weights omitted.
inline Graph build_epsilon_graph(const PointSet& pts, const KernelSpec& kernel) {
  detail::require(kernel.epsilon > 0.0 && std::isfinite(kernel.epsilon), "build_epsilon_graph: epsilon must be > 0");
  detail::require(kernel.kind != KernelKind::self_tuning_gaussian,
                  "build_epsilon_graph: self_tuning_gaussian is a kNN weighting");
  const std::size_t n = pts.size();
  const double d = static_cast<double>(kernel.dim ? kernel.dim : pts.dim());
  const double scale = std::pow(kernel.epsilon, -d);
  const double reach = kernel.support() * kernel.epsilon;
  NeighborIndex index(pts);
  std::vector<std::vector<std::pair<std::size_t, double>>> rows(n);
  parallel_for(n, [&](std::size_t i) {
    for (auto& [d2, j] : index.radius(pts[i], reach)) {
      if (j == i) continue;
      const double w = scale * kernel.eta(std::sqrt(d2) / kernel.epsilon);
      if (w > 0.0) rows[i].emplace_back(j, w);
    }
  });
  Graph g = detail::graph_from_rows(rows);
  g.kernel_kind = to_string(kernel.kind);
  g.param = kernel.epsilon;
  return g;
}

inline Graph build_epsilon_graph(const Dataset& ds, const KernelSpec& kernel) {
  return build_epsilon_graph(ds.points, kernel);
}

/// k nearest neighbours of every point (self excluded, ties to smaller index).
inline std::vector<std::vector<Neighbor>> knn_lists(const PointSet& pts, std::size_t k) {
  NeighborIndex index(pts);
  std::vector<std::vector<Neighbor>> out(pts.size());
  parallel_for(pts.size(), [&](std::size_t i) { out[i] = index.knn(pts[i], k, i); });
  return out;
}

/// Symmetrized kNN graph. `sigma_index` (1-based, default k) picks the
/// neighbour whose distance sets the self-tuning scale.
inline Graph build_knn_graph(const PointSet& pts, std::size_t k, KnnWeights weights, std::size_t sigma_index = 0) {
  const std::size_t n = pts.size();
  detail::require(k >= 1 && k < n, "build_knn_graph: need 1 <= k < N");
  if (sigma_index == 0) sigma_index = k;
  detail::require(sigma_index <= n - 1, "build_knn_graph: sigma_index must be < N");
  const std::size_t m = std::max(k, sigma_index);
  auto lists = knn_lists(pts, m);

  std::vector<double> sigma(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) sigma[i] = std::sqrt(lists[i][sigma_index - 1].first);

  // Union of directed kNN relations.
  std::vector<std::vector<std::size_t>> adj(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < k; ++t) {
      const std::size_t j = lists[i][t].second;
      adj[i].push_back(j);
      adj[j].push_back(i);
    }
  const double uniform = static_cast<double>(n) / static_cast<double>(k);
  std::vector<std::vector<std::pair<std::size_t, double>>> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::sort(adj[i].begin(), adj[i].end());
    adj[i].erase(std::unique(adj[i].begin(), adj[i].end()), adj[i].end());
    for (std::size_t j : adj[i]) {
      double w = uniform;
      if (weights == KnnWeights::self_tuning_gaussian) {
        // Product and distance are symmetric in (i, j), so W stays exactly symmetric.
        const double d2 = squared_distance(pts[i], pts[j]);
        const double s = std::min(sigma[i], sigma[j]) * std::max(sigma[i], sigma[j]);
        w = s > 0.0 ? std::exp(-d2 / s) : (d2 == 0.0 ? 1.0 : 0.0);
      }
      if (w > 0.0) rows[i].emplace_back(j, w);
    }
  }
  Graph g = detail::graph_from_rows(rows);
  g.kernel_kind = "knn_" + to_string(weights);
  g.param = static_cast<double>(k);
  return g;
}

inline Graph build_knn_graph(const Dataset& ds, std::size_t k, KnnWeights weights, std::size_t sigma_index = 0) {
  return build_knn_graph(ds.points, k, weights, sigma_index);
}

/// (L_N u)(x) = sum_y W_xy (u(x) - u(y)).
inline std::vector<double> graph_laplacian_apply(const Graph& g, std::span<const double> u) {
  detail::require(u.size() == g.n, "graph_laplacian_apply: length mismatch");
  std::vector<double> out(g.n);
  for (std::size_t i = 0; i < g.n; ++i) {
    double s = g.degrees[i] * u[i];
    for (std::size_t t = g.row_ptr[i]; t < g.row_ptr[i + 1]; ++t) s -= g.vals[t] * u[g.cols[t]];
    out[i] = s;
  }
  return out;
}

struct DegreeStats {
  std::vector<double> d;  // full degree
  std::vector<double> p;  // weight to labeled neighbours
};

inline DegreeStats degree_stats(const Graph& g, const Dataset& ds) {
  detail::require(ds.size() == g.n, "degree_stats: graph/dataset size mismatch");
  DegreeStats s{g.degrees, std::vector<double>(g.n, 0.0)};
  for (std::size_t i = 0; i < g.n; ++i)
    for (std::size_t t = g.row_ptr[i]; t < g.row_ptr[i + 1]; ++t)
      if (ds.labeled_mask[g.cols[t]]) s.p[i] += g.vals[t];
  return s;
}

// ---------------------------------------------------------------------------
// Kernel constants
// ---------------------------------------------------------------------------

struct KernelConstants {
  double sigma_eta = 0.0;
  double c_eta = 0.0;
  std::size_t dim = 0;
};

inline double unit_ball_volume(std::size_t d) {
  const double h = 0.5 * static_cast<double>(d);
  return std::pow(std::numbers::pi, h) / std::tgamma(h + 1.0);
}

// Surface area of the unit sphere S^{d-1}.
inline double unit_sphere_area(std::size_t d) {
  const double h = 0.5 * static_cast<double>(d);
  return 2.0 * std::pow(std::numbers::pi, h) / std::tgamma(h);
}

namespace detail {

template <class F>
double simpson_rec(const F& f, double a, double b, double fa, double fm, double fb, double whole, double tol,
                   int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

/// Adaptive Simpson quadrature on [a, b].
template <class F>
double adaptive_simpson(const F& f, double a, double b, double tol = 1e-12, int max_depth = 40) {
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return detail::simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

/// C_η = ∫ η(|z|) dz and σ_η = ∫ η(|z|) z_1² dz over B(0,2).
inline KernelConstants kernel_constants(const KernelSpec& kernel) {
  detail::require(kernel.kind != KernelKind::self_tuning_gaussian,
                  "kernel_constants: self_tuning_gaussian is not a compactly supported radial kernel");
  detail::require(kernel.dim >= 1, "kernel_constants: dim must be positive");
  const std::size_t d = kernel.dim;
  const double dd = static_cast<double>(d);
  KernelConstants k{0.0, 0.0, d};
  if (kernel.kind == KernelKind::indicator) {
    k.c_eta = unit_ball_volume(d);
    k.sigma_eta = k.c_eta / (dd + 2.0);
    return k;
  }
  const double area = unit_sphere_area(d);
  // Split at the kink t = 1 so Simpson sees smooth pieces.
  auto radial = [&](double p) {
    auto f = [&](double t) { return kernel.eta(t) * std::pow(t, p); };
    return adaptive_simpson(f, 0.0, 1.0) + adaptive_simpson(f, 1.0, 2.0);
  };
  k.c_eta = area * radial(dd - 1.0);
  k.sigma_eta = area / dd * radial(dd + 1.0);
  return k;
}

// ---------------------------------------------------------------------------
// Continuum operator  Lφ = (σ_η/ρ) div(ρ² ∇φ) = σ_η (2 ∇ρ·∇φ + ρ Δφ)
// ---------------------------------------------------------------------------

/// A scalar field with analytic first derivatives and Laplacian.
struct SmoothField {
  std::function<double(std::span<const double>)> value;
  std::function<std::vector<double>(std::span<const double>)> gradient;
  std::function<double(std::span<const double>)> laplacian;
};

inline SmoothField constant_field(double c, std::size_t dim) {
  return {[c](std::span<const double>) { return c; },
          [dim](std::span<const double>) { return std::vector<double>(dim, 0.0); },
          [](std::span<const double>) { return 0.0; }};
}

inline double continuum_operator(const SmoothField& phi, const SmoothField& rho, double sigma_eta,
                                 std::span<const double> x) {
  const double r = rho.value(x);
  detail::require(r > 0.0, "continuum_operator: density must be positive at x");
  const auto gp = phi.gradient(x);
  const auto gr = rho.gradient(x);
  double dot = 0.0;
  for (std::size_t j = 0; j < gp.size(); ++j) dot += gp[j] * gr[j];
  return sigma_eta * (2.0 * dot + r * phi.laplacian(x));
}

/// -(2 / (N ε²)) L_N u; converges to Lφ at interior nodes.
inline std::vector<double> scaled_graph_operator(const Graph& g, std::span<const double> u, double epsilon) {
  auto lu = graph_laplacian_apply(g, u);
  const double s = -2.0 / (static_cast<double>(g.n) * epsilon * epsilon);
  for (double& v : lu) v *= s;
  return lu;
}

/// Distance from x to the boundary of [0,1]^d.
inline double distance_to_unit_cube_boundary(std::span<const double> x) {
  double m = std::numeric_limits<double>::infinity();
  for (double v : x) m = std::min({m, v, 1.0 - v});
  return m;
}

inline std::vector<bool> interior_mask(const PointSet& pts, double margin) {
  std::vector<bool> mask(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) mask[i] = distance_to_unit_cube_boundary(pts[i]) > margin;
  return mask;
}

/// Number of other points within distance r of each point.
inline std::vector<std::size_t> ball_counts(const PointSet& pts, double r) {
  NeighborIndex index(pts);
  std::vector<std::size_t> out(pts.size());
  parallel_for(pts.size(), [&](std::size_t i) { out[i] = index.radius(pts[i], r).size() - 1; });
  return out;
}

// ---------------------------------------------------------------------------
// Edge-list IO: header "n kernel_kind param", then "i j w" with i < j.
// ---------------------------------------------------------------------------

inline void write_edge_list(std::ostream& os, const Graph& g) {
  os << std::setprecision(17) << g.n << ' ' << (g.kernel_kind.empty() ? "none" : g.kernel_kind) << ' ' << g.param
     << '\n';
  for (std::size_t i = 0; i < g.n; ++i)
    for (std::size_t t = g.row_ptr[i]; t < g.row_ptr[i + 1]; ++t)
      if (g.cols[t] > i) os << i << ' ' << g.cols[t] << ' ' << g.vals[t] << '\n';
}

inline void write_edge_list(const std::string& path, const Graph& g) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write '" + path + "'");
  write_edge_list(os, g);
}

inline Graph read_edge_list(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw LoadError("read_edge_list: missing header");
  std::istringstream hs(header);
  std::size_t n = 0;
  std::string kind;
  double param = 0.0;
  if (!(hs >> n >> kind >> param)) throw LoadError("read_edge_list: malformed header");
  std::vector<std::vector<std::pair<std::size_t, double>>> rows(n);
  std::size_t i = 0, j = 0;
  double w = 0.0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    if (!(ls >> i >> j >> w)) throw LoadError("read_edge_list: malformed edge line");
    if (i >= j || j >= n) throw LoadError("read_edge_list: edge indices must satisfy i < j < n");
    if (!(w >= 0.0) || !std::isfinite(w)) throw LoadError("read_edge_list: weights must be finite and >= 0");
    rows[i].emplace_back(j, w);
    rows[j].emplace_back(i, w);
  }
  Graph g = detail::graph_from_rows(rows);
  g.kernel_kind = kind;
  g.param = param;
  return g;
}

inline Graph read_edge_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("read_edge_list: cannot open '" + path + "'");
  return read_edge_list(in);
}

}  // namespace glcert
