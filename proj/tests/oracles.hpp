#pragma once

// Independent reference implementations used only by tests.

#include <algorithm>
#include <cmath>
#include <vector>

#include "glcert/core.hpp"

namespace oracle {

using glcert::PointSet;

// Sorts every other point by (distance, index) and keeps the first k.
inline std::vector<std::size_t> knn_by_sort(const PointSet& pts, std::size_t i, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t j = 0; j < pts.size(); ++j) {
    if (j == i) continue;
    double s = 0.0;
    for (std::size_t c = 0; c < pts.dim(); ++c) s += (pts[i][c] - pts[j][c]) * (pts[i][c] - pts[j][c]);
    all.emplace_back(s, j);
  }
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < k; ++t) out.push_back(all[t].second);
  return out;
}

// Dense n x n matrix, row-major.
struct Dense {
  std::size_t n;
  std::vector<double> a;
  double& operator()(std::size_t i, std::size_t j) { return a[i * n + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a[i * n + j]; }
};

inline std::vector<double> laplacian_times(const Dense& w, const std::vector<double>& u) {
  std::vector<double> out(w.n, 0.0);
  for (std::size_t i = 0; i < w.n; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < w.n; ++j) deg += w(i, j);
    out[i] = deg * u[i];
    for (std::size_t j = 0; j < w.n; ++j) out[i] -= w(i, j) * u[j];
  }
  return out;
}

// Gaussian elimination with partial pivoting; solves A x = b in place.
inline std::vector<double> gauss_solve(Dense a, std::vector<double> b) {
  const std::size_t n = a.n;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a(r, c)) > std::abs(a(p, c))) p = r;
    for (std::size_t j = 0; j < n; ++j) std::swap(a(c, j), a(p, j));
    std::swap(b[c], b[p]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a(r, c) / a(c, c);
      for (std::size_t j = c; j < n; ++j) a(r, j) -= f * a(c, j);
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= a(i, j) * x[j];
    x[i] = s / a(i, i);
  }
  return x;
}

// Midpoint rule on a fine grid, for radial integrals of piecewise-linear profiles.
template <class F>
double midpoint(const F& f, double a, double b, std::size_t steps = 2000000) {
  const double h = (b - a) / static_cast<double>(steps);
  double s = 0.0;
  for (std::size_t i = 0; i < steps; ++i) s += f(a + (static_cast<double>(i) + 0.5) * h);
  return s * h;
}

}  // namespace oracle
