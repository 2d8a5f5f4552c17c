#pragma once

// Dense reference solver for the harmonic extension. Requires Eigen.

#include <Eigen/Dense>

#include "glcert/solve.hpp"

namespace glcert {

inline constexpr std::size_t kDenseOracleMaxN = 2000;

inline HarmonicSolution dense_oracle_solve(const Graph& g, const Dataset& ds) {
  detail::require(g.n <= kDenseOracleMaxN, "dense_oracle_solve: N > 2000");
  detail::check_inputs(g, ds);
  detail::check_components(g, ds.labeled_mask);
  const auto p = detail::partition(ds);
  const std::size_t m = p.interior.size();
  const auto rhs = detail::boundary_rhs(g, ds, p);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  Eigen::VectorXd b(static_cast<Eigen::Index>(m));
  for (std::size_t r = 0; r < m; ++r) {
    const std::size_t i = p.interior[r];
    const auto ri = static_cast<Eigen::Index>(r);
    a(ri, ri) = g.degrees[i];
    b(ri) = rhs[r];
    for (std::size_t t = g.row_ptr[i]; t < g.row_ptr[i + 1]; ++t) {
      const std::size_t c = p.local[g.cols[t]];
      if (c != detail::Partition::npos) a(ri, static_cast<Eigen::Index>(c)) -= g.vals[t];
    }
  }
  std::vector<double> x(m, 0.0);
  if (m > 0) {
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) throw Error("dense_oracle_solve: singular block");
    Eigen::VectorXd sol = llt.solve(b);
    for (std::size_t r = 0; r < m; ++r) x[r] = sol(static_cast<Eigen::Index>(r));
  }
  auto out = detail::assemble(ds, p, x);
  out.solver = SolverKind::dense;
  out.rhs_norm = std::sqrt(detail::dot(rhs, rhs));
  out.residual_norm = block_residual(g, ds, out.u);
  return out;
}

}  // namespace glcert
