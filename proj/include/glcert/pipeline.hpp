#pragma once

#include "glcert/attack.hpp"
#include "glcert/classify.hpp"

namespace glcert {

enum class ClassifierFamily { gl, knn };

inline std::string to_string(ClassifierFamily f) { return f == ClassifierFamily::gl ? "gl" : "knn"; }

struct GraphSpec {
  enum class Type { knn, epsilon } type = Type::knn;
  std::size_t k = 10;
  KnnWeights weights = KnnWeights::self_tuning_gaussian;
  std::size_t sigma_index = 0;
  KernelSpec kernel{};  // epsilon graphs only
};

inline Graph build_graph(const GraphSpec& spec, const Dataset& ds) {
  if (spec.type == GraphSpec::Type::epsilon) {
    KernelSpec ks = spec.kernel;
    ks.dim = ds.dim();
    return build_epsilon_graph(ds, ks);
  }
  return build_knn_graph(ds, spec.k, spec.weights, spec.sigma_index);
}

/// A classifier that sees labeled training rows and classifies query rows.
struct Pipeline {
  ClassifierFamily family = ClassifierFamily::gl;
  GraphSpec graph{};
  std::size_t knn_k = 13;  // vote size of the kNN family
  SolverConfig solver{};
};

struct EvalResult {
  Prediction pred;  // one entry per query
  double accuracy = 0.0;
  std::size_t iterations = 0;
  double residual = 0.0;       // relative block residual of the GL solve
  double max_principle = 0.0;  // largest excursion outside the label range
  bool invariants_ok = true;
};

/// Same rows with every label hidden (ground truth kept for scoring).
inline Dataset as_queries(Dataset ds) {
  ds.labeled_mask.assign(ds.size(), false);
  return ds;
}

/// Classify `queries` with a classifier built from the labeled part of `train`.
/// GL is transductive: queries join the graph as unlabeled nodes.
inline EvalResult evaluate(const Pipeline& p, const Dataset& train, const Dataset& queries) {
  detail::require(queries.size() >= 1, "evaluate: no queries");
  EvalResult out;
  const Dataset lab = train.labeled_part();
  if (p.family == ClassifierFamily::knn) {
    out.pred = knn_classify(lab, queries.points, std::min(p.knn_k, lab.size()));
  } else {
    const Dataset all = transductive_union(lab, queries);
    const Graph g = build_graph(p.graph, all);
    const auto sol = harmonic_extend(g, all, p.solver);
    out.iterations = sol.iterations;
    out.residual = sol.rhs_norm > 0.0 ? sol.residual_norm / sol.rhs_norm : sol.residual_norm;
    const auto mp = check_maximum_principle(sol, all);
    out.max_principle = std::max(mp.above, mp.below);
    out.invariants_ok = mp.ok(1e-8) && out.residual <= std::max(1e-8, 10.0 * p.solver.tol);
    const auto full = gl_classify(sol);
    out.pred.classes.assign(full.classes.begin() + static_cast<std::ptrdiff_t>(lab.size()), full.classes.end());
    out.pred.scores.assign(full.scores.begin() + static_cast<std::ptrdiff_t>(lab.size()), full.scores.end());
  }
  out.accuracy = accuracy(out.pred, queries.labels);
  return out;
}

/// Victim oracle for black-box substitute training: the pipeline trained on
/// `train`, queried one batch at a time.
inline LabelOracle make_victim_oracle(const Pipeline& p, const Dataset& train) {
  return [p, train](const PointSet& pts) {
    Dataset q;
    q.points = pts;
    q.labels.assign(pts.size(), 0.0);
    q.labeled_mask.assign(pts.size(), false);
    return evaluate(p, train, q).pred.classes;
  };
}

}  // namespace glcert
