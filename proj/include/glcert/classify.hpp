#pragma once

#include <fstream>
#include <iomanip>
#include <optional>

#include "glcert/solve.hpp"

namespace glcert {

struct Prediction {
  std::vector<int> classes;
  std::vector<double> scores;  // u for GL, fraction of class-1 votes for kNN
};

/// Class 1 iff u >= 1/2.
inline Prediction gl_classify(const HarmonicSolution& sol) {
  Prediction p;
  p.scores = sol.u;
  p.classes.reserve(sol.u.size());
  for (double v : sol.u) p.classes.push_back(label_class(v));
  return p;
}

/// Majority vote over the k nearest labeled training points. Split votes go to class 1.
inline Prediction knn_classify(const Dataset& train, const PointSet& queries, std::size_t k) {
  const Dataset lab = train.labeled_part();
  if (lab.size() == 0) throw InvalidArgument("knn_classify: no labeled training points");
  detail::require(k >= 1 && k <= lab.size(), "knn_classify: need 1 <= k <= #labeled");
  detail::require(queries.size() == 0 || queries.dim() == lab.dim(), "knn_classify: dimension mismatch");
  NeighborIndex index(lab.points);
  Prediction p;
  p.classes.resize(queries.size());
  p.scores.resize(queries.size());
  parallel_for(queries.size(), [&](std::size_t q) {
    std::size_t ones = 0;
    for (auto& [d2, j] : index.knn(queries[q], k)) ones += static_cast<std::size_t>(label_class(lab.labels[j]));
    p.scores[q] = static_cast<double>(ones) / static_cast<double>(k);
    p.classes[q] = 2 * ones >= k ? 1 : 0;
  });
  return p;
}

/// Fraction of (masked) indices whose class matches the truth.
inline double accuracy(const Prediction& pred, std::span<const double> truth,
                       const std::vector<bool>* mask = nullptr) {
  detail::require(pred.classes.size() == truth.size(), "accuracy: length mismatch");
  detail::require(!mask || mask->size() == truth.size(), "accuracy: mask length mismatch");
  std::size_t total = 0, right = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (mask && !(*mask)[i]) continue;
    ++total;
    if (pred.classes[i] == label_class(truth[i])) ++right;
  }
  detail::require(total > 0, "accuracy: empty evaluation set");
  return static_cast<double>(right) / static_cast<double>(total);
}

inline void write_prediction_csv(std::ostream& os, const Prediction& p) {
  os << "index,class,score\n" << std::setprecision(17);
  for (std::size_t i = 0; i < p.classes.size(); ++i) os << i << ',' << p.classes[i] << ',' << p.scores[i] << '\n';
}

inline void write_prediction_csv(const std::string& path, const Prediction& p) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write '" + path + "'");
  write_prediction_csv(os, p);
}

}  // namespace glcert
