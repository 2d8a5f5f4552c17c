#pragma once

#include <set>

#include "glcert/pipeline.hpp"

namespace glcert {

enum class DefenseKind { none, at_single, at_all, prune };

inline std::string to_string(DefenseKind k) {
  switch (k) {
    case DefenseKind::none: return "none";
    case DefenseKind::at_single: return "at_single";
    case DefenseKind::at_all: return "at_all";
    case DefenseKind::prune: return "prune";
  }
  return "?";
}

struct DefenseSpec {
  DefenseKind kind = DefenseKind::none;
  double augmentation_budget = 0.0;
  double separation_a = 0.0;

  void validate() const {
    detail::require(augmentation_budget >= 0.0, "DefenseSpec: augmentation_budget must be >= 0");
    if (kind == DefenseKind::prune) detail::require(separation_a > 0.0, "DefenseSpec: separation_a must be > 0");
  }
};

/// No a-separated subset keeps both classes. Carries the largest a found
/// (by bisection) for which one does.
class PruneInfeasible : public Error {
 public:
  PruneInfeasible(const std::string& msg, double largest_feasible_a)
      : Error(msg), largest_feasible_a(largest_feasible_a) {}
  double largest_feasible_a;
};

struct AugmentedDataset {
  Dataset data;
  std::vector<std::string> provenance;  // original | adversarial
};

/// Appends, for every labeled point and every attack, the crafted adversarial
/// with the clean label as a labeled node. Exact duplicates are dropped.
/// Attacks see the labeled training set as their reference.
inline AugmentedDataset augment_adversarial(const Dataset& train, const std::vector<AttackSpec>& attacks) {
  detail::require(!attacks.empty(), "augment_adversarial: no attacks");
  AugmentedDataset out;
  out.data = train;
  out.provenance.assign(train.size(), "original");
  const Dataset lab = train.labeled_part();

  std::set<std::vector<double>> seen;
  for (std::size_t i = 0; i < train.size(); ++i)
    if (train.labeled_mask[i]) seen.emplace(train.points[i].begin(), train.points[i].end());

  for (const auto& a : attacks) {
    AttackSpec spec = a;
    spec.scope = AttackScope::all;
    const auto pd = run_attack(spec, lab, AttackContext{&lab});
    for (std::size_t i = 0; i < lab.size(); ++i) {
      auto p = pd.perturbed.points[i];
      if (!seen.emplace(p.begin(), p.end()).second) continue;
      out.data.points.push_back(p);
      out.data.labels.push_back(lab.labels[i]);
      out.data.labeled_mask.push_back(true);
      out.provenance.push_back("adversarial");
    }
  }
  out.data.metadata["defense"] = attacks.size() == 1 ? "at_single" : "at_all";
  return out;
}

namespace detail {

// Greedy admission; returns the kept labeled indices (into `lab`).
inline std::vector<std::size_t> greedy_separated(const Dataset& lab, double a) {
  const std::size_t n = lab.size();
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < n; ++i) by_class[label_class(lab.labels[i])].push_back(i);
  const PointSet pts[2] = {lab.points.subset(by_class[0]), lab.points.subset(by_class[1])};
  const NeighborIndex index0(pts[0]), index1(pts[1]);
  const NeighborIndex* index[2] = {&index0, &index1};

  // Confidence proxy: same-class points within a (self excluded).
  std::vector<std::size_t> same(n);
  parallel_for(n, [&](std::size_t i) {
    const int c = label_class(lab.labels[i]);
    same[i] = index[c]->radius(lab.points[i], a).size() - 1;
  });
  auto order = iota_indices(n);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return same[x] > same[y]; });

  std::vector<bool> admitted_local[2] = {std::vector<bool>(by_class[0].size(), false),
                                         std::vector<bool>(by_class[1].size(), false)};
  std::vector<std::size_t> local(n);
  for (int c = 0; c < 2; ++c)
    for (std::size_t t = 0; t < by_class[c].size(); ++t) local[by_class[c][t]] = t;

  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    const int c = label_class(lab.labels[i]);
    bool ok = true;
    for (const auto& nb : index[1 - c]->radius(lab.points[i], a))
      if (admitted_local[1 - c][nb.second]) {
        ok = false;
        break;
      }
    if (!ok) continue;
    admitted_local[c][local[i]] = true;
    kept.push_back(i);
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

inline bool has_both_classes(const Dataset& lab, const std::vector<std::size_t>& kept) {
  bool seen[2] = {false, false};
  for (auto i : kept) seen[label_class(lab.labels[i])] = true;
  return seen[0] && seen[1];
}

}  // namespace detail

/// Greedy a-separated subset of the labeled points: in order of descending
/// same-class neighbour count (ties by index), a point is admitted iff it is
/// farther than a from every admitted point of the other class. Unlabeled rows
/// carry no label and pass through. Throws PruneInfeasible if a class vanishes.
inline Dataset robust_prune(const Dataset& train, double a, std::vector<std::string>* provenance = nullptr) {
  detail::require(a > 0.0 && std::isfinite(a), "robust_prune: a must be > 0");
  const auto lab_idx = train.labeled_indices();
  const Dataset lab = train.subset(lab_idx);
  auto kept = detail::greedy_separated(lab, a);
  if (!detail::has_both_classes(lab, kept)) {
    double lo = 0.0, hi = a;
    for (int it = 0; it < 50; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mid > 0.0 && detail::has_both_classes(lab, detail::greedy_separated(lab, mid)))
        lo = mid;
      else
        hi = mid;
    }
    std::ostringstream os;
    os << "robust_prune: a = " << a << " leaves a single class; largest feasible a found is " << lo;
    throw PruneInfeasible(os.str(), lo);
  }
  std::vector<bool> keep(train.size(), false);
  for (auto t : kept) keep[lab_idx[t]] = true;
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < train.size(); ++i)
    if (!train.labeled_mask[i] || keep[i]) rows.push_back(i);
  Dataset out = train.subset(rows);
  std::ostringstream os;
  os << std::setprecision(17) << a;
  out.metadata["separation_a"] = os.str();
  if (provenance) provenance->assign(rows.size(), "original");
  return out;
}

/// Smallest distance between oppositely labeled points (brute force); +inf if
/// a class is missing.
inline double min_cross_class_distance(const Dataset& ds) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (!ds.labeled_mask[i]) continue;
    for (std::size_t j = i + 1; j < ds.size(); ++j)
      if (ds.labeled_mask[j] && label_class(ds.labels[i]) != label_class(ds.labels[j]))
        best = std::min(best, distance(ds.points[i], ds.points[j]));
  }
  return best;
}

struct SeparationChoice {
  double a = 0.0;
  double accuracy = 0.0;
  std::vector<std::pair<double, double>> table;  // (a, accuracy); NaN accuracy = infeasible
};

/// Picks the a maximizing validation accuracy of the pruned classifier; ties
/// go to the larger a. `validation` is scored as queries, after the optional
/// attack (reference = unpruned training set).
inline SeparationChoice select_separation(const Dataset& train, const Dataset& validation,
                                          const std::vector<double>& a_grid, const Pipeline& pipeline,
                                          const AttackSpec* attack = nullptr) {
  detail::require(!a_grid.empty(), "select_separation: empty grid");
  Dataset queries = as_queries(validation);
  if (attack) {
    const Dataset lab = train.labeled_part();
    queries = run_attack(*attack, queries, AttackContext{&lab}).perturbed;
  }
  SeparationChoice out;
  bool any = false;
  for (double a : a_grid) {
    double acc = std::numeric_limits<double>::quiet_NaN();
    try {
      acc = evaluate(pipeline, robust_prune(train, a), queries).accuracy;
    } catch (const PruneInfeasible&) {
    } catch (const UnsolvableComponent&) {
    }
    out.table.emplace_back(a, acc);
    if (std::isnan(acc)) continue;
    if (!any || acc > out.accuracy || (acc == out.accuracy && a > out.a)) {
      out.a = a;
      out.accuracy = acc;
      any = true;
    }
  }
  if (!any) throw Error("select_separation: every grid value is infeasible");
  return out;
}

}  // namespace glcert
