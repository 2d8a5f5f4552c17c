#pragma once

#include <fstream>
#include <iomanip>
#include <memory>

#include "glcert/models.hpp"
#include "glcert/spatial.hpp"

namespace glcert {

enum class AttackKind { direct, ksa, bb_lr, bb_nn, bb_kernel };

inline std::string to_string(AttackKind k) {
  switch (k) {
    case AttackKind::direct: return "direct";
    case AttackKind::ksa: return "ksa";
    case AttackKind::bb_lr: return "bb_lr";
    case AttackKind::bb_nn: return "bb_nn";
    case AttackKind::bb_kernel: return "bb_kernel";
  }
  return "?";
}

inline AttackKind attack_kind_from_string(const std::string& s) {
  if (s == "direct" || s == "da") return AttackKind::direct;
  if (s == "ksa") return AttackKind::ksa;
  if (s == "bb_lr") return AttackKind::bb_lr;
  if (s == "bb_nn") return AttackKind::bb_nn;
  if (s == "bb_kernel") return AttackKind::bb_kernel;
  throw InvalidArgument("unknown attack kind '" + s + "'");
}

inline constexpr AttackKind kAllAttacks[] = {AttackKind::direct, AttackKind::ksa, AttackKind::bb_lr,
                                             AttackKind::bb_nn, AttackKind::bb_kernel};

/// paper: move away from the nearest oppositely labeled point, x + r (x - x')/|x - x'|.
/// toward_opponent: the negated direction.
enum class DirectionSign { paper, toward_opponent };

enum class AttackScope { unlabeled, all };

struct AttackSpec {
  AttackKind kind = AttackKind::direct;
  double budget_r = 0.0;
  std::shared_ptr<const SurrogateModel> surrogate;
  std::uint64_t seed = 0;
  DirectionSign direction_sign = DirectionSign::paper;
  AttackScope scope = AttackScope::unlabeled;
  std::map<std::string, std::string> provenance;  // surrogate seed, rounds, queries
};

struct PerturbedDataset {
  Dataset original;
  Dataset perturbed;  // same labels and mask, moved points
  std::vector<double> per_point_shift;
  std::map<std::string, std::string> metadata;
};

/// Unit (or zero) perturbation directions per point; the budget only scales them.
struct AttackDirections {
  std::vector<std::vector<double>> dirs;
  std::map<std::string, std::string> metadata;
};

namespace detail {

inline bool in_scope(const Dataset& ds, std::size_t i, AttackScope scope) {
  return scope == AttackScope::all || !ds.labeled_mask[i];
}

}  // namespace detail

/// Directions of the direct attack against `reference` (labeled points).
inline AttackDirections direct_attack_directions(const Dataset& ds, const Dataset& reference, const AttackSpec& spec) {
  const Dataset ref = reference.labeled_part();
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < ref.size(); ++i) by_class[label_class(ref.labels[i])].push_back(i);
  if (by_class[0].empty() || by_class[1].empty())
    throw InvalidArgument("direct_attack: reference set must contain both classes");
  detail::require(ref.dim() == ds.dim(), "direct_attack: dimension mismatch");
  const PointSet class_pts[2] = {ref.points.subset(by_class[0]), ref.points.subset(by_class[1])};
  const NeighborIndex index0(class_pts[0]), index1(class_pts[1]);
  const NeighborIndex* index[2] = {&index0, &index1};

  AttackDirections out;
  out.dirs.assign(ds.size(), {});
  const double sgn = spec.direction_sign == DirectionSign::paper ? 1.0 : -1.0;
  parallel_for(ds.size(), [&](std::size_t i) {
    if (!detail::in_scope(ds, i, spec.scope)) return;
    const int opp = 1 - label_class(ds.labels[i]);
    auto nn = index[opp]->knn(ds.points[i], 1);
    auto x = ds.points[i];
    auto xp = class_pts[opp][nn[0].second];
    std::vector<double> d(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) d[j] = x[j] - xp[j];
    const double len = norm2(d);
    if (len == 0.0) {
      Rng rng(mix_seed(spec.seed, i));
      d = random_unit_vector(x.size(), rng);
    } else {
      for (auto& v : d) v = sgn * v / len;
    }
    out.dirs[i] = std::move(d);
  });
  out.metadata["attack"] = "direct";
  out.metadata["direction_sign"] = spec.direction_sign == DirectionSign::paper ? "paper" : "toward_opponent";
  return out;
}

/// sign(∇_x loss(x, y)) normalized to unit ℓ2 norm; all-zero sign leaves the point alone.
inline AttackDirections fgsm_directions(const Dataset& ds, const AttackSpec& spec) {
  if (!spec.surrogate) throw ConfigError("fgsm_l2: attack '" + to_string(spec.kind) + "' has no surrogate");
  detail::require(spec.surrogate->input_dim == ds.dim(), "fgsm_l2: surrogate dimension mismatch");
  AttackDirections out;
  out.dirs.assign(ds.size(), {});
  parallel_for(ds.size(), [&](std::size_t i) {
    if (!detail::in_scope(ds, i, spec.scope)) return;
    auto g = spec.surrogate->gradient_wrt_input(ds.points[i], ds.labels[i]);
    std::size_t nz = 0;
    for (auto& v : g) {
      v = static_cast<double>((v > 0) - (v < 0));
      nz += v != 0.0;
    }
    if (nz == 0) {
      out.dirs[i].assign(g.size(), 0.0);
      return;
    }
    const double inv = 1.0 / std::sqrt(static_cast<double>(nz));
    for (auto& v : g) v *= inv;
    out.dirs[i] = std::move(g);
  });
  out.metadata["attack"] = to_string(spec.kind);
  for (const auto& [k, v] : spec.provenance) out.metadata["surrogate_" + k] = v;
  return out;
}

/// x̂ = x + r·dir for points in scope. Shifts are measured, not assumed.
inline PerturbedDataset apply_directions(const Dataset& ds, const AttackDirections& dirs, double r) {
  detail::require(r >= 0.0 && std::isfinite(r), "attack: budget must be >= 0");
  PerturbedDataset out;
  out.original = ds;
  out.perturbed = ds;
  out.per_point_shift.assign(ds.size(), 0.0);
  out.metadata = dirs.metadata;
  if (r == 0.0) return out;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& d = dirs.dirs[i];
    if (d.empty()) continue;
    auto p = out.perturbed.points[i];
    for (std::size_t j = 0; j < p.size(); ++j) p[j] += r * d[j];
    out.per_point_shift[i] = distance(p, ds.points[i]);
  }
  return out;
}

inline PerturbedDataset direct_attack(const Dataset& ds, const Dataset& reference, const AttackSpec& spec) {
  auto out = apply_directions(ds, direct_attack_directions(ds, reference, spec), spec.budget_r);
  std::ostringstream os;
  os << std::setprecision(17) << spec.budget_r;
  out.metadata["budget_r"] = os.str();
  return out;
}

inline PerturbedDataset fgsm_l2(const Dataset& ds, const AttackSpec& spec) {
  auto out = apply_directions(ds, fgsm_directions(ds, spec), spec.budget_r);
  std::ostringstream os;
  os << std::setprecision(17) << spec.budget_r;
  out.metadata["budget_r"] = os.str();
  return out;
}

/// What an attack may look at: the labeled training set (direct attack reference).
struct AttackContext {
  const Dataset* reference = nullptr;
};

inline AttackDirections attack_directions(const AttackSpec& spec, const Dataset& ds, const AttackContext& ctx) {
  if (spec.kind == AttackKind::direct) {
    if (!ctx.reference) throw ConfigError("run_attack: direct attack needs a reference set");
    return direct_attack_directions(ds, *ctx.reference, spec);
  }
  return fgsm_directions(ds, spec);
}

inline PerturbedDataset run_attack(const AttackSpec& spec, const Dataset& ds, const AttackContext& ctx) {
  auto out = apply_directions(ds, attack_directions(spec, ds, ctx), spec.budget_r);
  std::ostringstream os;
  os << std::setprecision(17) << spec.budget_r;
  out.metadata["budget_r"] = os.str();
  return out;
}

struct AttackContractReport {
  std::size_t budget_violations = 0;   // shift > r + 1e-12
  std::size_t exactness_violations = 0;  // moved point whose shift is not r (to 1e-12 relative)
  std::size_t label_violations = 0;
  std::size_t out_of_scope_moves = 0;
  std::size_t total() const { return budget_violations + exactness_violations + label_violations + out_of_scope_moves; }
};

inline AttackContractReport check_attack_contract(const PerturbedDataset& pd, double r, AttackScope scope) {
  AttackContractReport rep;
  const auto& o = pd.original;
  const auto& p = pd.perturbed;
  if (o.labels != p.labels || o.labeled_mask != p.labeled_mask) ++rep.label_violations;
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double s = pd.per_point_shift[i];
    if (s != distance(o.points[i], p.points[i])) ++rep.budget_violations;
    if (s > r + 1e-12) ++rep.budget_violations;
    if (s > 0.0 && std::abs(s - r) > 1e-12 * std::max(1.0, r)) ++rep.exactness_violations;
    if (s > 0.0 && !detail::in_scope(o, i, scope)) ++rep.out_of_scope_moves;
  }
  return rep;
}

/// CSV: index, x0.., xhat0.., shift
inline void write_perturbed_csv(std::ostream& os, const PerturbedDataset& pd) {
  const std::size_t d = pd.original.dim();
  os << "index";
  for (std::size_t j = 0; j < d; ++j) os << ",x" << j;
  for (std::size_t j = 0; j < d; ++j) os << ",xhat" << j;
  os << ",shift\n" << std::setprecision(17);
  for (std::size_t i = 0; i < pd.original.size(); ++i) {
    os << i;
    for (double v : pd.original.points[i]) os << ',' << v;
    for (double v : pd.perturbed.points[i]) os << ',' << v;
    os << ',' << pd.per_point_shift[i] << '\n';
  }
}

inline void write_perturbed_csv(const std::string& path, const PerturbedDataset& pd) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write '" + path + "'");
  write_perturbed_csv(os, pd);
}

}  // namespace glcert
