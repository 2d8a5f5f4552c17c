#include <gtest/gtest.h>

#include <sstream>

#include "glcert/attack.hpp"

using namespace glcert;

namespace {

Dataset make_ds(std::vector<double> coords, std::size_t dim, std::vector<double> labels, std::vector<bool> mask) {
  Dataset ds;
  ds.points = PointSet(dim, std::move(coords));
  ds.labels = std::move(labels);
  ds.labeled_mask = std::move(mask);
  return ds;
}

std::shared_ptr<SurrogateModel> linear_model(std::vector<double> w, double b) {
  auto m = std::make_shared<SurrogateModel>();
  m->kind = ModelKind::logistic;
  m->input_dim = w.size();
  m->params = w;
  m->params.push_back(b);
  return m;
}

}  // namespace

TEST(DirectAttack, MovesAwayFromOpponentNeighbour) {
  // Unlabeled x = (0,0) of class 0; nearest labeled class-1 point (1,0).
  auto ds = make_ds({0, 0, 1, 0, -5, 0}, 2, {0, 1, 0}, {false, true, true});
  AttackSpec spec;
  spec.budget_r = 0.1;
  auto pd = direct_attack(ds, ds, spec);
  EXPECT_NEAR(pd.perturbed.points[0][0], -0.1, 1e-15);
  EXPECT_EQ(pd.perturbed.points[0][1], 0.0);
  // Labeled points stay put under the default scope.
  EXPECT_EQ(pd.per_point_shift[1], 0.0);
  EXPECT_EQ(pd.per_point_shift[2], 0.0);
  EXPECT_EQ(check_attack_contract(pd, 0.1, AttackScope::unlabeled).total(), 0u);

  spec.direction_sign = DirectionSign::toward_opponent;
  auto toward = direct_attack(ds, ds, spec);
  EXPECT_NEAR(toward.perturbed.points[0][0], 0.1, 1e-15);
}

TEST(DirectAttack, DegenerateDirectionIsSeededUnitVector) {
  auto ds = make_ds({1, 0, 1, 0, -5, 0}, 2, {0, 1, 0}, {false, true, true});
  AttackSpec spec;
  spec.budget_r = 0.2;
  spec.seed = 9;
  auto a = direct_attack(ds, ds, spec);
  auto b = direct_attack(ds, ds, spec);
  EXPECT_NEAR(a.per_point_shift[0], 0.2, 1e-14);
  EXPECT_EQ(a.perturbed.points.raw(), b.perturbed.points.raw());
}

TEST(DirectAttack, NeedsBothClasses) {
  auto ds = make_ds({0, 0, 1, 0}, 2, {0, 0}, {false, true});
  AttackSpec spec;
  EXPECT_THROW(direct_attack(ds, ds, spec), InvalidArgument);
}

TEST(Fgsm, AllPositiveGradientSplitsEvenly) {
  auto ds = make_ds({0, 0, 0, 0}, 4, {0}, {false});
  AttackSpec spec;
  spec.kind = AttackKind::bb_lr;
  spec.budget_r = 1.0;
  spec.surrogate = linear_model({1, 2, 3, 4}, 0.0);
  auto pd = fgsm_l2(ds, spec);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(pd.perturbed.points[0][j], 0.5, 1e-15);
  EXPECT_NEAR(pd.per_point_shift[0], 1.0, 1e-15);
}

TEST(Fgsm, SparseSignUsesNonzeroCount) {
  auto ds = make_ds({0, 0, 0, 0}, 4, {1}, {false});
  AttackSpec spec;
  spec.kind = AttackKind::bb_lr;
  spec.budget_r = 1.0;
  spec.surrogate = linear_model({1, 0, -1, 0}, 0.0);
  auto pd = fgsm_l2(ds, spec);
  // label 1: gradient of the loss is (sigmoid(f) - 1) w, opposite to w.
  const double h = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(pd.perturbed.points[0][0], -h, 1e-15);
  EXPECT_EQ(pd.perturbed.points[0][1], 0.0);
  EXPECT_NEAR(pd.perturbed.points[0][2], h, 1e-15);
}

TEST(Fgsm, ZeroGradientLeavesPoint) {
  auto ds = make_ds({0.3, 0.4}, 2, {0}, {false});
  AttackSpec spec;
  spec.kind = AttackKind::bb_nn;
  spec.budget_r = 0.5;
  spec.surrogate = linear_model({0, 0}, 0.0);
  auto pd = fgsm_l2(ds, spec);
  EXPECT_EQ(pd.per_point_shift[0], 0.0);
  EXPECT_EQ(pd.perturbed.points.raw(), ds.points.raw());
  EXPECT_EQ(check_attack_contract(pd, 0.5, AttackScope::unlabeled).total(), 0u);
}

TEST(Fgsm, MissingSurrogateIsConfigError) {
  auto ds = make_ds({0, 0}, 2, {0}, {false});
  AttackSpec spec;
  spec.kind = AttackKind::bb_kernel;
  EXPECT_THROW(fgsm_l2(ds, spec), ConfigError);
  EXPECT_THROW(run_attack(AttackSpec{}, ds, AttackContext{}), ConfigError);
}

TEST(AttackContract, PropertyOverRandomData) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto ds = apply_label_mask(gen_halfmoon(200, 0, 0.1, seed).first, 40, seed);
    auto model = std::make_shared<SurrogateModel>(train_surrogate(ModelKind::logistic, ds.labeled_part(), {}));
    for (auto kind : kAllAttacks) {
      for (auto scope : {AttackScope::unlabeled, AttackScope::all}) {
        for (double r : {0.0, 0.01, 0.3}) {
          AttackSpec spec;
          spec.kind = kind;
          spec.budget_r = r;
          spec.seed = seed;
          spec.scope = scope;
          spec.surrogate = model;
          auto pd = run_attack(spec, ds, AttackContext{&ds});
          auto rep = check_attack_contract(pd, r, scope);
          EXPECT_EQ(rep.total(), 0u) << to_string(kind) << " r=" << r;
          if (scope == AttackScope::unlabeled) {
            for (auto i : ds.labeled_indices()) EXPECT_EQ(pd.per_point_shift[i], 0.0);
          }
        }
      }
    }
  }
}

TEST(AttackContract, DetectsViolations) {
  auto ds = make_ds({0, 0, 1, 0, -5, 0}, 2, {0, 1, 0}, {false, true, true});
  AttackSpec spec;
  spec.budget_r = 0.1;
  auto pd = direct_attack(ds, ds, spec);
  auto bad = pd;
  bad.perturbed.labels[0] = 1.0;
  EXPECT_EQ(check_attack_contract(bad, 0.1, AttackScope::unlabeled).label_violations, 1u);
  EXPECT_GT(check_attack_contract(pd, 0.05, AttackScope::unlabeled).budget_violations, 0u);
  EXPECT_GT(check_attack_contract(pd, 0.2, AttackScope::unlabeled).exactness_violations, 0u);
  auto moved = pd;
  moved.perturbed.points[1][0] += 0.1;
  moved.per_point_shift[1] = 0.1;
  EXPECT_EQ(check_attack_contract(moved, 0.1, AttackScope::unlabeled).out_of_scope_moves, 1u);
}

TEST(AttackIo, PerturbedCsv) {
  auto ds = make_ds({0, 0, 1, 0, -5, 0}, 2, {0, 1, 0}, {false, true, true});
  AttackSpec spec;
  spec.budget_r = 0.1;
  std::ostringstream os;
  write_perturbed_csv(os, direct_attack(ds, ds, spec));
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "index,x0,x1,xhat0,xhat1,shift");
  EXPECT_NE(os.str().find("0,0,0,-0.1"), std::string::npos);
}
