#include <gtest/gtest.h>

#include <sstream>

#include "glcert/classify.hpp"
#include "glcert/models.hpp"

using namespace glcert;

namespace {

Dataset make(std::size_t dim, std::vector<double> xs, std::vector<double> ys) {
  Dataset ds;
  ds.points = PointSet(dim, std::move(xs));
  ds.labels = std::move(ys);
  ds.labeled_mask.assign(ds.labels.size(), true);
  return ds;
}

Dataset xor_set() { return make(2, {0, 0, 1, 1, 0, 1, 1, 0}, {0, 0, 1, 1}); }

// Relative error of the analytic input gradient against central differences.
double fd_error(const SurrogateModel& m, std::span<const double> x, double y) {
  const double h = 1e-5;
  auto g = m.gradient_wrt_input(x, y);
  std::vector<double> xp(x.begin(), x.end());
  double num = 0.0, den = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double keep = xp[j];
    xp[j] = keep + h;
    const double lp = m.loss(xp, y);
    xp[j] = keep - h;
    const double lm = m.loss(xp, y);
    xp[j] = keep;
    const double fd = (lp - lm) / (2 * h);
    num = std::max(num, std::abs(fd - g[j]));
    den = std::max(den, std::abs(fd));
  }
  return num / std::max(den, 1e-8);
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

}  // namespace

TEST(Surrogate, LogisticSeparatesTwoPoints) {
  auto ds = make(1, {-1, 1}, {0, 1});
  auto m = train_surrogate(ModelKind::logistic, ds);
  EXPECT_EQ(surrogate_accuracy(m, ds), 1.0);
  for (std::size_t i = 0; i < 2; ++i) {
    const double p = m.predict_proba(ds.points[i]);
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
  }
}

TEST(Surrogate, XorNeedsHiddenLayer) {
  TrainConfig cfg;
  cfg.epochs = 3000;
  cfg.learning_rate = 0.5;
  cfg.l2 = 0.0;
  cfg.batch_size = 4;
  auto mlp = train_surrogate(ModelKind::mlp, xor_set(), cfg);
  EXPECT_EQ(surrogate_accuracy(mlp, xor_set()), 1.0);
  auto lr = train_surrogate(ModelKind::logistic, xor_set());
  EXPECT_LE(surrogate_accuracy(lr, xor_set()), 0.75);
}

TEST(Surrogate, KernelOnHalfmoon) {
  auto [train, test] = gen_halfmoon(2000, 1000, 0.2, 7);
  auto m = train_surrogate(ModelKind::kernel, train);
  EXPECT_EQ(m.centers.size(), 1000u);
  EXPECT_GE(surrogate_accuracy(m, test), 0.9);
}

TEST(Surrogate, SingleClassRejected) {
  auto ds = make(1, {0, 1, 2}, {1, 1, 1});
  EXPECT_THROW(train_surrogate(ModelKind::logistic, ds), TrainingError);
  EXPECT_THROW(train_surrogate(ModelKind::mlp, make(1, {0}, {1})), InvalidArgument);
}

TEST(Surrogate, DivergenceIsReported) {
  auto ds = gen_halfmoon(100, 1, 0.2, 1).first;
  TrainConfig cfg;
  cfg.learning_rate = 1e300;
  cfg.epochs = 5;
  EXPECT_THROW(train_surrogate(ModelKind::mlp, ds, cfg), TrainingError);
}

TEST(Surrogate, LogisticLossNonIncreasing) {
  auto ds = gen_halfmoon(300, 1, 0.2, 4).first;
  std::vector<double> trace;
  train_surrogate(ModelKind::logistic, ds, {}, &trace);
  ASSERT_EQ(trace.size(), 500u);
  for (std::size_t e = 1; e < trace.size(); ++e) EXPECT_LE(trace[e], trace[e - 1] + 1e-15);
}

TEST(Surrogate, Deterministic) {
  auto ds = gen_halfmoon(200, 1, 0.2, 4).first;
  TrainConfig cfg;
  cfg.epochs = 20;
  for (auto kind : {ModelKind::logistic, ModelKind::mlp, ModelKind::kernel}) {
    auto a = train_surrogate(kind, ds, cfg);
    auto b = train_surrogate(kind, ds, cfg);
    EXPECT_EQ(a.params, b.params);
  }
}

TEST(InputGradient, ZeroWeightsGiveZero) {
  SurrogateModel m;
  m.kind = ModelKind::logistic;
  m.input_dim = 3;
  m.params = {0, 0, 0, 0.7};
  for (double v : m.gradient_wrt_input(std::vector<double>{1, 2, 3}, 1.0)) EXPECT_EQ(v, 0.0);
}

TEST(InputGradient, MatchesFiniteDifferences) {
  auto ds = gen_halfmoon(300, 1, 0.2, 5).first;
  TrainConfig cfg;
  cfg.epochs = 50;
  Rng rng(3);
  std::normal_distribution<double> z;
  for (auto kind : {ModelKind::logistic, ModelKind::mlp, ModelKind::kernel}) {
    auto m = train_surrogate(kind, ds, cfg);
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
      std::vector<double> x{z(rng), z(rng)};
      worst = std::max(worst, fd_error(m, x, t % 2));
    }
    EXPECT_LE(worst, 1e-4) << to_string(kind);
  }
}

TEST(InputGradient, SmallMlpLooksLinear) {
  // At weight scale 1e-3, tanh is linear and the MLP logit is W2·W1 x: compare with
  // a logistic model carrying exactly that weight vector.
  SurrogateModel mlp;
  mlp.kind = ModelKind::mlp;
  mlp.input_dim = 4;
  mlp.hidden = 8;
  Rng rng(9);
  std::normal_distribution<double> z;
  mlp.params.resize(8 * 4 + 2 * 8 + 1);
  for (auto& p : mlp.params) p = 1e-3 * z(rng);
  SurrogateModel lin;
  lin.kind = ModelKind::logistic;
  lin.input_dim = 4;
  lin.params.assign(5, 0.0);
  for (std::size_t u = 0; u < 8; ++u)
    for (std::size_t j = 0; j < 4; ++j) lin.params[j] += mlp.params[8 * 4 + 8 + u] * mlp.params[u * 4 + j];
  std::vector<double> x{0.3, -0.2, 0.5, 0.1};
  EXPECT_GE(cosine(mlp.gradient_wrt_input(x, 1.0), lin.gradient_wrt_input(x, 1.0)), 0.99);
}

TEST(SubstituteLoop, OneRoundEqualsDirectTraining) {
  auto ds = gen_halfmoon(100, 1, 0.2, 6).first;
  LabelOracle victim = [&](const PointSet& q) {
    std::vector<int> out;
    for (std::size_t i = 0; i < q.size(); ++i) out.push_back(q[i][0] + q[i][1] > 0.5 ? 1 : 0);
    return out;
  };
  TrainConfig cfg;
  cfg.seed = 4;
  auto res = substitute_train_loop(victim, ds.points, 1, 0.1, ModelKind::logistic, cfg);
  Dataset labeled = ds;
  auto answers = victim(ds.points);
  for (std::size_t i = 0; i < ds.size(); ++i) labeled.labels[i] = answers[i];
  TrainConfig round_cfg = cfg;
  round_cfg.seed = mix_seed(cfg.seed, 100);
  auto direct = train_surrogate(ModelKind::logistic, labeled, round_cfg);
  EXPECT_EQ(res.model.params, direct.params);
  EXPECT_EQ(res.victim_queries, 100u);
  EXPECT_EQ(res.pool_size, 200u);
}

TEST(SubstituteLoop, PoolDoublesAndIsCapped) {
  auto ds = gen_halfmoon(20, 1, 0.2, 6).first;
  LabelOracle victim = [](const PointSet& q) {
    std::vector<int> out;
    for (std::size_t i = 0; i < q.size(); ++i) out.push_back(q[i][1] > 0.25 ? 0 : 1);
    return out;
  };
  TrainConfig cfg;
  cfg.epochs = 20;
  for (std::size_t r = 1; r <= 4; ++r)
    EXPECT_EQ(substitute_train_loop(victim, ds.points, r, 0.1, ModelKind::logistic, cfg).pool_size, 20u << r);
  auto capped = substitute_train_loop(victim, ds.points, 4, 0.1, ModelKind::logistic, cfg, 100);
  EXPECT_EQ(capped.pool_size, 100u);
}

TEST(SubstituteLoop, AgreesWithGraphVictim) {
  auto [train, test] = gen_halfmoon(2000, 1000, 0.2, 7);
  auto labeled = apply_label_mask(train, 400, 7);
  LabelOracle victim = [&](const PointSet& q) {
    Dataset queries;
    queries.points = q;
    queries.labels.assign(q.size(), 0.0);
    queries.labeled_mask.assign(q.size(), false);
    auto all = transductive_union(labeled.labeled_part(), queries);
    auto g = build_knn_graph(all, 10, KnnWeights::self_tuning_gaussian);
    auto pred = gl_classify(harmonic_extend(g, all));
    return std::vector<int>(pred.classes.begin() + 400, pred.classes.end());
  };
  // The adversary starts from a small set of unlabeled points.
  auto seeds = test.points.subset(iota_indices(100));
  auto res = substitute_train_loop(victim, seeds, 3, 0.1, ModelKind::kernel);
  auto truth = victim(test.points);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < test.size(); ++i) agree += res.model.predict(test.points[i]) == truth[i];
  EXPECT_GE(static_cast<double>(agree) / test.size(), 0.85);
}

TEST(ModelIo, RoundTripIsBitExact) {
  auto ds = gen_halfmoon(60, 1, 0.2, 2).first;
  TrainConfig cfg;
  cfg.epochs = 10;
  for (auto kind : {ModelKind::logistic, ModelKind::mlp, ModelKind::kernel}) {
    auto m = train_surrogate(kind, ds, cfg);
    std::stringstream ss;
    save_model(ss, m);
    auto back = load_model(ss);
    EXPECT_EQ(back.kind, m.kind);
    EXPECT_EQ(back.params, m.params);
    EXPECT_EQ(back.centers, m.centers);
    EXPECT_EQ(back.bandwidth, m.bandwidth);
    std::vector<double> x{0.1, 0.2};
    EXPECT_EQ(back.logit(x), m.logit(x));
  }
  std::stringstream bad("not a model\n");
  EXPECT_THROW(load_model(bad), LoadError);
}
