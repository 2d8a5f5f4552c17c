#include <gtest/gtest.h>

#include <sstream>

#include "glcert/classify.hpp"

using namespace glcert;

TEST(GlClassify, ThresholdIsInclusive) {
  HarmonicSolution sol;
  sol.u = {0.49, 0.5, 0.51};
  auto p = gl_classify(sol);
  EXPECT_EQ(p.classes, (std::vector<int>{0, 1, 1}));
  EXPECT_EQ(p.scores, sol.u);
}

TEST(GlClassify, DependsOnlyOnSideOfHalf) {
  HarmonicSolution a, b;
  a.u = {0.1, 0.45, 0.5, 0.8, 0.99};
  for (double v : a.u) b.u.push_back(0.5 + 3.0 * std::pow(v - 0.5, 3));
  EXPECT_EQ(gl_classify(a).classes, gl_classify(b).classes);
}

TEST(GlClassify, AllLabeledHalfmoonIsExact) {
  auto ds = gen_halfmoon(2000, 1, 0.2, 1).first;
  auto g = build_knn_graph(ds, 10, KnnWeights::self_tuning_gaussian);
  auto p = gl_classify(harmonic_extend(g, ds));
  EXPECT_EQ(accuracy(p, ds.labels), 1.0);
}

TEST(KnnClassify, SmallCases) {
  Dataset train;
  train.points = PointSet(1, {0, 1, 2, 10});
  train.labels = {0, 0, 1, 1};
  train.labeled_mask = {true, true, true, true};
  auto p1 = knn_classify(train, PointSet(1, std::vector<double>{10.0}), 1);
  EXPECT_EQ(p1.classes[0], 1);
  auto p3 = knn_classify(train, PointSet(1, std::vector<double>{0.5}), 3);
  EXPECT_EQ(p3.classes[0], 0);
  EXPECT_DOUBLE_EQ(p3.scores[0], 1.0 / 3.0);
  // Split vote goes to class 1.
  auto p2 = knn_classify(train, PointSet(1, std::vector<double>{1.4}), 2);
  EXPECT_EQ(p2.classes[0], 1);
  EXPECT_DOUBLE_EQ(p2.scores[0], 0.5);
}

TEST(KnnClassify, AllNeighboursGiveGlobalMajority) {
  auto ds = apply_label_mask(gen_halfmoon(101, 1, 0.2, 2).first, 31, 2);
  double ones = 0;
  for (auto i : ds.labeled_indices()) ones += ds.labels[i];
  const int majority = 2 * ones >= 31 ? 1 : 0;
  auto p = knn_classify(ds, ds.points, 31);
  for (int c : p.classes) EXPECT_EQ(c, majority);
}

TEST(KnnClassify, Errors) {
  auto ds = gen_halfmoon(10, 1, 0.2, 2).first;
  EXPECT_THROW(knn_classify(ds, ds.points, 11), InvalidArgument);
  ds.labeled_mask.assign(10, false);
  EXPECT_THROW(knn_classify(ds, ds.points, 1), InvalidArgument);
}

TEST(KnnClassify, HalfmoonBaseline) {
  auto [train, test] = gen_halfmoon(2000, 1000, 0.2, 7);
  const double acc = accuracy(knn_classify(train, test.points, 13), test.labels);
  EXPECT_GE(acc, 0.90);
  EXPECT_LE(acc, 1.0);
}

TEST(Accuracy, Basics) {
  Prediction p{{1, 0, 1, 1}, {1, 0, 1, 1}};
  std::vector<double> truth{1, 0, 0, 1};
  EXPECT_DOUBLE_EQ(accuracy(p, truth), 0.75);
  Prediction q = p;
  for (auto& c : q.classes) c = 1 - c;
  EXPECT_DOUBLE_EQ(accuracy(p, truth) + accuracy(q, truth), 1.0);
  std::vector<bool> mask{false, false, true, false};
  EXPECT_EQ(accuracy(p, truth, &mask), 0.0);
  std::vector<bool> none(4, false);
  EXPECT_THROW(accuracy(p, truth, &none), InvalidArgument);
  EXPECT_THROW(accuracy(p, std::vector<double>{1, 0}), InvalidArgument);
  std::ostringstream os;
  write_prediction_csv(os, Prediction{{0, 1}, {0.25, 0.5}});
  EXPECT_EQ(os.str(), "index,class,score\n0,0,0.25\n1,1,0.5\n");
}
