#include <gtest/gtest.h>

#include <atomic>
#include <cmath>

#include "glcert/core.hpp"

using namespace glcert;

TEST(PointSet, ConstructAndSubset) {
  PointSet p(2, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(p.size(), 3u);
  EXPECT_EQ(p[1][0], 3);
  std::vector<std::size_t> idx{2, 0};
  auto s = p.subset(idx);
  EXPECT_EQ(s.raw(), (std::vector<double>{5, 6, 1, 2}));
  EXPECT_THROW(PointSet(2, {1, 2, 3}), InvalidArgument);
  PointSet q;
  q.push_back(std::vector<double>{1, 2});
  EXPECT_EQ(q.dim(), 2u);
  EXPECT_THROW(q.push_back(std::vector<double>{1}), InvalidArgument);
}

TEST(Stats, MeanStdMedian) {
  std::vector<double> v{1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(mean(v), 2.5);
  EXPECT_DOUBLE_EQ(stddev(v), std::sqrt(5.0 / 3.0));
  EXPECT_DOUBLE_EQ(median(v), 2.5);
  EXPECT_DOUBLE_EQ(median({3, 1, 2}), 2);
  EXPECT_EQ(stddev(std::vector<double>{7}), 0.0);
}

TEST(Stats, Spearman) {
  std::vector<double> a{1, 2, 3, 4, 5}, b{2, 4, 6, 8, 100}, c{5, 4, 3, 2, 1};
  EXPECT_DOUBLE_EQ(spearman(a, b), 1.0);
  EXPECT_DOUBLE_EQ(spearman(a, c), -1.0);
  EXPECT_TRUE(std::isnan(spearman(a, std::vector<double>(5, 1.0))));
  // Ties share ranks: ranks of {1,1,2} are {1.5,1.5,3}.
  auto r = average_ranks(std::vector<double>{1, 1, 2});
  EXPECT_EQ(r, (std::vector<double>{1.5, 1.5, 3}));
}

TEST(Random, ShuffleIsDeterministic) {
  Rng a(5), b(5);
  auto x = iota_indices(20), y = iota_indices(20);
  seeded_shuffle(x, a);
  seeded_shuffle(y, b);
  EXPECT_EQ(x, y);
  EXPECT_NE(x, iota_indices(20));
  EXPECT_NE(mix_seed(1, 0), mix_seed(1, 1));
}

TEST(Random, UnitVector) {
  Rng rng(3);
  auto v = random_unit_vector(7, rng);
  EXPECT_NEAR(norm2(v), 1.0, 1e-15);
}

TEST(Parallel, RunsEveryIndexAndRethrowsFirst) {
  std::vector<std::atomic<int>> hits(100);
  parallel_for(100, [&](std::size_t i) { hits[i]++; }, 4);
  for (auto& h : hits) EXPECT_EQ(h.load(), 1);
  try {
    parallel_for(50, [](std::size_t i) {
      if (i == 7 || i == 31) throw Error("fail " + std::to_string(i));
    }, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "fail 7");
  }
}
