#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "oracles.hpp"
#include "setrec/synthgen.hpp"

using namespace setrec;

namespace {

SynthConfig small(SynthMode mode, double noise = 0.0) {
  SynthConfig c;
  c.mode = mode;
  c.num_users = 60;
  c.num_items = 80;
  c.items_per_user = 20;
  c.selected_users = 40;
  c.sets_per_user = 10;
  c.noise_sd = noise;
  c.seed = 7;
  return c;
}

GroundTruth two_item_truth(double a, double b) {
  GroundTruth gt;
  gt.P_true = Matrix::Ones(1, 1);
  gt.Q_true = Matrix(2, 1);
  gt.Q_true << a, b;
  return gt;
}

}  // namespace

TEST(GenerateLowRank, RankOrthonormalityAndScale) {
  auto gt = generate_low_rank(50, 50, 5, 3);
  Eigen::MatrixXd R = dense_ratings(gt);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(R);
  auto s = svd.singularValues();
  for (Eigen::Index j = 5; j < s.size(); ++j) EXPECT_LT(s[j], 1e-8 * s[0]);
  Eigen::MatrixXd UA = gt.P_true / gt.alpha;
  Eigen::MatrixXd UB = gt.Q_true / gt.alpha;
  EXPECT_LT((UA.transpose() * UA - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((UB.transpose() * UB - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_NEAR(R.cwiseAbs().maxCoeff(), 10.0, 1e-6);
  EXPECT_THROW(generate_low_rank(4, 10, 5, 1), std::invalid_argument);
}

TEST(SampleSets, ForcedCountsAndMembership) {
  std::vector<std::vector<ItemId>> observed{{0, 1, 2, 3, 4}, {5, 6, 7, 8, 9, 10}, {1, 2}};
  auto s = sample_sets(observed, 2, 5, 40, 1);
  EXPECT_EQ(s.sets.size(), 80u);
  EXPECT_EQ(s.users, (std::vector<UserId>{0, 1}));  // user 2 is ineligible
  for (const auto& set : s.sets) {
    std::set<ItemId> uniq(set.items.begin(), set.items.end());
    EXPECT_EQ(uniq.size(), 5u);
    for (ItemId i : set.items)
      EXPECT_TRUE(std::binary_search(observed[set.user].begin(), observed[set.user].end(), i));
    if (set.user == 0) {
      EXPECT_EQ(uniq, (std::set<ItemId>{0, 1, 2, 3, 4}));
    }
  }
  EXPECT_THROW(sample_sets(observed, 3, 5, 1, 1), DataError);
}

TEST(RateSets, NoiselessExamples) {
  auto gt = two_item_truth(2.0, 4.0);
  SetRating s{0, {0, 1}, 0.0};
  EXPECT_DOUBLE_EQ(offset_rating(gt, s, -2.0), 1.0);
  EXPECT_DOUBLE_EQ(offset_rating(gt, s, 0.0), 3.0);
  EXPECT_DOUBLE_EQ(extremal_rating(gt, s, 1), 2.0);
  EXPECT_DOUBLE_EQ(extremal_rating(gt, s, 2), 3.0);
  EXPECT_DOUBLE_EQ(extremal_rating(gt, s, 3), 4.0);
}

TEST(RateSets, NoiselessBounds) {
  for (auto mode : {SynthMode::esarm, SynthMode::voarm}) {
    auto data = generate_synthetic(small(mode));
    EXPECT_TRUE(validate_dataset(data.sets).ok());
    for (const auto& s : data.sets.set_ratings) {
      std::vector<double> x;
      for (ItemId i : s.items) x.push_back(data.truth.true_rating(s.user, i));
      auto mom = set_moments(x, 0.0);
      if (mode == SynthMode::esarm) {
        EXPECT_GE(s.rating, *std::min_element(x.begin(), x.end()) - 1e-12);
        EXPECT_LE(s.rating, *std::max_element(x.begin(), x.end()) + 1e-12);
      } else {
        EXPECT_LE(std::abs(s.rating - mom.mu), 2.0 * mom.sigma + 1e-12);
      }
    }
  }
}

TEST(RateSets, BehaviorDrawsAreInRange) {
  auto v = generate_synthetic(small(SynthMode::voarm));
  for (double b : v.truth.beta) {
    EXPECT_GE(b, -2.0);
    EXPECT_LE(b, 2.0);
  }
  auto e = generate_synthetic(small(SynthMode::esarm));
  std::set<int> seen(e.truth.extremal_index.begin(), e.truth.extremal_index.end());
  EXPECT_EQ(*seen.begin(), 1);
  EXPECT_EQ(*seen.rbegin(), 9);
}

TEST(RateSets, NoiseResidualSd) {
  auto cfg = small(SynthMode::voarm, 0.1);
  cfg.sets_per_user = 250;  // 40 users * 250 = 10^4 sets
  auto noisy = generate_synthetic(cfg);
  cfg.noise_sd = 0.0;
  auto clean = generate_synthetic(cfg);
  ASSERT_EQ(noisy.sets.set_ratings.size(), 10000u);
  std::vector<double> res;
  for (std::size_t k = 0; k < noisy.sets.set_ratings.size(); ++k)
    res.push_back(noisy.sets.set_ratings[k].rating - clean.sets.set_ratings[k].rating);
  const double sd = oracle::sample_sd(res);
  EXPECT_GE(sd, 0.09);
  EXPECT_LE(sd, 0.11);

  std::vector<double> item_res;
  for (std::size_t k = 0; k < noisy.items.size(); ++k) item_res.push_back(noisy.items[k].rating - clean.items[k].rating);
  EXPECT_NEAR(oracle::sample_sd(item_res), 0.1, 0.01);
}

TEST(Replicate, IndependentAndDeterministic) {
  auto cfg = small(SynthMode::voarm);
  auto a = replicate(cfg, 3, 100);
  auto b = replicate(cfg, 3, 100);
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_EQ(a[j].truth, b[j].truth);
    EXPECT_EQ(a[j].sets.set_ratings, b[j].sets.set_ratings);
    for (std::size_t k = j + 1; k < 3; ++k) EXPECT_FALSE(a[j].truth == a[k].truth);
  }
  EXPECT_THROW(replicate(cfg, 0, 1), std::invalid_argument);
}

TEST(GenerateSynthetic, AcceptsExternalObservedPairs) {
  auto cfg = small(SynthMode::esarm);
  cfg.num_users = 3;
  cfg.num_items = 10;
  cfg.selected_users = 2;
  cfg.rank = 2;
  auto observed = observed_from_pairs({{0, 1}, {0, 2}, {0, 3}, {0, 4}, {0, 5}, {2, 9}, {2, 8}, {2, 7}, {2, 6},
                                       {2, 5}, {2, 5}, {1, 0}},
                                      3);
  auto d = generate_synthetic(cfg, observed);
  EXPECT_EQ(d.truth.selected_users, (std::vector<UserId>{0, 2}));
  EXPECT_EQ(d.items.size(), 11u);
  observed[0].push_back(42);
  EXPECT_THROW(generate_synthetic(cfg, observed), DataError);
}
