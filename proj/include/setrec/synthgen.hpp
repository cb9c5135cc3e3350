#pragma once

// Synthetic benchmark generator: a low-rank ground-truth rating matrix with
// orthogonal factors, random sets drawn from each user's observed items, and
// set ratings produced by either an extremal-subset rater or a
// pickiness-offset rater, with Gaussian noise on every emitted rating.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/SVD>

#include "setrec/core.hpp"
#include "setrec/set_models.hpp"

namespace setrec {

enum class SynthMode { esarm, voarm };

inline std::string_view to_string(SynthMode m) { return m == SynthMode::esarm ? "esarm" : "voarm"; }

inline std::optional<SynthMode> parse_synth_mode(std::string_view s) {
  if (s == "esarm") return SynthMode::esarm;
  if (s == "voarm") return SynthMode::voarm;
  return std::nullopt;
}

struct GroundTruth {
  SynthMode mode = SynthMode::voarm;
  Matrix P_true;  // alpha * U_A
  Matrix Q_true;  // alpha * U_B
  double alpha = 1.0;
  std::size_t set_size = 0;
  std::vector<UserId> selected_users;   // users that received sets, ascending
  std::vector<int> extremal_index;      // per user, 1-based generating subset (esarm mode)
  std::vector<double> beta;             // per user pickiness (voarm mode)

  std::size_t num_users() const { return static_cast<std::size_t>(P_true.rows()); }
  std::size_t num_items() const { return static_cast<std::size_t>(Q_true.rows()); }

  double true_rating(UserId u, ItemId i) const { return detail::dot_row(P_true, u, Q_true, i); }

  friend bool operator==(const GroundTruth& a, const GroundTruth& b) {
    return a.mode == b.mode && equal_exact(a.P_true, b.P_true) && equal_exact(a.Q_true, b.Q_true) &&
           a.alpha == b.alpha && a.set_size == b.set_size && a.selected_users == b.selected_users &&
           a.extremal_index == b.extremal_index && a.beta == b.beta;
  }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Independent sub-seed for one generation stage.
inline std::uint64_t stage_seed(std::uint64_t seed, std::uint64_t stage) {
  return splitmix64(seed ^ splitmix64(stage));
}

inline Matrix orthonormal_basis_of_uniform(std::size_t rows, std::size_t k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::MatrixXd A(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(k));
  for (Eigen::Index r = 0; r < A.rows(); ++r)
    for (Eigen::Index c = 0; c < A.cols(); ++c) A(r, c) = unit(rng);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU);
  return svd.matrixU();
}

}  // namespace detail

/// Rank-k ground truth R = P Q' with P = alpha U_A, Q = alpha U_B, where U_A,
/// U_B are the left singular vectors of uniform [0,1] matrices and alpha
/// scales the largest |R_ij| to exactly 10.
inline GroundTruth generate_low_rank(std::size_t n, std::size_t m, std::size_t k, std::uint64_t seed) {
  if (k == 0 || k > std::min(n, m))
    throw std::invalid_argument("generate_low_rank: rank " + std::to_string(k) + " exceeds min(n, m)");
  std::mt19937_64 rng(detail::stage_seed(seed, 1));
  Matrix UA = detail::orthonormal_basis_of_uniform(n, k, rng);
  Matrix UB = detail::orthonormal_basis_of_uniform(m, k, rng);
  double max_abs = 0.0;
  for (Eigen::Index u = 0; u < UA.rows(); ++u)
    for (Eigen::Index i = 0; i < UB.rows(); ++i)
      max_abs = std::max(max_abs, std::abs(detail::dot_row(UA, u, UB, i)));
  GroundTruth gt;
  gt.alpha = std::sqrt(10.0 / max_abs);
  gt.P_true = gt.alpha * UA;
  gt.Q_true = gt.alpha * UB;
  return gt;
}

/// Dense R = P Q' (only for small problems and tests).
inline Eigen::MatrixXd dense_ratings(const GroundTruth& gt) { return gt.P_true * gt.Q_true.transpose(); }

/// Each user observes a uniform random subset of `items_per_user` items,
/// returned sorted.
inline std::vector<std::vector<ItemId>> synthetic_mask(std::size_t n, std::size_t m, std::size_t items_per_user,
                                                       std::uint64_t seed) {
  if (items_per_user > m) throw std::invalid_argument("synthetic_mask: more items per user than items");
  std::mt19937_64 rng(detail::stage_seed(seed, 2));
  std::vector<ItemId> pool(m);
  std::vector<std::vector<ItemId>> out(n);
  for (std::size_t u = 0; u < n; ++u) {
    std::iota(pool.begin(), pool.end(), ItemId{0});
    for (std::size_t j = 0; j < items_per_user; ++j) {
      std::uniform_int_distribution<std::size_t> pick(j, m - 1);
      std::swap(pool[j], pool[pick(rng)]);
    }
    out[u].assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(items_per_user));
    std::sort(out[u].begin(), out[u].end());
  }
  return out;
}

/// Groups observed (user, item) pairs by user, deduplicated and sorted.
inline std::vector<std::vector<ItemId>> observed_from_pairs(const std::vector<std::pair<UserId, ItemId>>& pairs,
                                                            std::size_t num_users) {
  std::vector<std::vector<ItemId>> out(num_users);
  for (auto [u, i] : pairs) {
    if (u >= num_users) throw DataError("observed pair user index out of bounds");
    out[u].push_back(i);
  }
  for (auto& v : out) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  return out;
}

struct SampledSets {
  std::vector<UserId> users;  // selected users, ascending
  std::vector<SetRating> sets;  // rating left at 0
};

/// Picks num_users eligible users without replacement and draws
/// sets_per_user sets of set_size distinct observed items for each.
inline SampledSets sample_sets(const std::vector<std::vector<ItemId>>& observed, std::size_t num_users,
                               std::size_t set_size, std::size_t sets_per_user, std::uint64_t seed) {
  if (set_size == 0) throw std::invalid_argument("sample_sets: set_size must be >= 1");
  std::vector<UserId> eligible;
  for (std::size_t u = 0; u < observed.size(); ++u)
    if (observed[u].size() >= set_size) eligible.push_back(static_cast<UserId>(u));
  if (eligible.size() < num_users)
    throw DataError("sample_sets: only " + std::to_string(eligible.size()) + " users have at least " +
                    std::to_string(set_size) + " observed items, need " + std::to_string(num_users));
  std::mt19937_64 rng(detail::stage_seed(seed, 3));
  for (std::size_t j = 0; j < num_users; ++j) {
    std::uniform_int_distribution<std::size_t> pick(j, eligible.size() - 1);
    std::swap(eligible[j], eligible[pick(rng)]);
  }
  SampledSets out;
  out.users.assign(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(num_users));
  std::sort(out.users.begin(), out.users.end());
  out.sets.reserve(num_users * sets_per_user);
  std::vector<ItemId> pool;
  for (UserId u : out.users) {
    for (std::size_t s = 0; s < sets_per_user; ++s) {
      pool = observed[u];
      for (std::size_t j = 0; j < set_size; ++j) {
        std::uniform_int_distribution<std::size_t> pick(j, pool.size() - 1);
        std::swap(pool[j], pool[pick(rng)]);
      }
      out.sets.push_back(SetRating{u, {pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(set_size)}, 0.0});
    }
  }
  return out;
}

namespace detail {

inline std::vector<double> true_member_ratings(const GroundTruth& gt, const SetRating& s) {
  std::vector<double> x(s.items.size());
  for (std::size_t j = 0; j < x.size(); ++j) x[j] = gt.true_rating(s.user, s.items[j]);
  return x;
}

inline void require_uniform(const std::vector<SetRating>& sets, std::size_t& n) {
  n = 0;
  for (const auto& s : sets) {
    if (n == 0) n = s.items.size();
    else if (s.items.size() != n) throw DataError("rate_sets: mixed set sizes");
  }
}

}  // namespace detail

/// Noiseless ESARM-mode rating of one set for a 1-based subset index.
inline double extremal_rating(const GroundTruth& gt, const SetRating& s, int index) {
  auto x = detail::true_member_ratings(gt, s);
  return extremal_averages(x, s.items).e.at(static_cast<std::size_t>(index - 1));
}

/// Noiseless VOARM-mode rating of one set.
inline double offset_rating(const GroundTruth& gt, const SetRating& s, double beta) {
  auto mom = set_moments(detail::true_member_ratings(gt, s), 0.0);
  return mom.mu + beta * mom.sigma;
}

/// Draws one extremal-subset index per user (recorded in gt) and rates every
/// set by that subset's mean true rating plus N(0, noise_sd^2).
inline RatingsDataset rate_sets_esarm(GroundTruth& gt, std::vector<SetRating> sets, double noise_sd,
                                      std::uint64_t seed) {
  std::size_t n = 0;
  detail::require_uniform(sets, n);
  gt.mode = SynthMode::esarm;
  gt.set_size = n;
  std::mt19937_64 behavior(detail::stage_seed(seed, 4));
  std::mt19937_64 noise(detail::stage_seed(seed, 5));
  std::uniform_int_distribution<int> pick(1, static_cast<int>(extremal_count(std::max<std::size_t>(n, 1))));
  gt.extremal_index.resize(gt.num_users());
  for (auto& idx : gt.extremal_index) idx = pick(behavior);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (auto& s : sets) {
    s.rating = extremal_rating(gt, s, gt.extremal_index[s.user]);
    if (noise_sd > 0.0) s.rating += noise_sd * gauss(noise);
  }
  return make_dataset(gt.num_users(), gt.num_items(), std::move(sets));
}

/// Draws beta_u ~ U[-2, 2] per user (recorded in gt) and rates every set by
/// mu + beta_u sigma of the true member ratings plus N(0, noise_sd^2).
inline RatingsDataset rate_sets_voarm(GroundTruth& gt, std::vector<SetRating> sets, double noise_sd,
                                      std::uint64_t seed) {
  std::size_t n = 0;
  detail::require_uniform(sets, n);
  gt.mode = SynthMode::voarm;
  gt.set_size = n;
  std::mt19937_64 behavior(detail::stage_seed(seed, 4));
  std::mt19937_64 noise(detail::stage_seed(seed, 5));
  std::uniform_real_distribution<double> pick(-2.0, 2.0);
  gt.beta.resize(gt.num_users());
  for (auto& b : gt.beta) b = pick(behavior);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (auto& s : sets) {
    s.rating = offset_rating(gt, s, gt.beta[s.user]);
    if (noise_sd > 0.0) s.rating += noise_sd * gauss(noise);
  }
  return make_dataset(gt.num_users(), gt.num_items(), std::move(sets));
}

/// True ratings of every observed pair plus N(0, noise_sd^2).
inline std::vector<ItemRating> rate_items(const GroundTruth& gt, const std::vector<std::vector<ItemId>>& observed,
                                          double noise_sd, std::uint64_t seed) {
  std::mt19937_64 noise(detail::stage_seed(seed, 6));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<ItemRating> out;
  for (std::size_t u = 0; u < observed.size(); ++u) {
    for (ItemId i : observed[u]) {
      double r = gt.true_rating(static_cast<UserId>(u), i);
      if (noise_sd > 0.0) r += noise_sd * gauss(noise);
      out.push_back(ItemRating{static_cast<UserId>(u), i, r});
    }
  }
  return out;
}

struct SynthConfig {
  SynthMode mode = SynthMode::voarm;
  std::size_t num_users = 1000;   // users in the observation mask
  std::size_t num_items = 2000;
  std::size_t rank = 5;
  std::size_t items_per_user = 200;
  std::size_t selected_users = 1000;
  std::size_t set_size = 5;
  std::size_t sets_per_user = 100;
  double noise_sd = 0.1;
  std::uint64_t seed = 1;
};

struct SyntheticDataset {
  RatingsDataset sets;             // set ratings only
  std::vector<ItemRating> items;   // noisy ratings of every observed pair
  GroundTruth truth;
};

/// Full pipeline. When `observed` is empty a synthetic mask is drawn.
inline SyntheticDataset generate_synthetic(const SynthConfig& cfg,
                                           std::vector<std::vector<ItemId>> observed = {}) {
  SyntheticDataset out;
  out.truth = generate_low_rank(cfg.num_users, cfg.num_items, cfg.rank, cfg.seed);
  if (observed.empty()) observed = synthetic_mask(cfg.num_users, cfg.num_items, cfg.items_per_user, cfg.seed);
  if (observed.size() != cfg.num_users) throw DataError("observed pairs cover a different number of users");
  for (const auto& v : observed)
    for (ItemId i : v)
      if (i >= cfg.num_items) throw DataError("observed pair item index out of bounds");
  SampledSets sampled = sample_sets(observed, cfg.selected_users, cfg.set_size, cfg.sets_per_user, cfg.seed);
  out.truth.selected_users = sampled.users;
  out.sets = cfg.mode == SynthMode::esarm ? rate_sets_esarm(out.truth, std::move(sampled.sets), cfg.noise_sd, cfg.seed)
                                          : rate_sets_voarm(out.truth, std::move(sampled.sets), cfg.noise_sd, cfg.seed);
  out.items = rate_items(out.truth, observed, cfg.noise_sd, cfg.seed);
  return out;
}

/// reps independent datasets with seeds base_seed + j.
inline std::vector<SyntheticDataset> replicate(SynthConfig cfg, std::size_t reps, std::uint64_t base_seed) {
  if (reps == 0) throw std::invalid_argument("replicate: reps must be >= 1");
  std::vector<SyntheticDataset> out;
  out.reserve(reps);
  for (std::size_t j = 0; j < reps; ++j) {
    cfg.seed = base_seed + j;
    out.push_back(generate_synthetic(cfg));
  }
  return out;
}

}  // namespace setrec
