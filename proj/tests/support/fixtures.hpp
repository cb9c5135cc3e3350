#pragma once

// Random model states and small datasets for tests.

#include <random>

#include "setrec/training.hpp"

namespace fixtures {

using namespace setrec;

inline ModelState random_state(Variant v, bool biases, std::size_t num_users, std::size_t num_items, int f,
                               std::size_t set_size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ModelState m;
  m.variant = v;
  m.factors = FactorModel(num_users, num_items, f, biases);
  for (Eigen::Index i = 0; i < m.factors.P.size(); ++i) m.factors.P.data()[i] = gauss(rng);
  for (Eigen::Index i = 0; i < m.factors.Q.size(); ++i) m.factors.Q.data()[i] = gauss(rng);
  if (biases) {
    m.factors.mu = gauss(rng);
    for (Eigen::Index i = 0; i < m.factors.b_user.size(); ++i) m.factors.b_user[i] = gauss(rng);
    for (Eigen::Index i = 0; i < m.factors.b_item.size(); ++i) m.factors.b_item[i] = gauss(rng);
  }
  if (v == Variant::esarm) {
    EsarmParams w;
    w.set_size = set_size;
    w.weights = Matrix(static_cast<Eigen::Index>(num_users), static_cast<Eigen::Index>(extremal_count(set_size)));
    for (Eigen::Index u = 0; u < w.weights.rows(); ++u) {
      double s = 0.0;
      for (Eigen::Index t = 0; t < w.weights.cols(); ++t) s += (w.weights(u, t) = unit(rng));
      w.weights.row(u) /= s;
    }
    m.esarm = w;
  }
  if (v == Variant::voarm) {
    VoarmParams p;
    p.epsilon = 0.1;
    p.beta = Vector(static_cast<Eigen::Index>(num_users));
    for (Eigen::Index u = 0; u < p.beta.size(); ++u) p.beta[u] = 4.0 * unit(rng) - 2.0;
    m.voarm = p;
  }
  return m;
}

inline SetRating random_set(std::size_t num_users, std::size_t num_items, std::size_t n, std::mt19937_64& rng) {
  std::uniform_int_distribution<UserId> pu(0, static_cast<UserId>(num_users - 1));
  std::vector<ItemId> pool(num_items);
  for (std::size_t i = 0; i < num_items; ++i) pool[i] = static_cast<ItemId>(i);
  std::shuffle(pool.begin(), pool.end(), rng);
  std::normal_distribution<double> gauss(0.0, 2.0);
  return SetRating{pu(rng), std::vector<ItemId>(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n)),
                   gauss(rng)};
}

// Singleton item ratings of every (user, item) pair from known rank-f factors.
inline std::vector<ItemRating> low_rank_items(std::size_t nu, std::size_t ni, int f, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Matrix P(static_cast<Eigen::Index>(nu), f), Q(static_cast<Eigen::Index>(ni), f);
  for (Eigen::Index i = 0; i < P.size(); ++i) P.data()[i] = unit(rng);
  for (Eigen::Index i = 0; i < Q.size(); ++i) Q.data()[i] = unit(rng);
  std::vector<ItemRating> out;
  for (std::size_t u = 0; u < nu; ++u)
    for (std::size_t i = 0; i < ni; ++i)
      out.push_back(ItemRating{static_cast<UserId>(u), static_cast<ItemId>(i),
                               P.row(static_cast<Eigen::Index>(u)).dot(Q.row(static_cast<Eigen::Index>(i)))});
  return out;
}

}  // namespace fixtures
