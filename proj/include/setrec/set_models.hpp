#pragma once

// Forward models: item-level estimates from latent factors and the three
// ways of turning a set's item estimates into a set rating (plain mean,
// weighted extremal-subset averages, mean offset by scaled spread).

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "setrec/core.hpp"

namespace setrec {

namespace detail {

// Fixed left-to-right summation so every code path that forms p_u.q_i gets the
// same bits.
inline double dot_row(const Matrix& A, Eigen::Index a, const Matrix& B, Eigen::Index b) {
  const double* x = A.row(a).data();
  const double* y = B.row(b).data();
  double s = 0.0;
  for (Eigen::Index k = 0; k < A.cols(); ++k) s += x[k] * y[k];
  return s;
}

}  // namespace detail

inline double predict_item(const FactorModel& m, UserId u, ItemId i) {
  if (u >= m.num_users() || i >= m.num_items())
    throw std::out_of_range("predict_item: index out of bounds (user " + std::to_string(u) +
                            ", item " + std::to_string(i) + ")");
  double r = detail::dot_row(m.P, u, m.Q, i);
  if (m.use_biases) r += m.mu + m.b_user[u] + m.b_item[i];
  return r;
}

/// Item estimates for every member of s, in set order.
inline void item_estimates(const FactorModel& m, const SetRating& s, std::vector<double>& out) {
  out.resize(s.items.size());
  for (std::size_t j = 0; j < s.items.size(); ++j) out[j] = predict_item(m, s.user, s.items[j]);
}

inline std::vector<double> item_estimates(const FactorModel& m, const SetRating& s) {
  std::vector<double> out;
  item_estimates(m, s, out);
  return out;
}

struct ExtremalAverages {
  std::vector<double> e;             // 2n-1 extremal-subset means
  std::vector<std::size_t> ordering;  // member positions, ascending by rating
};

/// Positions of `ratings` sorted ascending; ties go to the smaller item id
/// (or smaller position when no ids are given).
inline void ascending_order(std::span<const double> ratings, std::span<const ItemId> items,
                            std::vector<std::size_t>& order) {
  order.resize(ratings.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (ratings[a] != ratings[b]) return ratings[a] < ratings[b];
    if (!items.empty()) return items[a] < items[b];
    return a < b;
  });
}

/// e_t (0-based t) for t < n is the mean of the t+1 lowest ratings; for
/// t >= n-1 it is the mean of the 2n-1-t highest. e_{n-1} is the full mean.
inline void extremal_averages_sorted(std::span<const double> sorted, std::vector<double>& e) {
  const std::size_t n = sorted.size();
  e.resize(extremal_count(n));
  double acc = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    acc += sorted[t];
    e[t] = acc / static_cast<double>(t + 1);
  }
  acc = 0.0;
  for (std::size_t h = 1; h < n; ++h) {
    acc += sorted[n - h];
    e[2 * n - 1 - h] = acc / static_cast<double>(h);
  }
}

inline ExtremalAverages extremal_averages(std::span<const double> ratings,
                                          std::span<const ItemId> items = {}) {
  if (ratings.empty()) throw std::invalid_argument("extremal_averages: empty rating vector");
  ExtremalAverages out;
  ascending_order(ratings, items, out.ordering);
  std::vector<double> sorted(ratings.size());
  for (std::size_t j = 0; j < ratings.size(); ++j) sorted[j] = ratings[out.ordering[j]];
  extremal_averages_sorted(sorted, out.e);
  return out;
}

struct SetMoments {
  double mu = 0.0;
  double sigma = 0.0;           // population standard deviation
  double sigma_smoothed = 0.0;  // epsilon + sigma
};

inline SetMoments set_moments(std::span<const double> ratings, double epsilon) {
  SetMoments m;
  if (ratings.empty()) return m;
  const double n = static_cast<double>(ratings.size());
  double sum = 0.0;
  for (double x : ratings) sum += x;
  m.mu = sum / n;
  double ss = 0.0;
  for (double x : ratings) ss += (x - m.mu) * (x - m.mu);
  m.sigma = std::sqrt(ss / n);
  m.sigma_smoothed = epsilon + m.sigma;
  return m;
}

inline SetMoments set_moments(const FactorModel& m, const SetRating& s, double epsilon) {
  return set_moments(item_estimates(m, s), epsilon);
}

// --- Set responses with their sensitivities -------------------------------
//
// Each response maps the member estimates x to a set rating r(x) and fills
// d[j] = dr/dx_j. Trainers chain d through x_j = p_u.q_j (+ biases), so one
// gradient path serves all variants.

struct SetResponse {
  double value = 0.0;
  std::vector<double> d;
  double d_beta = 0.0;  // VOARM only: dr/dbeta = sigma_smoothed
  double sigma = 0.0;   // VOARM only: unsmoothed spread
  std::vector<std::size_t> ordering;  // ESARM only
};

inline void arm_response(std::span<const double> x, SetResponse& out) {
  const std::size_t n = x.size();
  double sum = 0.0;
  for (double v : x) sum += v;
  out.value = sum / static_cast<double>(n);
  out.d.assign(n, 1.0 / static_cast<double>(n));
  out.d_beta = 0.0;
}

/// w has 2n-1 entries for an n-member set. Singletons ignore w.
inline void esarm_response(std::span<const double> x, std::span<const ItemId> items,
                           std::span<const double> w, SetResponse& out) {
  const std::size_t n = x.size();
  out.d_beta = 0.0;
  if (n == 1) {
    out.value = x[0];
    out.d.assign(1, 1.0);
    out.ordering.assign(1, 0);
    return;
  }
  if (w.size() != extremal_count(n))
    throw std::invalid_argument("esarm: set of size " + std::to_string(n) + " needs " +
                                std::to_string(extremal_count(n)) + " weights, got " +
                                std::to_string(w.size()));
  ascending_order(x, items, out.ordering);
  std::vector<double> sorted(n), e;
  for (std::size_t j = 0; j < n; ++j) sorted[j] = x[out.ordering[j]];
  extremal_averages_sorted(sorted, e);
  double r = 0.0;
  for (std::size_t t = 0; t < e.size(); ++t) r += w[t] * e[t];
  out.value = r;

  // Sorted position j sits in low subset t iff j <= t (t < n), and in high
  // subset t iff j >= t+1-n (t >= n).
  out.d.assign(n, 0.0);
  double low_tail = 0.0;
  std::vector<double> by_rank(n, 0.0);
  for (std::size_t j = n; j-- > 0;) {
    low_tail += w[j] / static_cast<double>(j + 1);
    by_rank[j] = low_tail;
  }
  double high_head = 0.0;
  for (std::size_t j = 1; j < n; ++j) {
    const std::size_t t = j + n - 1;
    high_head += w[t] / static_cast<double>(2 * n - 1 - t);
    by_rank[j] += high_head;
  }
  for (std::size_t j = 0; j < n; ++j) out.d[out.ordering[j]] = by_rank[j];
}

/// Mean plus beta times the smoothed spread. The spread term is dropped from
/// d when sigma == 0 (its subgradient there is taken as zero).
inline void voarm_response(std::span<const double> x, double beta, double epsilon,
                           SetResponse& out) {
  const std::size_t n = x.size();
  const double nn = static_cast<double>(n);
  SetMoments mom = set_moments(x, epsilon);
  out.value = mom.mu + beta * mom.sigma_smoothed;
  out.sigma = mom.sigma;
  out.d_beta = mom.sigma_smoothed;
  out.d.assign(n, 1.0 / nn);
  if (mom.sigma > 0.0) {
    for (std::size_t j = 0; j < n; ++j)
      out.d[j] = 1.0 / nn + beta * (x[j] - mom.mu) / (nn * mom.sigma);
  }
}

// --- Set predictors --------------------------------------------------------

inline double predict_set_arm(const FactorModel& m, const SetRating& s) {
  auto x = item_estimates(m, s);
  SetResponse r;
  arm_response(x, r);
  return r.value;
}

inline std::span<const double> weight_row(const EsarmParams& w, UserId u) {
  if (u >= static_cast<std::size_t>(w.weights.rows()))
    throw std::out_of_range("esarm weights: user index out of bounds");
  return {w.weights.row(u).data(), static_cast<std::size_t>(w.weights.cols())};
}

inline double predict_set_esarm(const FactorModel& m, const EsarmParams& w, const SetRating& s) {
  if (s.items.size() != 1 && s.items.size() != w.set_size)
    throw std::invalid_argument("predict_set_esarm: set size " + std::to_string(s.items.size()) +
                                " does not match model set size " + std::to_string(w.set_size));
  auto x = item_estimates(m, s);
  SetResponse r;
  esarm_response(x, s.items, s.items.size() == 1 ? std::span<const double>{} : weight_row(w, s.user),
                 r);
  return r.value;
}

inline double predict_set_voarm(const FactorModel& m, const VoarmParams& v, const SetRating& s) {
  if (s.user >= static_cast<std::size_t>(v.beta.size()))
    throw std::out_of_range("voarm params: user index out of bounds");
  auto x = item_estimates(m, s);
  SetResponse r;
  voarm_response(x, v.beta[s.user], v.epsilon, r);
  return r.value;
}

}  // namespace setrec
