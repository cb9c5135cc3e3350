#pragma once

// Domain types shared by every setrec module: ratings on items and on sets of
// items, the unified dataset container, latent-factor models and the
// per-variant set-model parameters.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace setrec {

using UserId = std::uint32_t;
using ItemId = std::uint32_t;

/// Row-major so that p_u / q_i are contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Malformed or inconsistent input data (CLI exit code 2).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Divergence, solver failure or other numerical breakdown (CLI exit code 3).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ItemRating {
  UserId user = 0;
  ItemId item = 0;
  double rating = 0.0;

  friend bool operator==(const ItemRating&, const ItemRating&) = default;
};

struct SetRating {
  UserId user = 0;
  std::vector<ItemId> items;
  double rating = 0.0;

  std::size_t size() const { return items.size(); }
  bool singleton() const { return items.size() == 1; }

  friend bool operator==(const SetRating&, const SetRating&) = default;
};

/// Set-level and item-level ratings plus per-user indices into both lists.
///
/// The per-user index is derived state; call reindex() after mutating the
/// flat lists directly (make_dataset does it for you).
struct RatingsDataset {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::vector<SetRating> set_ratings;
  std::vector<ItemRating> item_ratings;
  std::vector<std::vector<std::size_t>> user_sets;   // user -> indices into set_ratings
  std::vector<std::vector<std::size_t>> user_items;  // user -> indices into item_ratings

  void reindex() {
    user_sets.assign(num_users, {});
    user_items.assign(num_users, {});
    for (std::size_t k = 0; k < set_ratings.size(); ++k) {
      if (set_ratings[k].user < num_users) user_sets[set_ratings[k].user].push_back(k);
    }
    for (std::size_t k = 0; k < item_ratings.size(); ++k) {
      if (item_ratings[k].user < num_users) user_items[item_ratings[k].user].push_back(k);
    }
  }

  bool empty() const { return set_ratings.empty() && item_ratings.empty(); }

  friend bool operator==(const RatingsDataset& a, const RatingsDataset& b) {
    return a.num_users == b.num_users && a.num_items == b.num_items &&
           a.set_ratings == b.set_ratings && a.item_ratings == b.item_ratings;
  }
};

inline RatingsDataset make_dataset(std::size_t num_users, std::size_t num_items,
                                   std::vector<SetRating> sets,
                                   std::vector<ItemRating> items = {}) {
  RatingsDataset d;
  d.num_users = num_users;
  d.num_items = num_items;
  d.set_ratings = std::move(sets);
  d.item_ratings = std::move(items);
  d.reindex();
  return d;
}

/// Smallest (num_users, num_items) that covers every index in the lists.
inline std::pair<std::size_t, std::size_t> infer_dimensions(const std::vector<SetRating>& sets,
                                                            const std::vector<ItemRating>& items) {
  std::size_t nu = 0, ni = 0;
  for (const auto& s : sets) {
    nu = std::max<std::size_t>(nu, s.user + 1);
    for (ItemId i : s.items) ni = std::max<std::size_t>(ni, i + 1);
  }
  for (const auto& r : items) {
    nu = std::max<std::size_t>(nu, r.user + 1);
    ni = std::max<std::size_t>(ni, r.item + 1);
  }
  return {nu, ni};
}

/// Bitwise-style equality that also tolerates differing shapes.
template <class Derived>
bool equal_exact(const Eigen::DenseBase<Derived>& a, const Eigen::DenseBase<Derived>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  return a.size() == 0 || (a.derived().array() == b.derived().array()).all();
}

/// Latent factors p_u (rows of P) and q_i (rows of Q) with optional biases.
struct FactorModel {
  Matrix P;
  Matrix Q;
  bool use_biases = false;
  double mu = 0.0;
  Vector b_user;
  Vector b_item;

  FactorModel() = default;
  FactorModel(std::size_t num_users, std::size_t num_items, int f, bool biases = false)
      : P(Matrix::Zero(static_cast<Eigen::Index>(num_users), f)),
        Q(Matrix::Zero(static_cast<Eigen::Index>(num_items), f)),
        use_biases(biases),
        b_user(Vector::Zero(biases ? static_cast<Eigen::Index>(num_users) : 0)),
        b_item(Vector::Zero(biases ? static_cast<Eigen::Index>(num_items) : 0)) {}

  std::size_t num_users() const { return static_cast<std::size_t>(P.rows()); }
  std::size_t num_items() const { return static_cast<std::size_t>(Q.rows()); }
  int factors() const { return static_cast<int>(P.cols()); }

  bool all_finite() const {
    return P.allFinite() && Q.allFinite() && std::isfinite(mu) && b_user.allFinite() &&
           b_item.allFinite();
  }

  bool consistent() const {
    if (P.cols() < 1 || P.cols() != Q.cols()) return false;
    if (!use_biases) return true;
    return b_user.size() == P.rows() && b_item.size() == Q.rows();
  }

  friend bool operator==(const FactorModel& a, const FactorModel& b) {
    return equal_exact(a.P, b.P) && equal_exact(a.Q, b.Q) && a.use_biases == b.use_biases &&
           a.mu == b.mu && equal_exact(a.b_user, b.b_user) && equal_exact(a.b_item, b.b_item);
  }
};

/// Number of extremal subsets of a set with n members.
constexpr std::size_t extremal_count(std::size_t set_size) { return 2 * set_size - 1; }

/// Per-user weights over the 2n_s-1 extremal subsets (row u = w_u).
struct EsarmParams {
  Matrix weights;
  double peak_floor = 0.0;
  std::size_t set_size = 1;

  friend bool operator==(const EsarmParams& a, const EsarmParams& b) {
    return equal_exact(a.weights, b.weights) && a.peak_floor == b.peak_floor &&
           a.set_size == b.set_size;
  }
};

/// Per-user pickiness and the standard-deviation smoothing constant.
struct VoarmParams {
  Vector beta;
  double epsilon = 0.0;

  friend bool operator==(const VoarmParams& a, const VoarmParams& b) {
    return equal_exact(a.beta, b.beta) && a.epsilon == b.epsilon;
  }
};

/// Hyperparameters of one training run.
struct ExperimentConfig {
  double eta = 0.005;
  double lambda = 0.01;
  int f = 5;
  double epsilon = 0.1;
  double c = 0.0;
  int max_iter = 100;
  int patience = 3;
  std::uint64_t seed = 1;
  bool use_biases = false;

  // Step size for the pickiness update; unset means eta.
  std::optional<double> eta_beta;
  // Fixed initial pickiness for every user instead of U[0,1].
  std::optional<double> beta_init;
  // ESARM: run the per-user weight refresh after every factor pass.
  bool refresh_weights = true;

  void validate() const {
    // eta == 0 is allowed so a run can be frozen for diagnostics.
    if (!(eta >= 0.0)) throw std::invalid_argument("eta must be >= 0");
    if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
    if (f < 1) throw std::invalid_argument("latent dimension f must be >= 1");
    if (!(epsilon >= 0.0)) throw std::invalid_argument("epsilon must be >= 0");
    if (!(c >= 0.0 && c <= 1.0)) throw std::invalid_argument("peak floor c must lie in [0,1]");
    if (max_iter < 1) throw std::invalid_argument("max_iter must be >= 1");
    if (patience < 1) throw std::invalid_argument("patience must be >= 1");
  }

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

struct ValidationReport {
  std::vector<std::string> errors;
  bool ok() const { return errors.empty(); }
};

/// Checks every structural invariant of d and lists all violations.
inline ValidationReport validate_dataset(const RatingsDataset& d) {
  ValidationReport rep;
  auto where = [](const char* kind, std::size_t k) {
    return std::string(kind) + " #" + std::to_string(k) + ": ";
  };
  for (std::size_t k = 0; k < d.set_ratings.size(); ++k) {
    const auto& s = d.set_ratings[k];
    if (s.user >= d.num_users) rep.errors.push_back(where("set", k) + "user index out of bounds");
    if (s.items.empty()) rep.errors.push_back(where("set", k) + "empty item list");
    if (!std::isfinite(s.rating)) rep.errors.push_back(where("set", k) + "non-finite rating");
    std::unordered_set<ItemId> seen;
    bool oob = false, dup = false;
    for (ItemId i : s.items) {
      if (i >= d.num_items) oob = true;
      if (!seen.insert(i).second) dup = true;
    }
    if (oob) rep.errors.push_back(where("set", k) + "item index out of bounds");
    if (dup) rep.errors.push_back(where("set", k) + "duplicate item in set");
  }
  for (std::size_t k = 0; k < d.item_ratings.size(); ++k) {
    const auto& r = d.item_ratings[k];
    if (r.user >= d.num_users) rep.errors.push_back(where("item_rating", k) + "user index out of bounds");
    if (r.item >= d.num_items) rep.errors.push_back(where("item_rating", k) + "item index out of bounds");
    if (!std::isfinite(r.rating)) rep.errors.push_back(where("item_rating", k) + "non-finite rating");
  }

  // The per-user index must mirror the flat lists exactly.
  bool index_ok = d.user_sets.size() == d.num_users && d.user_items.size() == d.num_users;
  if (index_ok) {
    std::size_t total_sets = 0, total_items = 0;
    for (std::size_t u = 0; u < d.num_users && index_ok; ++u) {
      for (std::size_t k : d.user_sets[u]) {
        if (k >= d.set_ratings.size() || d.set_ratings[k].user != u) index_ok = false;
      }
      for (std::size_t k : d.user_items[u]) {
        if (k >= d.item_ratings.size() || d.item_ratings[k].user != u) index_ok = false;
      }
      total_sets += d.user_sets[u].size();
      total_items += d.user_items[u].size();
    }
    if (total_sets != d.set_ratings.size() || total_items != d.item_ratings.size()) index_ok = false;
  }
  if (!index_ok) rep.errors.push_back("per-user index does not match the rating lists");
  return rep;
}

inline void require_valid(const RatingsDataset& d, const std::string& what = "dataset") {
  auto rep = validate_dataset(d);
  if (rep.ok()) return;
  std::string msg = what + " is invalid: " + rep.errors.front();
  if (rep.errors.size() > 1) msg += " (+" + std::to_string(rep.errors.size() - 1) + " more)";
  throw DataError(msg);
}

/// Each item rating becomes a set of size one.
inline std::vector<SetRating> singletonize(const std::vector<ItemRating>& items) {
  std::vector<SetRating> out;
  out.reserve(items.size());
  for (const auto& r : items) out.push_back(SetRating{r.user, {r.item}, r.rating});
  return out;
}

/// All set ratings followed by the item ratings as singleton sets: the
/// sample list every set-model trainer iterates over.
inline std::vector<SetRating> training_samples(const RatingsDataset& d) {
  std::vector<SetRating> out = d.set_ratings;
  auto single = singletonize(d.item_ratings);
  out.insert(out.end(), std::make_move_iterator(single.begin()),
             std::make_move_iterator(single.end()));
  return out;
}

/// Common size of all non-singleton sets, or nullopt if there are none.
/// Throws DataError on mixed sizes.
inline std::optional<std::size_t> uniform_set_size(const std::vector<SetRating>& sets) {
  std::optional<std::size_t> n;
  for (const auto& s : sets) {
    if (s.items.size() <= 1) continue;
    if (!n) n = s.items.size();
    else if (*n != s.items.size())
      throw DataError("mixed set sizes: found " + std::to_string(*n) + " and " +
                      std::to_string(s.items.size()));
  }
  return n;
}

/// Mean of all set and item ratings; 0 for an empty dataset.
inline double global_mean(const RatingsDataset& d) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& s : d.set_ratings) sum += s.rating, ++n;
  for (const auto& r : d.item_ratings) sum += r.rating, ++n;
  return n ? sum / static_cast<double>(n) : 0.0;
}

/// Mean of the set ratings, or global_mean when there are none.
inline double set_rating_mean(const RatingsDataset& d) {
  if (d.set_ratings.empty()) return global_mean(d);
  double sum = 0.0;
  for (const auto& s : d.set_ratings) sum += s.rating;
  return sum / static_cast<double>(d.set_ratings.size());
}

/// Packs a (user, item) pair into one hashable key.
constexpr std::uint64_t pair_key(UserId u, ItemId i) {
  return (static_cast<std::uint64_t>(u) << 32) | static_cast<std::uint64_t>(i);
}

}  // namespace setrec
