#pragma once

// Closed-form comparison predictors and the set-to-item expansion behind
// MFSET.

#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "setrec/core.hpp"

namespace setrec {

/// Mean of the user's set ratings; the same value is predicted for every
/// set and item of that user.
inline double set_avg_predict(const RatingsDataset& train, UserId u) {
  if (u >= train.num_users || train.user_sets.size() <= u || train.user_sets[u].empty())
    throw DataError("no sets for user " + std::to_string(u));
  double sum = 0.0;
  for (std::size_t k : train.user_sets[u]) sum += train.set_ratings[k].rating;
  return sum / static_cast<double>(train.user_sets[u].size());
}

/// Per-item means over item-level ratings. Items without ratings are NaN.
inline std::vector<double> item_means(const RatingsDataset& train) {
  std::vector<double> sum(train.num_items, 0.0);
  std::vector<std::size_t> cnt(train.num_items, 0);
  for (const auto& r : train.item_ratings) {
    sum[r.item] += r.rating;
    ++cnt[r.item];
  }
  for (std::size_t i = 0; i < sum.size(); ++i)
    sum[i] = cnt[i] ? sum[i] / static_cast<double>(cnt[i]) : std::numeric_limits<double>::quiet_NaN();
  return sum;
}

inline double item_avg_predict(const RatingsDataset& train, ItemId i) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : train.item_ratings)
    if (r.item == i) sum += r.rating, ++n;
  if (n == 0) throw DataError("no ratings for item " + std::to_string(i));
  return sum / static_cast<double>(n);
}

/// Precomputed UserMeanSub: mu_s + mean over raters of (r_ui - user's mean
/// item rating). Users without item ratings never appear as raters.
class UserMeanSub {
 public:
  explicit UserMeanSub(const RatingsDataset& train) {
    if (train.set_ratings.empty()) throw DataError("UserMeanSub needs at least one set rating");
    double s = 0.0;
    for (const auto& r : train.set_ratings) s += r.rating;
    set_mean_ = s / static_cast<double>(train.set_ratings.size());

    std::vector<double> user_sum(train.num_users, 0.0);
    std::vector<std::size_t> user_cnt(train.num_users, 0);
    for (const auto& r : train.item_ratings) {
      user_sum[r.user] += r.rating;
      ++user_cnt[r.user];
    }
    offset_.assign(train.num_items, 0.0);
    count_.assign(train.num_items, 0);
    for (const auto& r : train.item_ratings) {
      const double user_mean = user_sum[r.user] / static_cast<double>(user_cnt[r.user]);
      offset_[r.item] += r.rating - user_mean;
      ++count_[r.item];
    }
  }

  bool known(ItemId i) const { return i < count_.size() && count_[i] > 0; }
  double set_mean() const { return set_mean_; }

  double predict(ItemId i) const {
    if (!known(i)) throw DataError("no ratings for item " + std::to_string(i));
    return set_mean_ + offset_[i] / static_cast<double>(count_[i]);
  }

 private:
  double set_mean_ = 0.0;
  std::vector<double> offset_;
  std::vector<std::size_t> count_;
};

inline double user_mean_sub_predict(const RatingsDataset& train, ItemId i) {
  return UserMeanSub(train).predict(i);
}

/// Copies each set's rating onto every member item.
inline std::vector<ItemRating> expand_sets_to_items(const std::vector<SetRating>& sets) {
  std::vector<ItemRating> out;
  std::size_t total = 0;
  for (const auto& s : sets) total += s.items.size();
  out.reserve(total);
  for (const auto& s : sets)
    for (ItemId i : s.items) out.push_back(ItemRating{s.user, i, s.rating});
  return out;
}

}  // namespace setrec
