#pragma once

// Descriptive statistics of how users rate sets relative to the items in
// them, and the fit of each set-rating model when true item ratings are
// known.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "setrec/core.hpp"
#include "setrec/set_models.hpp"

namespace setrec {

using ItemRatingLookup = std::unordered_map<std::uint64_t, double>;

inline ItemRatingLookup make_lookup(const std::vector<ItemRating>& items) {
  ItemRatingLookup out;
  out.reserve(items.size());
  for (const auto& r : items) out[pair_key(r.user, r.item)] = r.rating;
  return out;
}

/// A set rating together with the user's own ratings of its members.
struct ObservedSet {
  UserId user = 0;
  double set_rating = 0.0;
  std::vector<double> item_ratings;  // set order
};

inline ObservedSet observe(const SetRating& s, const ItemRatingLookup& lookup) {
  ObservedSet o{s.user, s.rating, {}};
  o.item_ratings.reserve(s.items.size());
  for (ItemId i : s.items) {
    auto it = lookup.find(pair_key(s.user, i));
    if (it == lookup.end())
      throw DataError("user " + std::to_string(s.user) + " has no rating for member item " + std::to_string(i));
    o.item_ratings.push_back(it->second);
  }
  if (o.item_ratings.empty()) throw DataError("empty item list");
  return o;
}

/// Positive when the set is rated below the mean of its members.
inline double mrd(const ObservedSet& o) {
  return set_moments(o.item_ratings, 0.0).mu - o.set_rating;
}
inline double mrd(const SetRating& s, const ItemRatingLookup& lookup) { return mrd(observe(s, lookup)); }

inline double set_diversity(const ObservedSet& o) { return set_moments(o.item_ratings, 0.0).sigma; }
inline double set_diversity(const SetRating& s, const ItemRatingLookup& lookup) {
  return set_diversity(observe(s, lookup));
}

/// Mean standardized offset (r - mu) / sigma over sets with sigma >= min_sigma.
inline double pickiness(const std::vector<ObservedSet>& sets, double min_sigma, std::size_t* used = nullptr) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& o : sets) {
    auto m = set_moments(o.item_ratings, 0.0);
    if (m.sigma < min_sigma || m.sigma <= 0.0) continue;
    sum += (o.set_rating - m.mu) / m.sigma;
    ++n;
  }
  if (used) *used = n;
  if (n == 0) throw DataError("pickiness: no set meets the minimum spread");
  return sum / static_cast<double>(n);
}

struct ExtremalFit {
  std::size_t best_index = 0;  // 1-based
  std::vector<double> rmse;    // rmse[t] for index t+1
};

/// Scores every extremal subset as the user's sole rule; ties keep the
/// smaller index.
inline ExtremalFit fit_extremal_subset(const std::vector<ObservedSet>& sets) {
  if (sets.empty()) throw DataError("fit_extremal_subset: no sets");
  const std::size_t n = sets.front().item_ratings.size();
  if (n == 0) throw DataError("empty item list");
  ExtremalFit fit;
  fit.rmse.assign(extremal_count(n), 0.0);
  for (const auto& o : sets) {
    if (o.item_ratings.size() != n) throw DataError("fit_extremal_subset: sets of mixed size");
    auto ea = extremal_averages(o.item_ratings);
    for (std::size_t t = 0; t < ea.e.size(); ++t) fit.rmse[t] += (ea.e[t] - o.set_rating) * (ea.e[t] - o.set_rating);
  }
  for (double& v : fit.rmse) v = std::sqrt(v / static_cast<double>(sets.size()));
  fit.best_index = 1 + static_cast<std::size_t>(std::min_element(fit.rmse.begin(), fit.rmse.end()) - fit.rmse.begin());
  return fit;
}

using GenreTable = std::map<ItemId, std::set<std::string>>;

inline double avg_jaccard(const GenreTable& genres, const std::vector<ItemId>& items) {
  if (items.size() < 2) throw std::invalid_argument("avg_jaccard: need at least two items");
  std::vector<const std::set<std::string>*> g;
  for (ItemId i : items) {
    auto it = genres.find(i);
    if (it == genres.end() || it->second.empty())
      throw DataError("avg_jaccard: item " + std::to_string(i) + " has no genres");
    g.push_back(&it->second);
  }
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < g.size(); ++a)
    for (std::size_t b = a + 1; b < g.size(); ++b) {
      std::size_t inter = 0;
      for (const auto& x : *g[a]) inter += g[b]->count(x);
      const std::size_t uni = g[a]->size() + g[b]->size() - inter;
      sum += static_cast<double>(inter) / static_cast<double>(uni);
      ++pairs;
    }
  return sum / static_cast<double>(pairs);
}

struct UnderOver {
  UserId user = 0;
  std::size_t n_sets = 0;
  double frac_under = 0.0;
  double frac_over = 0.0;
};

struct UnderOverResult {
  std::vector<UnderOver> observed;
  std::vector<UnderOver> permuted;  // empty unless requested
};

/// Under-rated when MRD > margin, over-rated when MRD < -margin. The permuted
/// population reassigns all labels across users at random, keeping each
/// user's set count and the global label counts.
inline UnderOverResult under_over_fractions(const std::map<UserId, std::vector<double>>& mrds, double margin = 0.5,
                                            bool permute = false, std::uint64_t seed = 1,
                                            std::size_t min_sets = 1) {
  UnderOverResult out;
  std::vector<int> labels;
  std::vector<std::pair<UserId, std::size_t>> users;
  for (const auto& [u, v] : mrds) {
    if (v.size() < std::max<std::size_t>(min_sets, 1)) continue;
    UnderOver uo{u, v.size(), 0.0, 0.0};
    for (double d : v) {
      const int lab = d > margin ? 1 : (d < -margin ? -1 : 0);
      labels.push_back(lab);
      uo.frac_under += lab == 1;
      uo.frac_over += lab == -1;
    }
    uo.frac_under /= static_cast<double>(v.size());
    uo.frac_over /= static_cast<double>(v.size());
    out.observed.push_back(uo);
    users.emplace_back(u, v.size());
  }
  if (permute) {
    std::mt19937_64 rng(seed);
    std::shuffle(labels.begin(), labels.end(), rng);
    std::size_t pos = 0;
    for (auto [u, n] : users) {
      UnderOver uo{u, n, 0.0, 0.0};
      for (std::size_t k = 0; k < n; ++k, ++pos) {
        uo.frac_under += labels[pos] == 1;
        uo.frac_over += labels[pos] == -1;
      }
      uo.frac_under /= static_cast<double>(n);
      uo.frac_over /= static_cast<double>(n);
      out.permuted.push_back(uo);
    }
  }
  return out;
}

struct HistogramBin {
  double low = 0.0;
  double high = 0.0;
  std::size_t count = 0;
};

/// Equal-width bins over [low, high]; values outside are dropped and the top
/// edge belongs to the last bin.
inline std::vector<HistogramBin> histogram(const std::vector<double>& values, std::size_t bins, double low,
                                           double high) {
  if (bins == 0 || !(high > low)) throw std::invalid_argument("histogram: need bins > 0 and high > low");
  std::vector<HistogramBin> out(bins);
  const double width = (high - low) / static_cast<double>(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    out[b].low = low + width * static_cast<double>(b);
    out[b].high = b + 1 == bins ? high : low + width * static_cast<double>(b + 1);
  }
  for (double v : values) {
    if (!(v >= low && v <= high)) continue;
    auto b = static_cast<std::size_t>((v - low) / width);
    out[std::min(b, bins - 1)].count++;
  }
  return out;
}

inline std::vector<HistogramBin> histogram(const std::vector<double>& values, std::size_t bins) {
  if (values.empty()) throw std::invalid_argument("histogram: no values");
  auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  return histogram(values, bins, *lo, *hi > *lo ? *hi : *lo + 1.0);
}

struct UserBehaviorProfile {
  UserId user = 0;
  double pickiness = 0.0;
  std::size_t best_extremal_index = 0;
  double best_extremal_rmse = 0.0;
  std::size_t n_sets_used = 0;
};

struct ProfileOptions {
  double min_sigma = 0.5;
  std::size_t min_sets = 20;
};

/// Per user: the sets with member spread >= min_sigma whose members all have
/// item ratings, kept when there are at least min_sets of them.
inline std::map<UserId, std::vector<ObservedSet>> qualifying_sets(const std::vector<SetRating>& sets,
                                                                  const ItemRatingLookup& lookup,
                                                                  const ProfileOptions& opt = {}) {
  std::map<UserId, std::vector<ObservedSet>> by_user;
  for (const auto& s : sets) {
    bool known = !s.items.empty();
    for (ItemId i : s.items) known = known && lookup.count(pair_key(s.user, i));
    if (!known) continue;
    ObservedSet o = observe(s, lookup);
    if (set_diversity(o) < opt.min_sigma) continue;
    by_user[s.user].push_back(std::move(o));
  }
  for (auto it = by_user.begin(); it != by_user.end();)
    it = it->second.size() < std::max<std::size_t>(opt.min_sets, 1) ? by_user.erase(it) : std::next(it);
  return by_user;
}

inline UserBehaviorProfile profile_user(UserId u, const std::vector<ObservedSet>& sets, double min_sigma) {
  UserBehaviorProfile p;
  p.user = u;
  p.pickiness = pickiness(sets, min_sigma, &p.n_sets_used);
  auto fit = fit_extremal_subset(sets);
  p.best_extremal_index = fit.best_index;
  p.best_extremal_rmse = fit.rmse[fit.best_index - 1];
  return p;
}

inline std::vector<UserBehaviorProfile> profile_users(const std::map<UserId, std::vector<ObservedSet>>& by_user,
                                                      double min_sigma = 0.5) {
  std::vector<UserBehaviorProfile> out;
  for (const auto& [u, v] : by_user) out.push_back(profile_user(u, v, min_sigma));
  return out;
}

struct ModelFit {
  double arm = 0.0;
  double esarm = 0.0;
  double voarm = 0.0;
  std::size_t n_sets = 0;
  std::size_t n_users = 0;
};

/// Set-rating RMSE of each model with true member ratings as item estimates
/// and each user's fitted behaviour (best extremal index, pickiness).
inline ModelFit model_fit_rmse(const std::map<UserId, std::vector<ObservedSet>>& by_user,
                               const std::vector<UserBehaviorProfile>& profiles) {
  std::map<UserId, const UserBehaviorProfile*> prof;
  for (const auto& p : profiles) prof[p.user] = &p;
  ModelFit fit;
  double sa = 0.0, se = 0.0, sv = 0.0;
  for (const auto& [u, sets] : by_user) {
    auto it = prof.find(u);
    if (it == prof.end()) throw DataError("model_fit_rmse: no profile for user " + std::to_string(u));
    const auto& p = *it->second;
    ++fit.n_users;
    for (const auto& o : sets) {
      auto m = set_moments(o.item_ratings, 0.0);
      auto ea = extremal_averages(o.item_ratings);
      if (p.best_extremal_index < 1 || p.best_extremal_index > ea.e.size())
        throw DataError("model_fit_rmse: extremal index out of range for user " + std::to_string(u));
      const double ra = m.mu - o.set_rating;
      const double re = ea.e[p.best_extremal_index - 1] - o.set_rating;
      const double rv = m.mu + p.pickiness * m.sigma - o.set_rating;
      sa += ra * ra;
      se += re * re;
      sv += rv * rv;
      ++fit.n_sets;
    }
  }
  if (fit.n_sets == 0) throw DataError("model_fit_rmse: no sets");
  const double n = static_cast<double>(fit.n_sets);
  fit.arm = std::sqrt(sa / n);
  fit.esarm = std::sqrt(se / n);
  fit.voarm = std::sqrt(sv / n);
  return fit;
}

struct PickySplit {
  std::size_t picky = 0;
  std::size_t non_picky = 0;
};

/// Users with |pickiness| above the threshold are picky.
inline PickySplit picky_split(const std::vector<UserBehaviorProfile>& profiles, double threshold = 0.5) {
  PickySplit s;
  for (const auto& p : profiles) (std::abs(p.pickiness) > threshold ? s.picky : s.non_picky)++;
  return s;
}

}  // namespace setrec
