#pragma once

// Train/validation/test splitting, error metrics, recovery scores for
// synthetic ground truth, predictors for every compared method, and grid
// search over training configurations.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <mutex>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include "setrec/baselines.hpp"
#include "setrec/core.hpp"
#include "setrec/synthgen.hpp"
#include "setrec/training.hpp"

namespace setrec {

// --- Splits ----------------------------------------------------------------

struct SplitSpec {
  std::size_t val_sets_per_user = 5;
  std::size_t test_sets_per_user = 5;
  std::uint64_t seed = 1;
};

struct Split {
  RatingsDataset train;
  RatingsDataset val;
  std::vector<SetRating> test_sets;
  std::vector<ItemRating> test_items;
};

/// Per user with more than val+test sets: val and test sets drawn without
/// replacement, the rest (and all of the user's item ratings) to train.
/// test_items are the user's entries of full_items whose item occurs in none
/// of the user's sets. Users with too few sets stay entirely in train.
inline Split split(const RatingsDataset& data, const std::vector<ItemRating>& full_items, const SplitSpec& spec) {
  require_valid(data, "split input");
  Split out;
  std::vector<SetRating> train_sets, val_sets;
  std::vector<char> contributes(data.num_users, 0);
  std::mt19937_64 rng(spec.seed);
  const std::size_t held = spec.val_sets_per_user + spec.test_sets_per_user;

  for (std::size_t u = 0; u < data.num_users; ++u) {
    std::vector<std::size_t> idx = data.user_sets[u];
    if (idx.size() <= held) {
      for (std::size_t k : idx) train_sets.push_back(data.set_ratings[k]);
      continue;
    }
    contributes[u] = 1;
    for (std::size_t j = 0; j < held; ++j) {
      std::uniform_int_distribution<std::size_t> pick(j, idx.size() - 1);
      std::swap(idx[j], idx[pick(rng)]);
    }
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const SetRating& s = data.set_ratings[idx[j]];
      if (j < spec.val_sets_per_user) val_sets.push_back(s);
      else if (j < held) out.test_sets.push_back(s);
      else train_sets.push_back(s);
    }
  }

  std::unordered_set<std::uint64_t> in_sets;
  for (const auto& s : data.set_ratings)
    for (ItemId i : s.items) in_sets.insert(pair_key(s.user, i));
  for (const auto& r : full_items) {
    if (r.user >= data.num_users || !contributes[r.user]) continue;
    if (in_sets.count(pair_key(r.user, r.item))) continue;
    out.test_items.push_back(r);
  }

  out.train = make_dataset(data.num_users, data.num_items, std::move(train_sets), data.item_ratings);
  out.val = make_dataset(data.num_users, data.num_items, std::move(val_sets));
  return out;
}

// --- Metrics ---------------------------------------------------------------

inline double rmse(const std::vector<double>& pred, const std::vector<double>& actual) {
  if (pred.size() != actual.size()) throw std::invalid_argument("rmse: length mismatch");
  if (pred.empty()) throw std::invalid_argument("rmse: empty input");
  double sse = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) sse += (pred[k] - actual[k]) * (pred[k] - actual[k]);
  return std::sqrt(sse / static_cast<double>(pred.size()));
}

/// Sample Pearson correlation.
inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("pearson: length mismatch");
  if (a.size() < 2) throw std::invalid_argument("pearson: need at least two pairs");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) ma += a[k], mb += b[k];
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    sab += (a[k] - ma) * (b[k] - mb);
    saa += (a[k] - ma) * (a[k] - ma);
    sbb += (b[k] - mb) * (b[k] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) throw std::invalid_argument("pearson: zero variance");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

/// Fraction of selected users whose largest learned weight sits on the
/// generating subset. A tied maximum counts as not recovered.
inline double esarm_recovery(const GroundTruth& gt, const EsarmParams& learned) {
  if (gt.selected_users.empty()) throw std::invalid_argument("esarm_recovery: no selected users");
  // Models sized from training data may omit trailing unselected users.
  if (gt.extremal_index.size() != gt.num_users() ||
      static_cast<std::size_t>(learned.weights.rows()) <= static_cast<std::size_t>(gt.selected_users.back()))
    throw std::invalid_argument("esarm_recovery: user mismatch between ground truth and learned weights");
  std::size_t hits = 0;
  for (UserId u : gt.selected_users) {
    auto row = learned.weights.row(u);
    Eigen::Index arg = 0;
    const double top = row.maxCoeff(&arg);
    std::size_t at_top = 0;
    for (Eigen::Index t = 0; t < row.size(); ++t)
      if (std::abs(row[t] - top) <= 1e-12) ++at_top;
    if (at_top == 1 && arg + 1 == gt.extremal_index[u]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(gt.selected_users.size());
}

/// Pearson correlation between learned and generating pickiness over the
/// selected users.
inline double voarm_recovery(const GroundTruth& gt, const VoarmParams& learned) {
  if (gt.selected_users.empty()) throw std::invalid_argument("voarm_recovery: no selected users");
  if (gt.beta.size() != gt.num_users() ||
      static_cast<std::size_t>(learned.beta.size()) <= static_cast<std::size_t>(gt.selected_users.back()))
    throw std::invalid_argument("voarm_recovery: user mismatch between ground truth and learned pickiness");
  std::vector<double> a, b;
  for (UserId u : gt.selected_users) {
    a.push_back(learned.beta[u]);
    b.push_back(gt.beta[u]);
  }
  return pearson(a, b);
}

// --- Predictors --------------------------------------------------------------

enum class Method { arm, esarm, voarm, mf, mfset, mfopt, set_avg, item_avg, user_mean_sub };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::arm: return "arm";
    case Method::esarm: return "esarm";
    case Method::voarm: return "voarm";
    case Method::mf: return "mf";
    case Method::mfset: return "mfset";
    case Method::mfopt: return "mfopt";
    case Method::set_avg: return "setavg";
    case Method::item_avg: return "itemavg";
    case Method::user_mean_sub: return "usermeansub";
  }
  return "?";
}

inline std::optional<Method> parse_method(std::string_view s) {
  for (Method m : {Method::arm, Method::esarm, Method::voarm, Method::mf, Method::mfset, Method::mfopt,
                   Method::set_avg, Method::item_avg, Method::user_mean_sub})
    if (to_string(m) == s) return m;
  return std::nullopt;
}

/// Which users and items the training data covers, and the fallback value
/// used for anything it does not.
struct ColdStart {
  std::vector<char> user_seen;
  std::vector<char> item_seen;
  double fallback = 0.0;

  explicit ColdStart(const RatingsDataset& train)
      : user_seen(train.num_users, 0), item_seen(train.num_items, 0), fallback(global_mean(train)) {
    for (const auto& s : train.set_ratings) {
      user_seen[s.user] = 1;
      for (ItemId i : s.items) item_seen[i] = 1;
    }
    for (const auto& r : train.item_ratings) user_seen[r.user] = item_seen[r.item] = 1;
  }

  bool warm(UserId u, ItemId i) const {
    return u < user_seen.size() && i < item_seen.size() && user_seen[u] && item_seen[i];
  }
  bool warm(const SetRating& s) const {
    return std::all_of(s.items.begin(), s.items.end(), [&](ItemId i) { return warm(s.user, i); });
  }
};

struct Predictor {
  std::string name;
  std::function<double(const SetRating&)> set;
  std::function<double(UserId, ItemId)> item;
};

/// Model-based predictor with the cold-start fallback applied.
inline Predictor model_predictor(std::string name, ModelState model, const RatingsDataset& train) {
  auto cold = std::make_shared<ColdStart>(train);
  auto m = std::make_shared<ModelState>(std::move(model));
  Predictor p;
  p.name = std::move(name);
  p.set = [cold, m](const SetRating& s) { return cold->warm(s) ? predict_set(*m, s) : cold->fallback; };
  p.item = [cold, m](UserId u, ItemId i) { return cold->warm(u, i) ? predict_item(*m, u, i) : cold->fallback; };
  return p;
}

inline Predictor set_avg_predictor(const RatingsDataset& train) {
  auto cold = std::make_shared<ColdStart>(train);
  auto means = std::make_shared<std::vector<double>>(train.num_users, cold->fallback);
  for (UserId u = 0; u < train.num_users; ++u)
    if (!train.user_sets[u].empty()) (*means)[u] = set_avg_predict(train, u);
  Predictor p;
  p.name = "setavg";
  p.item = [means](UserId u, ItemId) { return u < means->size() ? (*means)[u] : 0.0; };
  p.set = [means](const SetRating& s) { return s.user < means->size() ? (*means)[s.user] : 0.0; };
  return p;
}

namespace detail {

// Item-level view for the non-personalized baselines: the item ratings when
// there are any, otherwise the set ratings copied onto their members.
inline RatingsDataset item_level_view(const RatingsDataset& train) {
  if (!train.item_ratings.empty()) return train;
  return make_dataset(train.num_users, train.num_items, train.set_ratings, expand_sets_to_items(train.set_ratings));
}

inline Predictor item_level_predictor(std::string name, std::function<double(UserId, ItemId)> item) {
  Predictor p;
  p.name = std::move(name);
  p.item = item;
  p.set = [item](const SetRating& s) {
    double sum = 0.0;
    for (ItemId i : s.items) sum += item(s.user, i);
    return sum / static_cast<double>(s.items.size());
  };
  return p;
}

}  // namespace detail

inline Predictor item_avg_predictor(const RatingsDataset& train) {
  const double fallback = global_mean(train);
  auto means = std::make_shared<std::vector<double>>(item_means(detail::item_level_view(train)));
  return detail::item_level_predictor("itemavg", [means, fallback](UserId, ItemId i) {
    if (i >= means->size() || std::isnan((*means)[i])) return fallback;
    return (*means)[i];
  });
}

inline Predictor user_mean_sub_predictor(const RatingsDataset& train) {
  const double fallback = global_mean(train);
  auto ums = std::make_shared<UserMeanSub>(detail::item_level_view(train));
  return detail::item_level_predictor("usermeansub", [ums, fallback](UserId, ItemId i) {
    return ums->known(i) ? ums->predict(i) : fallback;
  });
}

// --- Evaluation ------------------------------------------------------------

struct UserErrors {
  UserId user = 0;
  double set_sse = 0.0;
  std::size_t n_sets = 0;
  double item_sse = 0.0;
  std::size_t n_items = 0;

  double set_rmse() const { return n_sets ? std::sqrt(set_sse / static_cast<double>(n_sets)) : 0.0; }
  double item_rmse() const { return n_items ? std::sqrt(item_sse / static_cast<double>(n_items)) : 0.0; }
};

struct EvalReport {
  std::string method;
  std::string config;
  double set_rmse = 0.0;
  double item_rmse = 0.0;
  std::size_t n_sets = 0;
  std::size_t n_items = 0;
  std::vector<UserErrors> per_user;  // users with any test rating, ascending
};

inline EvalReport evaluate(const Predictor& p, const std::vector<SetRating>& test_sets,
                           const std::vector<ItemRating>& test_items, std::string config = {}) {
  EvalReport rep;
  rep.method = p.name;
  rep.config = std::move(config);
  std::map<UserId, UserErrors> users;
  double sse = 0.0;
  for (const auto& s : test_sets) {
    const double e = p.set(s) - s.rating;
    sse += e * e;
    auto& ue = users[s.user];
    ue.user = s.user;
    ue.set_sse += e * e;
    ++ue.n_sets;
  }
  rep.n_sets = test_sets.size();
  rep.set_rmse = test_sets.empty() ? 0.0 : std::sqrt(sse / static_cast<double>(test_sets.size()));
  sse = 0.0;
  for (const auto& r : test_items) {
    const double e = p.item(r.user, r.item) - r.rating;
    sse += e * e;
    auto& ue = users[r.user];
    ue.user = r.user;
    ue.item_sse += e * e;
    ++ue.n_items;
  }
  rep.n_items = test_items.size();
  rep.item_rmse = test_items.empty() ? 0.0 : std::sqrt(sse / static_cast<double>(test_items.size()));
  for (auto& [u, ue] : users) rep.per_user.push_back(ue);
  return rep;
}

// --- Grid search -----------------------------------------------------------

struct GridSpace {
  std::vector<double> lambdas{0.001, 0.01, 0.1, 1.0, 10.0};
  std::vector<double> epsilons{0.1, 0.25, 0.5, 1.0};
  std::vector<double> cs{0.0, 0.25, 0.5, 0.75, 0.9};
  std::vector<int> fs{5};

  static GridSpace real_data() {
    GridSpace g;
    g.fs = {1, 5, 10, 15, 25, 50, 75, 100};
    return g;
  }

  /// Collapses the axes a variant does not use to their first value.
  GridSpace for_variant(Variant v) const {
    GridSpace g = *this;
    if (v != Variant::voarm) g.epsilons.resize(std::min<std::size_t>(1, g.epsilons.size()));
    if (v != Variant::esarm) g.cs.resize(std::min<std::size_t>(1, g.cs.size()));
    return g;
  }
};

/// Cartesian product in f, lambda, epsilon, c order (c varies fastest).
inline std::vector<ExperimentConfig> expand_grid(const GridSpace& space, const ExperimentConfig& base) {
  std::vector<ExperimentConfig> out;
  for (int f : space.fs)
    for (double l : space.lambdas)
      for (double e : space.epsilons)
        for (double c : space.cs) {
          ExperimentConfig cfg = base;
          cfg.f = f;
          cfg.lambda = l;
          cfg.epsilon = e;
          cfg.c = c;
          out.push_back(cfg);
        }
  return out;
}

struct GridRow {
  ExperimentConfig config;
  bool ok = false;
  std::string error;
  double val_rmse = std::numeric_limits<double>::quiet_NaN();
  double train_rmse = std::numeric_limits<double>::quiet_NaN();
  std::size_t epochs = 0;
};

struct GridResult {
  std::size_t best_index = 0;
  ExperimentConfig best_config;
  ModelState best_model;
  TrainReport best_report;
  std::vector<GridRow> table;
};

using GridTrainer = std::function<TrainResult<ModelState>(const ExperimentConfig&)>;
using GridScorer = std::function<double(const ModelState&)>;

/// Trains every config (concurrently when threads > 1) and keeps the lowest
/// validation score; ties keep the earliest config. Failed configs are
/// recorded and skipped.
inline GridResult grid_search(const std::vector<ExperimentConfig>& grid, const GridTrainer& trainer,
                              const GridScorer& score, unsigned threads = 1) {
  if (grid.empty()) throw std::invalid_argument("grid_search: empty grid");
  std::vector<GridRow> rows(grid.size());
  std::vector<std::optional<TrainResult<ModelState>>> results(grid.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t j = next++; j < grid.size(); j = next++) {
      rows[j].config = grid[j];
      try {
        auto res = trainer(grid[j]);
        rows[j].val_rmse = score(res.model);
        rows[j].train_rmse = res.report.train_rmse_by_epoch.empty() ? 0.0
                                                                     : res.report.train_rmse_by_epoch[res.report.best_epoch];
        rows[j].epochs = res.report.epochs_run;
        rows[j].ok = std::isfinite(rows[j].val_rmse);
        if (!rows[j].ok) rows[j].error = "non-finite validation score";
        else results[j] = std::move(res);
      } catch (const std::exception& ex) {
        rows[j].ok = false;
        rows[j].error = ex.what();
      }
    }
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(grid.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  GridResult out;
  std::optional<std::size_t> best;
  for (std::size_t j = 0; j < rows.size(); ++j)
    if (rows[j].ok && (!best || rows[j].val_rmse < rows[*best].val_rmse)) best = j;
  if (!best) {
    std::string why = rows.front().error;
    throw NumericalError("grid_search: every configuration failed (first error: " + why + ")");
  }
  out.best_index = *best;
  out.best_config = grid[*best];
  out.best_model = std::move(results[*best]->model);
  out.best_report = std::move(results[*best]->report);
  out.table = std::move(rows);
  return out;
}

/// Grid search for a set model selected on validation set-level RMSE.
inline GridResult grid_search(const std::vector<ExperimentConfig>& grid, Variant variant, const RatingsDataset& train,
                              const RatingsDataset& val, unsigned threads = 1) {
  const auto val_samples = training_samples(val);
  const auto& score_on = val_samples.empty() ? training_samples(train) : val_samples;
  return grid_search(
      grid, [&](const ExperimentConfig& cfg) { return train_set_model(variant, cfg, train, val); },
      [score_on](const ModelState& m) { return set_rmse(m, score_on); }, threads);
}

}  // namespace setrec
