#pragma once

// SGD learners for the set-rating models and for plain matrix factorization.
//
// Every set model is trained on the per-sample objective
//
//   0.5 (r_hat(s) - r_s)^2 + 0.5 lambda ||theta_s||^2
//
// where theta_s are the parameters the sample touches (p_u, the members' q_i,
// biases, beta_u). The gradient is assembled from the response sensitivities
// d_j = d r_hat / d x_j of the member estimates x_j, so ARM, ESARM and VOARM
// share one update path. All gradients of a step are taken at the current
// state before any parameter moves.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "setrec/core.hpp"
#include "setrec/qp.hpp"
#include "setrec/set_models.hpp"

namespace setrec {

enum class Variant { arm, esarm, voarm, mf };

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::arm: return "arm";
    case Variant::esarm: return "esarm";
    case Variant::voarm: return "voarm";
    case Variant::mf: return "mf";
  }
  return "?";
}

inline std::optional<Variant> parse_variant(std::string_view s) {
  if (s == "arm") return Variant::arm;
  if (s == "esarm") return Variant::esarm;
  if (s == "voarm") return Variant::voarm;
  if (s == "mf") return Variant::mf;
  return std::nullopt;
}

/// A trained (or in-training) model of any variant.
struct ModelState {
  Variant variant = Variant::arm;
  FactorModel factors;
  std::optional<EsarmParams> esarm;
  std::optional<VoarmParams> voarm;

  void check() const {
    if (variant == Variant::esarm && !esarm) throw std::invalid_argument("esarm model without weights");
    if (variant == Variant::voarm && !voarm) throw std::invalid_argument("voarm model without pickiness");
  }

  friend bool operator==(const ModelState&, const ModelState&) = default;
};

inline double predict_set(const ModelState& m, const SetRating& s) {
  switch (m.variant) {
    case Variant::esarm: return predict_set_esarm(m.factors, *m.esarm, s);
    case Variant::voarm: return predict_set_voarm(m.factors, *m.voarm, s);
    case Variant::arm:
    case Variant::mf: return predict_set_arm(m.factors, s);
  }
  return 0.0;
}

inline double predict_item(const ModelState& m, UserId u, ItemId i) {
  return predict_item(m.factors, u, i);
}

struct TrainReport {
  std::size_t epochs_run = 0;
  std::vector<double> train_rmse_by_epoch;
  std::vector<double> val_rmse_by_epoch;
  std::vector<double> train_loss_by_epoch;  // regularized objective after each epoch
  double initial_loss = 0.0;
  bool stopped_early = false;
  std::size_t best_epoch = 0;
};

template <class Model>
struct TrainResult {
  Model model;
  TrainReport report;
};

// --- Objective -------------------------------------------------------------

inline double parameter_norm2(const ModelState& m) {
  double n2 = m.factors.P.squaredNorm() + m.factors.Q.squaredNorm();
  if (m.factors.use_biases) n2 += m.factors.b_user.squaredNorm() + m.factors.b_item.squaredNorm();
  if (m.variant == Variant::voarm) n2 += m.voarm->beta.squaredNorm();
  return n2;
}

/// Sum of squared set errors (item ratings as singleton sets) plus
/// lambda times the squared norm of every learned parameter.
inline double regularized_loss(const ModelState& m, const RatingsDataset& data, double lambda) {
  m.check();
  double sse = 0.0;
  for (const auto& s : data.set_ratings) {
    const double e = predict_set(m, s) - s.rating;
    sse += e * e;
  }
  for (const auto& r : data.item_ratings) {
    const double e = predict_set(m, SetRating{r.user, {r.item}, r.rating}) - r.rating;
    sse += e * e;
  }
  return sse + lambda * parameter_norm2(m);
}

inline double set_rmse(const ModelState& m, const std::vector<SetRating>& sets) {
  if (sets.empty()) return 0.0;
  double sse = 0.0;
  for (const auto& s : sets) {
    const double e = predict_set(m, s) - s.rating;
    sse += e * e;
  }
  return std::sqrt(sse / static_cast<double>(sets.size()));
}

// --- Per-sample gradient ---------------------------------------------------

namespace detail {

inline double estimate(const FactorModel& m, UserId u, ItemId i) {
  double r = dot_row(m.P, u, m.Q, i);
  if (m.use_biases) r += m.mu + m.b_user[u] + m.b_item[i];
  return r;
}

}  // namespace detail

/// Analytic gradient of the per-sample objective at one state.
struct SampleGradient {
  double prediction = 0.0;
  double residual = 0.0;  // prediction - rating
  Vector user;            // d/dp_u
  Matrix items;           // row j: d/dq_{items[j]}
  double user_bias = 0.0;
  Vector item_bias;
  double beta = 0.0;
  SetResponse response;
};

struct SampleWorkspace {
  std::vector<double> x;
  SampleGradient grad;
};

inline void evaluate_response(const ModelState& m, const SetRating& s, std::span<const double> x,
                              SetResponse& out) {
  switch (m.variant) {
    case Variant::esarm:
      esarm_response(x, s.items, s.items.size() == 1 ? std::span<const double>{} : weight_row(*m.esarm, s.user), out);
      break;
    case Variant::voarm:
      voarm_response(x, m.voarm->beta[s.user], m.voarm->epsilon, out);
      break;
    case Variant::arm:
    case Variant::mf:
      arm_response(x, out);
      break;
  }
}

inline void sample_gradient(const ModelState& m, const SetRating& s, double lambda, SampleWorkspace& ws) {
  const FactorModel& fm = m.factors;
  const std::size_t n = s.items.size();
  const Eigen::Index f = fm.P.cols();
  if (s.user >= fm.num_users()) throw DataError("sample user index out of bounds");
  ws.x.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    if (s.items[j] >= fm.num_items()) throw DataError("sample item index out of bounds");
    ws.x[j] = detail::estimate(fm, s.user, s.items[j]);
  }
  SampleGradient& g = ws.grad;
  evaluate_response(m, s, ws.x, g.response);
  const std::vector<double>& d = g.response.d;
  g.prediction = g.response.value;
  const double e = g.prediction - s.rating;
  g.residual = e;

  const auto pu = fm.P.row(s.user);
  Vector acc = Vector::Zero(f);
  g.items.resize(static_cast<Eigen::Index>(n), f);
  double dsum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const auto qj = fm.Q.row(s.items[j]);
    acc += d[j] * qj.transpose();
    const double ed = e * d[j];
    g.items.row(static_cast<Eigen::Index>(j)) = ed * pu + lambda * qj;
    dsum += d[j];
  }
  g.user = e * acc + lambda * pu.transpose();
  if (fm.use_biases) {
    g.user_bias = e * dsum + lambda * fm.b_user[s.user];
    g.item_bias.resize(static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j < n; ++j)
      g.item_bias[static_cast<Eigen::Index>(j)] = e * d[j] + lambda * fm.b_item[s.items[j]];
  }
  g.beta = 0.0;
  if (m.variant == Variant::voarm) g.beta = e * g.response.d_beta + lambda * m.voarm->beta[s.user];
}

/// Per-sample objective value, used by the finite-difference check.
inline double sample_objective(const ModelState& m, const SetRating& s, double lambda,
                               std::vector<std::size_t>* ordering = nullptr, double* sigma = nullptr) {
  const FactorModel& fm = m.factors;
  std::vector<double> x(s.items.size());
  for (std::size_t j = 0; j < x.size(); ++j) x[j] = detail::estimate(fm, s.user, s.items[j]);
  SetResponse r;
  evaluate_response(m, s, x, r);
  if (ordering) *ordering = r.ordering;
  if (sigma) *sigma = r.sigma;
  const double e = r.value - s.rating;
  double reg = fm.P.row(s.user).squaredNorm();
  for (ItemId i : s.items) reg += fm.Q.row(i).squaredNorm();
  if (fm.use_biases) {
    reg += fm.b_user[s.user] * fm.b_user[s.user];
    for (ItemId i : s.items) reg += fm.b_item[i] * fm.b_item[i];
  }
  if (m.variant == Variant::voarm) reg += m.voarm->beta[s.user] * m.voarm->beta[s.user];
  return 0.5 * e * e + 0.5 * lambda * reg;
}

struct GradientCheckResult {
  double max_rel_error = 0.0;
  std::size_t params_checked = 0;
  bool ordering_stable = true;  // ESARM: no perturbation reordered the members
  double sigma = 0.0;           // VOARM: unsmoothed spread of the estimates
};

/// Compares the analytic per-sample gradient against central differences
/// with step h for every parameter the sample touches. The relative error of
/// one component is |a - n| / max(1, |a|, |n|).
inline GradientCheckResult gradient_check(ModelState state, const SetRating& s, double lambda, double h) {
  state.check();
  SampleWorkspace ws;
  sample_gradient(state, s, lambda, ws);
  const SampleGradient g = ws.grad;
  GradientCheckResult res;
  std::vector<std::size_t> base_order;
  sample_objective(state, s, lambda, &base_order, &res.sigma);

  auto probe = [&](double& param, double analytic) {
    const double saved = param;
    std::vector<std::size_t> ord;
    param = saved + h;
    const double fp = sample_objective(state, s, lambda, &ord);
    if (state.variant == Variant::esarm && ord != base_order) res.ordering_stable = false;
    param = saved - h;
    const double fm = sample_objective(state, s, lambda, &ord);
    if (state.variant == Variant::esarm && ord != base_order) res.ordering_stable = false;
    param = saved;
    const double numeric = (fp - fm) / (2.0 * h);
    const double rel = std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
    res.max_rel_error = std::max(res.max_rel_error, rel);
    ++res.params_checked;
  };

  FactorModel& fm = state.factors;
  const Eigen::Index f = fm.P.cols();
  for (Eigen::Index k = 0; k < f; ++k) probe(fm.P(s.user, k), g.user[k]);
  for (std::size_t j = 0; j < s.items.size(); ++j)
    for (Eigen::Index k = 0; k < f; ++k) probe(fm.Q(s.items[j], k), g.items(static_cast<Eigen::Index>(j), k));
  if (fm.use_biases) {
    probe(fm.b_user[s.user], g.user_bias);
    for (std::size_t j = 0; j < s.items.size(); ++j) probe(fm.b_item[s.items[j]], g.item_bias[static_cast<Eigen::Index>(j)]);
  }
  if (state.variant == Variant::voarm) probe(state.voarm->beta[s.user], g.beta);
  return res;
}

// --- SGD machinery ---------------------------------------------------------

namespace detail {

constexpr double kDivergenceLimit = 1e6;

inline bool sane(double v) { return std::isfinite(v) && std::abs(v) <= kDivergenceLimit; }

[[noreturn]] inline void diverged(Variant v, std::size_t epoch, const std::string& what) {
  std::ostringstream os;
  os << to_string(v) << " training diverged at epoch " << epoch << ": " << what
     << " left the finite range |x| <= " << kDivergenceLimit << "; try a smaller eta";
  throw NumericalError(os.str());
}

inline void apply_step(ModelState& m, const SetRating& s, double eta, double eta_beta,
                       const SampleGradient& g, std::size_t epoch) {
  FactorModel& fm = m.factors;
  const Eigen::Index f = fm.P.cols();
  auto pu = fm.P.row(s.user);
  pu -= eta * g.user.transpose();
  for (Eigen::Index k = 0; k < f; ++k)
    if (!sane(pu[k])) diverged(m.variant, epoch, "user factor " + std::to_string(s.user));
  for (std::size_t j = 0; j < s.items.size(); ++j) {
    auto qj = fm.Q.row(s.items[j]);
    qj -= eta * g.items.row(static_cast<Eigen::Index>(j));
    for (Eigen::Index k = 0; k < f; ++k)
      if (!sane(qj[k])) diverged(m.variant, epoch, "item factor " + std::to_string(s.items[j]));
  }
  if (fm.use_biases) {
    fm.b_user[s.user] -= eta * g.user_bias;
    if (!sane(fm.b_user[s.user])) diverged(m.variant, epoch, "user bias");
    for (std::size_t j = 0; j < s.items.size(); ++j) {
      fm.b_item[s.items[j]] -= eta * g.item_bias[static_cast<Eigen::Index>(j)];
      if (!sane(fm.b_item[s.items[j]])) diverged(m.variant, epoch, "item bias");
    }
  }
  if (m.variant == Variant::voarm) {
    double& b = m.voarm->beta[s.user];
    b -= eta_beta * g.beta;
    if (!sane(b)) diverged(m.variant, epoch, "pickiness of user " + std::to_string(s.user));
  }
}

// Independent streams so that variant-specific draws never perturb the
// factor initialisation or the shuffle order.
constexpr std::uint64_t kBetaStream = 0x9E3779B97F4A7C15ull;
constexpr std::uint64_t kWeightStream = 0xC2B2AE3D27D4EB4Full;

inline FactorModel init_factors(std::size_t num_users, std::size_t num_items, const ExperimentConfig& cfg,
                                double mean, std::mt19937_64& rng) {
  FactorModel fm(num_users, num_items, cfg.f, cfg.use_biases);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Eigen::Index u = 0; u < fm.P.rows(); ++u)
    for (Eigen::Index k = 0; k < fm.P.cols(); ++k) fm.P(u, k) = unit(rng);
  for (Eigen::Index i = 0; i < fm.Q.rows(); ++i)
    for (Eigen::Index k = 0; k < fm.Q.cols(); ++k) fm.Q(i, k) = unit(rng);
  if (cfg.use_biases) fm.mu = mean;
  return fm;
}

inline bool factors_sane(const ModelState& m) {
  auto ok = [](const auto& a) { return a.size() == 0 || (a.allFinite() && a.cwiseAbs().maxCoeff() <= kDivergenceLimit); };
  bool good = ok(m.factors.P) && ok(m.factors.Q) && ok(m.factors.b_user) && ok(m.factors.b_item);
  if (m.voarm) good = good && ok(m.voarm->beta);
  return good;
}

}  // namespace detail

/// Refits every user's extremal-subset weights against the current factors.
/// Users without non-singleton sets keep their weights.
inline void refresh_esarm_weights(ModelState& m, const RatingsDataset& train, double lambda, double c,
                                  const QpOptions& opt = {}) {
  EsarmParams& w = *m.esarm;
  const std::size_t n = w.set_size;
  if (n < 2) return;
  const std::size_t mm = extremal_count(n);
  std::vector<double> x, sorted(n), e;
  std::vector<std::size_t> order;
  for (std::size_t u = 0; u < train.num_users; ++u) {
    WeightFitStats st;
    st.gram = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(mm), static_cast<Eigen::Index>(mm));
    st.cross = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mm));
    for (std::size_t k : train.user_sets[u]) {
      const SetRating& s = train.set_ratings[k];
      if (s.items.size() < 2) continue;
      item_estimates(m.factors, s, x);
      ascending_order(x, s.items, order);
      for (std::size_t j = 0; j < n; ++j) sorted[j] = x[order[j]];
      extremal_averages_sorted(sorted, e);
      Eigen::Map<const Eigen::VectorXd> row(e.data(), static_cast<Eigen::Index>(mm));
      st.gram.noalias() += row * row.transpose();
      st.cross += s.rating * row;
      st.rr += s.rating * s.rating;
      ++st.n_obs;
    }
    if (st.n_obs == 0) continue;
    UserWeightSolution sol = solve_user_weights(st, lambda, c, opt);
    w.weights.row(static_cast<Eigen::Index>(u)) = sol.w.transpose();
  }
}

namespace detail {

struct EngineHooks {
  std::function<void(ModelState&)> after_epoch;
};

inline TrainResult<ModelState> run_set_sgd(const ExperimentConfig& cfg, const RatingsDataset& train,
                                           const RatingsDataset& val, ModelState state,
                                           std::mt19937_64& rng, const EngineHooks& hooks) {
  const std::vector<SetRating> samples = training_samples(train);
  const std::vector<SetRating> val_samples = training_samples(val);
  const double eta_beta = cfg.eta_beta.value_or(cfg.eta);

  TrainResult<ModelState> out{state, {}};
  TrainReport& rep = out.report;
  rep.initial_loss = regularized_loss(state, train, cfg.lambda);

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  SampleWorkspace ws;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int epoch = 0; epoch < cfg.max_iter; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t idx : order) {
      const SetRating& s = samples[idx];
      sample_gradient(state, s, cfg.lambda, ws);
      apply_step(state, s, cfg.eta, eta_beta, ws.grad, static_cast<std::size_t>(epoch));
    }
    if (hooks.after_epoch) hooks.after_epoch(state);
    if (!factors_sane(state)) diverged(state.variant, static_cast<std::size_t>(epoch), "a parameter");

    const double tr = set_rmse(state, samples);
    const double va = val_samples.empty() ? tr : set_rmse(state, val_samples);
    rep.train_rmse_by_epoch.push_back(tr);
    rep.val_rmse_by_epoch.push_back(va);
    rep.train_loss_by_epoch.push_back(regularized_loss(state, train, cfg.lambda));
    rep.epochs_run = static_cast<std::size_t>(epoch) + 1;
    if (va < best_val) {
      best_val = va;
      rep.best_epoch = static_cast<std::size_t>(epoch);
      out.model = state;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      rep.stopped_early = true;
      break;
    }
  }
  return out;
}

inline void require_trainable(const RatingsDataset& train, const RatingsDataset& val) {
  require_valid(train, "training data");
  require_valid(val, "validation data");
  if (train.empty()) throw DataError("training data has no ratings");
  if (val.num_users > train.num_users || val.num_items > train.num_items)
    throw DataError("validation data indices exceed the training dimensions");
}

}  // namespace detail

inline TrainResult<ModelState> train_arm(const ExperimentConfig& cfg, const RatingsDataset& train,
                                         const RatingsDataset& val) {
  cfg.validate();
  detail::require_trainable(train, val);
  std::mt19937_64 rng(cfg.seed);
  ModelState st;
  st.variant = Variant::arm;
  st.factors = detail::init_factors(train.num_users, train.num_items, cfg, set_rating_mean(train), rng);
  return detail::run_set_sgd(cfg, train, val, std::move(st), rng, {});
}

inline TrainResult<ModelState> train_voarm(const ExperimentConfig& cfg, const RatingsDataset& train,
                                           const RatingsDataset& val) {
  cfg.validate();
  detail::require_trainable(train, val);
  std::mt19937_64 rng(cfg.seed);
  ModelState st;
  st.variant = Variant::voarm;
  st.factors = detail::init_factors(train.num_users, train.num_items, cfg, set_rating_mean(train), rng);
  VoarmParams v;
  v.epsilon = cfg.epsilon;
  v.beta.resize(static_cast<Eigen::Index>(train.num_users));
  std::mt19937_64 beta_rng(cfg.seed ^ detail::kBetaStream);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Eigen::Index u = 0; u < v.beta.size(); ++u) v.beta[u] = cfg.beta_init ? *cfg.beta_init : unit(beta_rng);
  st.voarm = std::move(v);
  return detail::run_set_sgd(cfg, train, val, std::move(st), rng, {});
}

inline TrainResult<ModelState> train_esarm(const ExperimentConfig& cfg, const RatingsDataset& train,
                                           const RatingsDataset& val, const QpOptions& qp = {}) {
  cfg.validate();
  detail::require_trainable(train, val);
  const std::size_t n = uniform_set_size(train.set_ratings).value_or(1);
  if (auto nv = uniform_set_size(val.set_ratings); nv && *nv != n)
    throw DataError("validation sets have size " + std::to_string(*nv) + " but training sets have size " +
                    std::to_string(n));
  std::mt19937_64 rng(cfg.seed);
  ModelState st;
  st.variant = Variant::esarm;
  st.factors = detail::init_factors(train.num_users, train.num_items, cfg, set_rating_mean(train), rng);
  EsarmParams w;
  w.set_size = n;
  w.peak_floor = cfg.c;
  w.weights.resize(static_cast<Eigen::Index>(train.num_users), static_cast<Eigen::Index>(extremal_count(n)));
  std::mt19937_64 w_rng(cfg.seed ^ detail::kWeightStream);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Eigen::Index u = 0; u < w.weights.rows(); ++u) {
    double sum = 0.0;
    for (Eigen::Index t = 0; t < w.weights.cols(); ++t) sum += (w.weights(u, t) = unit(w_rng));
    w.weights.row(u) /= sum;
  }
  st.esarm = std::move(w);
  detail::EngineHooks hooks;
  if (cfg.refresh_weights && n > 1) {
    hooks.after_epoch = [&](ModelState& m) { refresh_esarm_weights(m, train, cfg.lambda, cfg.c, qp); };
  }
  return detail::run_set_sgd(cfg, train, val, std::move(st), rng, hooks);
}

inline TrainResult<ModelState> train_set_model(Variant v, const ExperimentConfig& cfg, const RatingsDataset& train,
                                               const RatingsDataset& val) {
  switch (v) {
    case Variant::arm: return train_arm(cfg, train, val);
    case Variant::esarm: return train_esarm(cfg, train, val);
    case Variant::voarm: return train_voarm(cfg, train, val);
    case Variant::mf: break;
  }
  throw std::invalid_argument("train_set_model: mf is trained on item ratings (use train_mf)");
}

// --- Matrix factorization on item triples ----------------------------------

inline double item_rmse(const FactorModel& m, const std::vector<ItemRating>& items) {
  if (items.empty()) return 0.0;
  double sse = 0.0;
  for (const auto& r : items) {
    const double e = detail::estimate(m, r.user, r.item) - r.rating;
    sse += e * e;
  }
  return std::sqrt(sse / static_cast<double>(items.size()));
}

/// Standard SGD matrix factorization on (user, item, rating) triples.
inline TrainResult<ModelState> train_mf(const ExperimentConfig& cfg, std::size_t num_users, std::size_t num_items,
                                        const std::vector<ItemRating>& items, const std::vector<ItemRating>& val) {
  cfg.validate();
  if (items.empty()) throw DataError("train_mf: no training ratings");
  for (const auto* list : {&items, &val})
    for (const auto& r : *list)
      if (r.user >= num_users || r.item >= num_items || !std::isfinite(r.rating))
        throw DataError("train_mf: rating out of bounds or non-finite");

  std::mt19937_64 rng(cfg.seed);
  double mean = 0.0;
  for (const auto& r : items) mean += r.rating;
  mean /= static_cast<double>(items.size());
  ModelState st;
  st.variant = Variant::mf;
  st.factors = detail::init_factors(num_users, num_items, cfg, mean, rng);
  FactorModel& fm = st.factors;
  const double lambda = cfg.lambda;
  const Eigen::Index f = fm.P.cols();

  auto loss = [&](const FactorModel& m) {
    double sse = 0.0;
    for (const auto& r : items) {
      const double e = detail::estimate(m, r.user, r.item) - r.rating;
      sse += e * e;
    }
    double n2 = m.P.squaredNorm() + m.Q.squaredNorm();
    if (m.use_biases) n2 += m.b_user.squaredNorm() + m.b_item.squaredNorm();
    return sse + lambda * n2;
  };

  TrainResult<ModelState> out{st, {}};
  TrainReport& rep = out.report;
  rep.initial_loss = loss(fm);
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Vector gp(f), gq(f);
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int epoch = 0; epoch < cfg.max_iter; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t idx : order) {
      const ItemRating& r = items[idx];
      const double e = detail::estimate(fm, r.user, r.item) - r.rating;
      auto pu = fm.P.row(r.user);
      auto qi = fm.Q.row(r.item);
      gp = e * qi.transpose() + lambda * pu.transpose();
      gq = e * pu.transpose() + lambda * qi.transpose();
      double gbu = 0.0, gbi = 0.0;
      if (fm.use_biases) {
        gbu = e + lambda * fm.b_user[r.user];
        gbi = e + lambda * fm.b_item[r.item];
      }
      pu -= cfg.eta * gp.transpose();
      qi -= cfg.eta * gq.transpose();
      for (Eigen::Index k = 0; k < f; ++k)
        if (!detail::sane(pu[k]) || !detail::sane(qi[k]))
          detail::diverged(Variant::mf, static_cast<std::size_t>(epoch), "a latent factor");
      if (fm.use_biases) {
        fm.b_user[r.user] -= cfg.eta * gbu;
        fm.b_item[r.item] -= cfg.eta * gbi;
        if (!detail::sane(fm.b_user[r.user]) || !detail::sane(fm.b_item[r.item]))
          detail::diverged(Variant::mf, static_cast<std::size_t>(epoch), "a bias");
      }
    }
    const double tr = item_rmse(fm, items);
    const double va = val.empty() ? tr : item_rmse(fm, val);
    rep.train_rmse_by_epoch.push_back(tr);
    rep.val_rmse_by_epoch.push_back(va);
    rep.train_loss_by_epoch.push_back(loss(fm));
    rep.epochs_run = static_cast<std::size_t>(epoch) + 1;
    if (va < best_val) {
      best_val = va;
      rep.best_epoch = static_cast<std::size_t>(epoch);
      out.model.factors = fm;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      rep.stopped_early = true;
      break;
    }
  }
  return out;
}

}  // namespace setrec
