// setrec: generate, split, train, tune, evaluate and analyze set-rating
// models from the command line.
//
// Exit codes: 0 success, 1 usage, 2 data, 3 numerical failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "setrec/setrec.hpp"
#include "table.hpp"

namespace fs = std::filesystem;
using namespace setrec;
using setrec::cli::Table;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out = ".";
  bool emit_json = false;
};

Globals g;

fs::path out_path(const std::string& name) {
  fs::create_directories(g.out);
  return fs::path(g.out) / name;
}

// Tables go to stdout and, as <name>.csv (+ .json), into the output dir.
void emit(const Table& t, bool to_file = true) {
  if (g.emit_json) std::cout << t.to_json().dump(2) << '\n';
  else t.write_csv(std::cout);
  if (!to_file) return;
  {
    std::ofstream f(out_path(t.name + ".csv"), std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write " + (fs::path(g.out) / (t.name + ".csv")).string());
    t.write_csv(f);
  }
  if (g.emit_json) {
    std::ofstream f(out_path(t.name + ".json"), std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write " + (fs::path(g.out) / (t.name + ".json")).string());
    f << t.to_json().dump(2) << '\n';
  }
}

KeyValues config_kv() { return g.config.empty() ? KeyValues{} : read_key_values(g.config); }

// Hyperparameter flags; each overrides the config file only when given.
struct TrainFlags {
  std::optional<double> eta, lambda, epsilon, c, eta_beta, beta_init;
  std::optional<int> f, max_iter, patience;
  bool biases = false;
  bool no_refresh = false;

  void add(CLI::App* sub) {
    sub->add_option("--eta", eta, "SGD step size");
    sub->add_option("--lambda", lambda, "L2 regularization weight");
    sub->add_option("--f", f, "latent dimension");
    sub->add_option("--epsilon", epsilon, "VOARM spread smoothing");
    sub->add_option("--c", c, "ESARM peak-weight floor");
    sub->add_option("--max-iter", max_iter, "maximum epochs");
    sub->add_option("--patience", patience, "early-stopping patience (epochs)");
    sub->add_option("--eta-beta", eta_beta, "VOARM pickiness step size (default: eta)");
    sub->add_option("--beta-init", beta_init, "initial pickiness for every user");
    sub->add_flag("--biases", biases, "learn global/user/item biases");
    sub->add_flag("--no-refresh", no_refresh, "ESARM: keep the initial weights fixed");
  }

  ExperimentConfig resolve(const KeyValues& kv) const {
    ExperimentConfig cfg;
    for (const auto& k : apply_config(kv, cfg))
      if (!known_extra(k)) throw UsageError("unknown config key '" + k + "'");
    if (eta) cfg.eta = *eta;
    if (lambda) cfg.lambda = *lambda;
    if (f) cfg.f = *f;
    if (epsilon) cfg.epsilon = *epsilon;
    if (c) cfg.c = *c;
    if (max_iter) cfg.max_iter = *max_iter;
    if (patience) cfg.patience = *patience;
    if (eta_beta) cfg.eta_beta = *eta_beta;
    if (beta_init) cfg.beta_init = *beta_init;
    if (biases) cfg.use_biases = true;
    if (no_refresh) cfg.refresh_weights = false;
    if (g.seed) cfg.seed = *g.seed;
    try {
      cfg.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    return cfg;
  }

  // Generator keys may share a config file with training keys.
  static bool known_extra(const std::string& k) {
    static const std::set<std::string> extra{"mode",        "num_users",      "num_items", "rank",
                                             "items_per_user", "selected_users", "set_size",  "sets_per_user",
                                             "noise_sd",    "val_sets_per_user", "test_sets_per_user", "threads"};
    return extra.count(k) > 0;
  }
};

std::string describe(const ExperimentConfig& c) {
  std::ostringstream os;
  bool first = true;
  for (const auto& [k, v] : config_to_key_values(c)) {
    os << (first ? "" : ";") << k << '=' << v;
    first = false;
  }
  return os.str();
}

RatingsDataset load_dataset(const std::string& sets_path, const std::string& items_path,
                            std::pair<std::size_t, std::size_t> dims) {
  auto sets = sets_path.empty() ? std::vector<SetRating>{} : read_set_ratings(sets_path);
  auto items = items_path.empty() ? std::vector<ItemRating>{} : read_item_ratings(items_path);
  auto here = infer_dimensions(sets, items);
  dims.first = std::max(dims.first, here.first);
  dims.second = std::max(dims.second, here.second);
  auto d = make_dataset(dims.first, dims.second, std::move(sets), std::move(items));
  require_valid(d, sets_path.empty() ? items_path : sets_path);
  return d;
}

std::pair<std::size_t, std::size_t> dims_of(const std::vector<std::string>& set_files,
                                            const std::vector<std::string>& item_files) {
  std::pair<std::size_t, std::size_t> d{0, 0};
  for (const auto& p : set_files) {
    if (p.empty()) continue;
    auto x = infer_dimensions(read_set_ratings(p), {});
    d = {std::max(d.first, x.first), std::max(d.second, x.second)};
  }
  for (const auto& p : item_files) {
    if (p.empty()) continue;
    auto x = infer_dimensions({}, read_item_ratings(p));
    d = {std::max(d.first, x.first), std::max(d.second, x.second)};
  }
  return d;
}

void report_training(const TrainReport& r) {
  Table t("train_report", {"epoch", "train_rmse", "val_rmse", "train_loss"});
  for (std::size_t e = 0; e < r.epochs_run; ++e)
    t.add(e + 1, r.train_rmse_by_epoch[e], r.val_rmse_by_epoch[e], r.train_loss_by_epoch[e]);
  emit(t);
}

// Item ratings of exactly the (user, item) pairs that occur in the sets.
std::vector<ItemRating> pairs_in_sets(const std::vector<SetRating>& sets, const std::vector<ItemRating>& items) {
  std::unordered_set<std::uint64_t> keys;
  for (const auto& s : sets)
    for (ItemId i : s.items) keys.insert(pair_key(s.user, i));
  std::vector<ItemRating> out;
  for (const auto& r : items)
    if (keys.count(pair_key(r.user, r.item))) out.push_back(r);
  return out;
}

// --- generate ----------------------------------------------------------------

struct GenerateCmd {
  std::optional<std::string> mode;
  std::optional<std::size_t> users, items, rank, items_per_user, selected_users, set_size, sets_per_user;
  std::optional<double> noise;
  std::string pairs;

  void add(CLI::App* sub) {
    sub->add_option("--mode", mode, "behaviour model: voarm or esarm");
    sub->add_option("--users", users, "number of users");
    sub->add_option("--items", items, "number of items");
    sub->add_option("--rank", rank, "rank of the true rating matrix");
    sub->add_option("--items-per-user", items_per_user, "observed items per user in the synthetic mask");
    sub->add_option("--selected-users", selected_users, "users that receive sets");
    sub->add_option("--set-size", set_size, "items per set");
    sub->add_option("--sets-per-user", sets_per_user, "sets per selected user");
    sub->add_option("--noise", noise, "standard deviation of the rating noise");
    sub->add_option("--pairs", pairs, "observed (user,item) pairs as an item-ratings CSV instead of the mask");
  }

  int run() const {
    SynthConfig sc;
    const auto kv = config_kv();
    auto num = [](const std::string& k, const std::string& v) {
      auto x = parse_int<std::size_t>(v);
      if (!x) throw UsageError("config: '" + k + "' expects a count");
      return *x;
    };
    for (const auto& [k, v] : kv) {
      if (k == "mode") {
        auto m = parse_synth_mode(v);
        if (!m) throw UsageError("config: unknown mode '" + v + "'");
        sc.mode = *m;
      } else if (k == "num_users") sc.num_users = num(k, v);
      else if (k == "num_items") sc.num_items = num(k, v);
      else if (k == "rank") sc.rank = num(k, v);
      else if (k == "items_per_user") sc.items_per_user = num(k, v);
      else if (k == "selected_users") sc.selected_users = num(k, v);
      else if (k == "set_size") sc.set_size = num(k, v);
      else if (k == "sets_per_user") sc.sets_per_user = num(k, v);
      else if (k == "noise_sd") {
        auto d = parse_double(v);
        if (!d) throw UsageError("config: 'noise_sd' expects a number");
        sc.noise_sd = *d;
      } else if (k == "seed") {
        sc.seed = num(k, v);
      }
    }
    if (mode) {
      auto m = parse_synth_mode(*mode);
      if (!m) throw UsageError("--mode must be voarm or esarm");
      sc.mode = *m;
    }
    if (users) sc.num_users = *users;
    if (items) sc.num_items = *items;
    if (rank) sc.rank = *rank;
    if (items_per_user) sc.items_per_user = *items_per_user;
    if (selected_users) sc.selected_users = *selected_users;
    else if (users && !kv.count("selected_users")) sc.selected_users = std::min(sc.selected_users, *users);
    if (set_size) sc.set_size = *set_size;
    if (sets_per_user) sc.sets_per_user = *sets_per_user;
    if (noise) sc.noise_sd = *noise;
    if (g.seed) sc.seed = *g.seed;
    if (sc.items_per_user > sc.num_items) sc.items_per_user = sc.num_items;
    if (sc.rank < 1 || sc.rank > std::min(sc.num_users, sc.num_items))
      throw UsageError("--rank must lie in [1, min(users, items)]");
    if (sc.set_size < 1 || !(sc.noise_sd >= 0.0)) throw UsageError("--set-size must be >= 1 and --noise >= 0");

    std::vector<std::vector<ItemId>> observed;
    if (!pairs.empty()) {
      std::vector<std::pair<UserId, ItemId>> p;
      for (const auto& r : read_item_ratings(pairs)) p.emplace_back(r.user, r.item);
      observed = observed_from_pairs(p, sc.num_users);
    }
    auto ds = generate_synthetic(sc, std::move(observed));
    write_set_ratings(out_path("sets.csv").string(), ds.sets.set_ratings);
    write_item_ratings(out_path("items.csv").string(), ds.items);
    save_ground_truth(out_path("truth.txt").string(), ds.truth);
    Table t("generate", {"mode", "users", "items", "selected_users", "sets", "item_ratings", "seed"});
    t.add(std::string(to_string(sc.mode)), sc.num_users, sc.num_items, ds.truth.selected_users.size(),
          ds.sets.set_ratings.size(), ds.items.size(), sc.seed);
    emit(t);
    return 0;
  }
};

// --- split -------------------------------------------------------------------

struct SplitCmd {
  std::string sets, items;
  std::size_t val = 5, test = 5;

  void add(CLI::App* sub) {
    sub->add_option("--sets", sets, "set ratings CSV")->required();
    sub->add_option("--items", items, "full item ratings CSV (source of test items)");
    sub->add_option("--val", val, "validation sets per user");
    sub->add_option("--test", test, "test sets per user");
  }

  int run() const {
    auto kv = config_kv();
    SplitSpec spec{val, test, g.seed.value_or(1)};
    if (!g.seed && kv.count("seed")) spec.seed = parse_int<std::uint64_t>(kv.at("seed")).value_or(1);
    auto all_items = items.empty() ? std::vector<ItemRating>{} : read_item_ratings(items);
    auto set_list = read_set_ratings(sets);
    auto dims = infer_dimensions(set_list, all_items);
    auto data = make_dataset(dims.first, dims.second, std::move(set_list));
    auto sp = split(data, all_items, spec);
    write_set_ratings(out_path("train_sets.csv").string(), sp.train.set_ratings);
    write_set_ratings(out_path("val_sets.csv").string(), sp.val.set_ratings);
    write_set_ratings(out_path("test_sets.csv").string(), sp.test_sets);
    write_item_ratings(out_path("test_items.csv").string(), sp.test_items);
    Table t("split", {"train_sets", "val_sets", "test_sets", "test_items", "seed"});
    t.add(sp.train.set_ratings.size(), sp.val.set_ratings.size(), sp.test_sets.size(), sp.test_items.size(),
          spec.seed);
    emit(t);
    return 0;
  }
};

// --- train -------------------------------------------------------------------

struct TrainCmd {
  std::string variant = "arm";
  std::string train, val, train_items, all_items;
  std::string model_name = "model.txt";
  TrainFlags flags;

  void add(CLI::App* sub) {
    sub->add_option("--variant", variant, "arm|esarm|voarm|mf|mfset|mfopt")->required();
    sub->add_option("--train", train, "training set ratings CSV");
    sub->add_option("--val", val, "validation set ratings CSV");
    sub->add_option("--train-items", train_items, "item ratings used for training (arm/esarm/voarm/mf)");
    sub->add_option("--all-items", all_items, "full item ratings; mfopt trains on the pairs inside --train sets");
    sub->add_option("--model", model_name, "artifact file name inside --out");
    flags.add(sub);
  }

  int run() const {
    const ExperimentConfig cfg = flags.resolve(config_kv());
    TrainResult<ModelState> res;
    if (variant == "mf" || variant == "mfset" || variant == "mfopt") {
      auto dims = dims_of({train, val}, {train_items, all_items});
      std::vector<ItemRating> tr, va;
      auto train_sets = train.empty() ? std::vector<SetRating>{} : read_set_ratings(train);
      auto val_sets = val.empty() ? std::vector<SetRating>{} : read_set_ratings(val);
      if (variant == "mf") {
        if (train_items.empty()) throw UsageError("mf needs --train-items");
        tr = read_item_ratings(train_items);
        va = expand_sets_to_items(val_sets);
      } else if (variant == "mfset") {
        if (train.empty()) throw UsageError("mfset needs --train");
        tr = expand_sets_to_items(train_sets);
        va = expand_sets_to_items(val_sets);
      } else {
        if (train.empty() || all_items.empty()) throw UsageError("mfopt needs --train and --all-items");
        auto full = read_item_ratings(all_items);
        tr = pairs_in_sets(train_sets, full);
        va = pairs_in_sets(val_sets, full);
      }
      res = train_mf(cfg, dims.first, dims.second, tr, va);
    } else {
      auto v = parse_variant(variant);
      if (!v) throw UsageError("unknown variant '" + variant + "'");
      if (train.empty()) throw UsageError("--train is required for " + variant);
      auto dims = dims_of({train, val}, {train_items});
      auto tr = load_dataset(train, train_items, dims);
      auto va = load_dataset(val, "", dims);
      res = train_set_model(*v, cfg, tr, va);
    }
    save_model(out_path(model_name).string(), ModelArtifact{kModelFormatVersion, res.model, cfg});
    report_training(res.report);
    return 0;
  }
};

// --- gridsearch ----------------------------------------------------------------

std::vector<double> parse_list(const std::string& s, const char* what) {
  std::vector<double> out;
  for (auto tok : split_fields(s, ',')) {
    auto v = parse_double(tok);
    if (!v) throw UsageError(std::string("malformed value in --") + what);
    out.push_back(*v);
  }
  return out;
}

struct GridCmd {
  std::string variant = "voarm";
  std::string train, val, train_items;
  std::string grid = "synthetic";
  std::string lambdas, epsilons, cs, fs;
  unsigned threads = 1;
  TrainFlags flags;

  void add(CLI::App* sub) {
    sub->add_option("--variant", variant, "arm|esarm|voarm")->required();
    sub->add_option("--train", train, "training set ratings CSV")->required();
    sub->add_option("--val", val, "validation set ratings CSV");
    sub->add_option("--train-items", train_items, "item ratings used for training");
    sub->add_option("--grid", grid, "base grid: synthetic (f=5) or real (f in 1..100)");
    sub->add_option("--lambdas", lambdas, "comma-separated lambda values");
    sub->add_option("--epsilons", epsilons, "comma-separated epsilon values");
    sub->add_option("--cs", cs, "comma-separated peak floors");
    sub->add_option("--fs", fs, "comma-separated latent dimensions");
    sub->add_option("--threads", threads, "concurrent trainings");
    flags.add(sub);
  }

  int run() const {
    auto v = parse_variant(variant);
    if (!v || *v == Variant::mf) throw UsageError("gridsearch supports arm, esarm and voarm");
    const ExperimentConfig base = flags.resolve(config_kv());
    GridSpace space = grid == "real" ? GridSpace::real_data() : GridSpace{};
    if (grid != "real" && grid != "synthetic") throw UsageError("--grid must be synthetic or real");
    if (!lambdas.empty()) space.lambdas = parse_list(lambdas, "lambdas");
    if (!epsilons.empty()) space.epsilons = parse_list(epsilons, "epsilons");
    if (!cs.empty()) space.cs = parse_list(cs, "cs");
    if (!fs.empty()) {
      space.fs.clear();
      for (double x : parse_list(fs, "fs")) space.fs.push_back(static_cast<int>(x));
    }
    auto configs = expand_grid(space.for_variant(*v), base);
    auto dims = dims_of({train, val}, {train_items});
    auto tr = load_dataset(train, train_items, dims);
    auto va = load_dataset(val, "", dims);
    auto res = grid_search(configs, *v, tr, va, std::max(1u, threads));
    Table t("grid", {"index", "f", "lambda", "epsilon", "c", "ok", "val_rmse", "train_rmse", "epochs", "error"});
    for (std::size_t j = 0; j < res.table.size(); ++j) {
      const auto& r = res.table[j];
      t.add(j, r.config.f, r.config.lambda, r.config.epsilon, r.config.c, r.ok, r.val_rmse, r.train_rmse, r.epochs,
            r.error);
    }
    save_model(out_path("model.txt").string(), ModelArtifact{kModelFormatVersion, res.best_model, res.best_config});
    emit(t);
    Table b("grid_best", {"index", "config", "val_rmse"});
    b.add(res.best_index, describe(res.best_config), res.table[res.best_index].val_rmse);
    emit(b);
    return 0;
  }
};

// --- evaluate ------------------------------------------------------------------

struct EvaluateCmd {
  std::string model, method, train, train_items, test_sets, test_items, truth;
  bool per_user = false;

  void add(CLI::App* sub) {
    sub->add_option("--model", model, "trained model artifact");
    sub->add_option("--method", method, "closed-form baseline instead of a model: setavg|itemavg|usermeansub");
    sub->add_option("--train", train, "training set ratings (cold-start coverage and baselines)")->required();
    sub->add_option("--train-items", train_items, "training item ratings");
    sub->add_option("--test-sets", test_sets, "test set ratings CSV");
    sub->add_option("--test-items", test_items, "test item ratings CSV");
    sub->add_option("--truth", truth, "ground-truth sidecar; adds recovery scores");
    sub->add_flag("--per-user", per_user, "also emit the per-user breakdown");
  }

  int run() const {
    if (model.empty() == method.empty()) throw UsageError("give exactly one of --model or --method");
    auto ts = test_sets.empty() ? std::vector<SetRating>{} : read_set_ratings(test_sets);
    auto ti = test_items.empty() ? std::vector<ItemRating>{} : read_item_ratings(test_items);
    Predictor p;
    std::optional<ModelArtifact> art;
    std::string config;
    RatingsDataset tr;
    if (!model.empty()) {
      art = load_model(model);
      tr = load_dataset(train, train_items,
                        {art->model.factors.num_users(), art->model.factors.num_items()});
      if (tr.num_users != art->model.factors.num_users() || tr.num_items != art->model.factors.num_items())
        throw DataError("training data covers more users or items than the model");
      p = model_predictor(std::string(to_string(art->model.variant)), art->model, tr);
      config = describe(art->config);
    } else {
      tr = load_dataset(train, train_items, {0, 0});
      auto m = parse_method(method);
      if (m == Method::set_avg) p = set_avg_predictor(tr);
      else if (m == Method::item_avg) p = item_avg_predictor(tr);
      else if (m == Method::user_mean_sub) p = user_mean_sub_predictor(tr);
      else throw UsageError("--method must be setavg, itemavg or usermeansub");
    }
    auto rep = evaluate(p, ts, ti, config);
    std::vector<std::string> cols{"method", "set_rmse", "item_rmse", "n_sets", "n_items", "config"};
    std::optional<double> recovery;
    if (!truth.empty()) {
      if (!art) throw UsageError("--truth needs --model");
      auto gt = load_ground_truth(truth);
      if (art->model.esarm && gt.mode == SynthMode::esarm) recovery = esarm_recovery(gt, *art->model.esarm);
      else if (art->model.voarm && gt.mode == SynthMode::voarm) recovery = voarm_recovery(gt, *art->model.voarm);
      if (recovery) cols.push_back("recovery");
    }
    Table t("eval", cols);
    if (recovery) t.add(rep.method, rep.set_rmse, rep.item_rmse, rep.n_sets, rep.n_items, rep.config, *recovery);
    else t.add(rep.method, rep.set_rmse, rep.item_rmse, rep.n_sets, rep.n_items, rep.config);
    emit(t);
    if (per_user) {
      Table u("eval_per_user", {"user", "set_rmse", "n_sets", "item_rmse", "n_items"});
      for (const auto& e : rep.per_user) u.add(e.user, e.set_rmse(), e.n_sets, e.item_rmse(), e.n_items);
      emit(u);
    }
    return 0;
  }
};

// --- analyze -------------------------------------------------------------------

struct AnalyzeCmd {
  std::string kind, sets, items, genres;
  double min_sigma = 0.5;
  std::size_t min_sets = 20;
  double margin = 0.5;
  double picky_threshold = 0.5;
  bool permute = false;
  std::size_t bins = 0;

  void add(CLI::App* sub) {
    sub->add_option("kind", kind, "mrd|pickiness|extremal-fit|jaccard|fractions|model-fit")->required();
    sub->add_option("--sets", sets, "set ratings CSV")->required();
    sub->add_option("--items", items, "item ratings CSV of the same users")->required();
    sub->add_option("--genres", genres, "item,genres CSV with '|'-separated genres (jaccard)");
    sub->add_option("--min-sigma", min_sigma, "minimum member spread of a used set");
    sub->add_option("--min-sets", min_sets, "minimum qualifying sets per profiled user");
    sub->add_option("--margin", margin, "under/over-rating margin");
    sub->add_option("--picky-threshold", picky_threshold, "|pickiness| above which a user is picky");
    sub->add_flag("--permute", permute, "fractions: add the label-permuted population");
    sub->add_option("--bins", bins, "emit a histogram with this many bins instead of raw rows");
  }

  void values_or_histogram(const std::string& name, const std::vector<std::string>& cols,
                           const std::vector<std::vector<double>>& values, const std::vector<std::vector<cli::Cell>>& rows) const {
    if (bins > 0) {
      Table h(name + "_histogram", {"column", "bin_low", "bin_high", "count"});
      for (std::size_t k = 0; k < values.size(); ++k) {
        if (values[k].empty()) continue;
        for (const auto& b : histogram(values[k], bins)) h.add(cols[k], b.low, b.high, b.count);
      }
      emit(h);
      return;
    }
    Table t(name, {});
    t.columns = {"user", "set"};
    for (const auto& c : cols) t.columns.push_back(c);
    t.rows = rows;
    emit(t);
  }

  int run() const {
    auto set_list = read_set_ratings(sets);
    auto lookup = make_lookup(read_item_ratings(items));
    const ProfileOptions opt{min_sigma, min_sets};
    if (kind == "mrd") {
      std::vector<std::vector<double>> v(2);
      std::vector<std::vector<cli::Cell>> rows;
      for (std::size_t k = 0; k < set_list.size(); ++k) {
        auto o = observe(set_list[k], lookup);
        v[0].push_back(mrd(o));
        v[1].push_back(set_diversity(o));
        rows.push_back({static_cast<std::int64_t>(o.user), static_cast<std::int64_t>(k), v[0].back(), v[1].back()});
      }
      values_or_histogram("mrd", {"mrd", "diversity"}, v, rows);
    } else if (kind == "jaccard") {
      if (genres.empty()) {
        std::cerr << "note: no --genres file; jaccard analysis skipped\n";
        return 0;
      }
      auto gt = read_genres(genres);
      std::vector<std::vector<double>> v(2);
      std::vector<std::vector<cli::Cell>> rows;
      for (std::size_t k = 0; k < set_list.size(); ++k) {
        if (set_list[k].items.size() < 2) continue;
        auto o = observe(set_list[k], lookup);
        v[0].push_back(avg_jaccard(gt, set_list[k].items));
        v[1].push_back(mrd(o));
        rows.push_back({static_cast<std::int64_t>(o.user), static_cast<std::int64_t>(k), v[0].back(), v[1].back()});
      }
      values_or_histogram("jaccard", {"avg_jaccard", "mrd"}, v, rows);
    } else if (kind == "fractions") {
      std::map<UserId, std::vector<double>> by_user;
      for (const auto& s : set_list) by_user[s.user].push_back(mrd(s, lookup));
      auto res = under_over_fractions(by_user, margin, permute, g.seed.value_or(1), min_sets);
      std::vector<std::string> cols{"user", "n_sets", "frac_under", "frac_over"};
      if (permute) cols.insert(cols.end(), {"perm_frac_under", "perm_frac_over"});
      Table t("fractions", cols);
      for (std::size_t k = 0; k < res.observed.size(); ++k) {
        const auto& o = res.observed[k];
        if (permute) t.add(o.user, o.n_sets, o.frac_under, o.frac_over, res.permuted[k].frac_under, res.permuted[k].frac_over);
        else t.add(o.user, o.n_sets, o.frac_under, o.frac_over);
      }
      emit(t);
    } else if (kind == "pickiness" || kind == "extremal-fit" || kind == "model-fit") {
      auto q = qualifying_sets(set_list, lookup, opt);
      if (q.empty()) throw DataError("no user has " + std::to_string(min_sets) + " sets with spread >= " + format_double(min_sigma));
      auto profiles = profile_users(q, min_sigma);
      if (kind == "pickiness") {
        Table t("pickiness", {"user", "pickiness", "best_extremal_index", "best_extremal_rmse", "n_sets_used", "picky"});
        for (const auto& p : profiles)
          t.add(p.user, p.pickiness, p.best_extremal_index, p.best_extremal_rmse, p.n_sets_used,
                std::abs(p.pickiness) > picky_threshold);
        emit(t);
      } else if (kind == "extremal-fit") {
        Table t("extremal_fit", {"user", "index", "rmse", "best"});
        for (const auto& [u, v] : q) {
          auto fit = fit_extremal_subset(v);
          for (std::size_t k = 0; k < fit.rmse.size(); ++k) t.add(u, k + 1, fit.rmse[k], k + 1 == fit.best_index);
        }
        emit(t);
      } else {
        auto fit = model_fit_rmse(q, profiles);
        auto ps = picky_split(profiles, picky_threshold);
        Table t("model_fit", {"model", "rmse", "n_sets", "n_users", "picky_users", "non_picky_users"});
        t.add("arm", fit.arm, fit.n_sets, fit.n_users, ps.picky, ps.non_picky);
        t.add("esarm", fit.esarm, fit.n_sets, fit.n_users, ps.picky, ps.non_picky);
        t.add("voarm", fit.voarm, fit.n_sets, fit.n_users, ps.picky, ps.non_picky);
        emit(t);
      }
    } else {
      throw UsageError("unknown analysis '" + kind + "'");
    }
    return 0;
  }
};

// --- predict ---------------------------------------------------------------------

struct PredictCmd {
  std::string model, sets, pairs;

  void add(CLI::App* sub) {
    sub->add_option("--model", model, "trained model artifact")->required();
    sub->add_option("--sets", sets, "sets to rate (rating column is ignored)");
    sub->add_option("--pairs", pairs, "(user,item) pairs to rate as an item-ratings CSV");
  }

  int run() const {
    if (sets.empty() == pairs.empty()) throw UsageError("give exactly one of --sets or --pairs");
    auto art = load_model(model);
    if (!sets.empty()) {
      Table t("predictions", {"user", "rating", "items"});
      for (const auto& s : read_set_ratings(sets)) {
        std::string ids;
        for (std::size_t j = 0; j < s.items.size(); ++j) ids += (j ? ";" : "") + std::to_string(s.items[j]);
        t.add(s.user, predict_set(art.model, s), ids);
      }
      emit(t);
    } else {
      Table t("predictions", {"user", "item", "rating"});
      for (const auto& r : read_item_ratings(pairs)) t.add(r.user, r.item, predict_item(art.model, r.user, r.item));
      emit(t);
    }
    return 0;
  }
};

// --- import ----------------------------------------------------------------------

struct ImportCmd {
  std::string sets_raw, mapping, items_raw, item_mapping;

  void add(CLI::App* sub) {
    sub->add_option("--sets-raw", sets_raw, "foreign set-ratings file")->required();
    sub->add_option("--mapping", mapping, "key=value column mapping for the set file")->required();
    sub->add_option("--items-raw", items_raw, "foreign item-ratings file");
    sub->add_option("--item-mapping", item_mapping, "column mapping for the item file (default: --mapping)");
  }

  int run() const {
    auto sm = ImportMapping::from(read_key_values(mapping));
    auto im = item_mapping.empty() ? sm : ImportMapping::from(read_key_values(item_mapping));
    std::ifstream sin(sets_raw, std::ios::binary);
    if (!sin) throw DataError("cannot open " + sets_raw);
    std::optional<std::ifstream> iin;
    if (!items_raw.empty()) {
      iin.emplace(items_raw, std::ios::binary);
      if (!*iin) throw DataError("cannot open " + items_raw);
    }
    auto data = import_ratings(sin, sm, iin ? &*iin : nullptr, im, sets_raw);
    write_set_ratings(out_path("sets.csv").string(), data.sets);
    write_item_ratings(out_path("items.csv").string(), data.items);
    write_vocabulary(out_path("users_vocab.csv").string(), data.users, "user");
    write_vocabulary(out_path("items_vocab.csv").string(), data.item_ids, "item");
    Table t("import", {"sets", "item_ratings", "users", "items"});
    t.add(data.sets.size(), data.items.size(), data.users.size(), data.item_ids.size());
    emit(t);
    return 0;
  }
};

int fail(const char* kind, const std::string& msg, int code) {
  std::cerr << "error[" << kind << "]: " << msg << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learn user and item factors from set-level ratings."};
  app.fallthrough();
  app.require_subcommand(1);
  app.add_option("--seed", g.seed, "random seed");
  app.add_option("--config", g.config, "key=value configuration file");
  app.add_option("--out", g.out, "output directory");
  app.add_flag("--emit-json", g.emit_json, "print result tables as JSON and write <table>.json");

  GenerateCmd gen;
  SplitCmd spl;
  TrainCmd trn;
  GridCmd grd;
  EvaluateCmd evl;
  AnalyzeCmd ana;
  PredictCmd prd;
  ImportCmd imp;
  std::function<int()> action;
  auto bind = [&](CLI::App* sub, auto& cmd) {
    cmd.add(sub);
    sub->callback([&action, &cmd] { action = [&cmd] { return cmd.run(); }; });
  };
  bind(app.add_subcommand("generate", "synthesize a set-rating dataset with ground truth"), gen);
  bind(app.add_subcommand("split", "per-user train/validation/test split"), spl);
  bind(app.add_subcommand("train", "train one model"), trn);
  bind(app.add_subcommand("gridsearch", "tune hyperparameters on validation set RMSE"), grd);
  bind(app.add_subcommand("evaluate", "score a model or baseline on test data"), evl);
  bind(app.add_subcommand("analyze", "descriptive analyses of set-rating behaviour"), ana);
  bind(app.add_subcommand("predict", "rate sets or (user,item) pairs with a model"), prd);
  bind(app.add_subcommand("import", "map a foreign ratings dump onto the canonical format"), imp);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error[usage]: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    return action ? action() : 1;
  } catch (const UsageError& e) {
    return fail("usage", e.what(), 1);
  } catch (const NumericalError& e) {
    return fail("numerical", e.what(), 3);
  } catch (const DataError& e) {
    return fail("data", e.what(), 2);
  } catch (const std::invalid_argument& e) {
    return fail("data", e.what(), 2);
  } catch (const std::exception& e) {
    return fail("data", e.what(), 2);
  }
}
