#pragma once

// Text file formats: item and set rating CSVs, trained model artifacts,
// ground-truth sidecars, key=value configs, and an adapter that maps foreign
// rating dumps onto the canonical set format.

#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "setrec/analysis.hpp"
#include "setrec/core.hpp"
#include "setrec/synthgen.hpp"
#include "setrec/training.hpp"

namespace setrec {

// --- Scalars -----------------------------------------------------------------

/// Shortest decimal that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

template <class Int>
std::optional<Int> parse_int(std::string_view s) {
  s = trim(s);
  Int v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::vector<std::string_view> split_fields(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

namespace detail {

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return in;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  return out;
}

inline DataError line_error(const std::string& where, std::size_t line, const std::string& what) {
  return DataError(where + ":" + std::to_string(line) + ": " + what);
}

// Column name -> position, from a header line.
inline std::map<std::string, std::size_t, std::less<>> header_columns(std::string_view header) {
  std::map<std::string, std::size_t, std::less<>> cols;
  auto f = split_fields(header, ',');
  for (std::size_t k = 0; k < f.size(); ++k) cols.emplace(std::string(trim(f[k])), k);
  return cols;
}

inline std::size_t require_column(const std::map<std::string, std::size_t, std::less<>>& cols, std::string_view name,
                                  const std::string& where) {
  auto it = cols.find(name);
  if (it == cols.end()) throw line_error(where, 1, "header lacks column '" + std::string(name) + "'");
  return it->second;
}

}  // namespace detail

// --- Rating files ----------------------------------------------------------

/// Header `user,item,rating[,timestamp]`; columns are located by name and
/// unknown columns are ignored.
inline std::vector<ItemRating> read_item_ratings(std::istream& in, const std::string& where = "<item ratings>") {
  std::string line;
  if (!std::getline(in, line)) throw detail::line_error(where, 1, "missing header");
  auto cols = detail::header_columns(line);
  const std::size_t cu = detail::require_column(cols, "user", where);
  const std::size_t ci = detail::require_column(cols, "item", where);
  const std::size_t cr = detail::require_column(cols, "rating", where);
  const std::size_t need = std::max({cu, ci, cr}) + 1;
  std::vector<ItemRating> out;
  for (std::size_t ln = 2; std::getline(in, line); ++ln) {
    if (trim(line).empty()) continue;
    auto f = split_fields(line, ',');
    if (f.size() < need) throw detail::line_error(where, ln, "expected at least " + std::to_string(need) + " fields");
    auto u = parse_int<UserId>(f[cu]);
    auto i = parse_int<ItemId>(f[ci]);
    auto r = parse_double(f[cr]);
    if (!u || !i || !r) throw detail::line_error(where, ln, "malformed row '" + line + "'");
    if (!std::isfinite(*r)) throw detail::line_error(where, ln, "non-finite rating");
    out.push_back(ItemRating{*u, *i, *r});
  }
  return out;
}

inline std::vector<ItemRating> read_item_ratings(const std::string& path) {
  auto in = detail::open_in(path);
  return read_item_ratings(in, path);
}

inline void write_item_ratings(std::ostream& out, const std::vector<ItemRating>& items) {
  out << "user,item,rating\n";
  for (const auto& r : items) out << r.user << ',' << r.item << ',' << format_double(r.rating) << '\n';
}

inline void write_item_ratings(const std::string& path, const std::vector<ItemRating>& items) {
  auto out = detail::open_out(path);
  write_item_ratings(out, items);
}

/// Header `user,rating,items`; items are ';'-separated ids.
inline std::vector<SetRating> read_set_ratings(std::istream& in, const std::string& where = "<set ratings>") {
  std::string line;
  if (!std::getline(in, line)) throw detail::line_error(where, 1, "missing header");
  auto cols = detail::header_columns(line);
  const std::size_t cu = detail::require_column(cols, "user", where);
  const std::size_t cr = detail::require_column(cols, "rating", where);
  const std::size_t cs = detail::require_column(cols, "items", where);
  const std::size_t need = std::max({cu, cr, cs}) + 1;
  std::vector<SetRating> out;
  for (std::size_t ln = 2; std::getline(in, line); ++ln) {
    if (trim(line).empty()) continue;
    auto f = split_fields(line, ',');
    if (f.size() < need) throw detail::line_error(where, ln, "expected at least " + std::to_string(need) + " fields");
    auto u = parse_int<UserId>(f[cu]);
    auto r = parse_double(f[cr]);
    if (!u || !r) throw detail::line_error(where, ln, "malformed row '" + line + "'");
    if (!std::isfinite(*r)) throw detail::line_error(where, ln, "non-finite rating");
    SetRating s{*u, {}, *r};
    if (trim(f[cs]).empty()) throw detail::line_error(where, ln, "empty item list");
    std::unordered_set<ItemId> seen;
    for (auto tok : split_fields(trim(f[cs]), ';')) {
      auto i = parse_int<ItemId>(tok);
      if (!i) throw detail::line_error(where, ln, "malformed item id '" + std::string(tok) + "'");
      if (!seen.insert(*i).second) throw detail::line_error(where, ln, "duplicate item " + std::to_string(*i) + " in set");
      s.items.push_back(*i);
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<SetRating> read_set_ratings(const std::string& path) {
  auto in = detail::open_in(path);
  return read_set_ratings(in, path);
}

inline void write_set_ratings(std::ostream& out, const std::vector<SetRating>& sets) {
  out << "user,rating,items\n";
  for (const auto& s : sets) {
    out << s.user << ',' << format_double(s.rating) << ',';
    for (std::size_t j = 0; j < s.items.size(); ++j) out << (j ? ";" : "") << s.items[j];
    out << '\n';
  }
}

inline void write_set_ratings(const std::string& path, const std::vector<SetRating>& sets) {
  auto out = detail::open_out(path);
  write_set_ratings(out, sets);
}

/// Sidecar `item,genres` with '|'-separated genre names.
inline GenreTable read_genres(const std::string& path) {
  auto in = detail::open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw detail::line_error(path, 1, "missing header");
  auto cols = detail::header_columns(line);
  const std::size_t ci = detail::require_column(cols, "item", path);
  const std::size_t cg = detail::require_column(cols, "genres", path);
  GenreTable out;
  for (std::size_t ln = 2; std::getline(in, line); ++ln) {
    if (trim(line).empty()) continue;
    auto f = split_fields(line, ',');
    if (f.size() <= std::max(ci, cg)) throw detail::line_error(path, ln, "too few fields");
    auto i = parse_int<ItemId>(f[ci]);
    if (!i) throw detail::line_error(path, ln, "malformed item id");
    for (auto g : split_fields(f[cg], '|'))
      if (!trim(g).empty()) out[*i].insert(std::string(trim(g)));
  }
  return out;
}

// --- Token stream for artifacts ----------------------------------------------

namespace detail {

class TokenReader {
 public:
  TokenReader(std::istream& in, std::string where) : in_(in), where_(std::move(where)) {}

  std::string next(const char* what) {
    std::string tok;
    if (!(in_ >> tok)) throw DataError(where_ + ": truncated file (expected " + what + ")");
    return tok;
  }
  void expect(std::string_view word) {
    auto tok = next(std::string(word).c_str());
    if (tok != word) throw DataError(where_ + ": expected '" + std::string(word) + "', found '" + tok + "'");
  }
  double real(const char* what) {
    auto tok = next(what);
    auto v = parse_double(tok);
    if (!v) throw DataError(where_ + ": malformed number '" + tok + "' for " + what);
    return *v;
  }
  template <class Int>
  Int integer(const char* what) {
    auto tok = next(what);
    auto v = parse_int<Int>(tok);
    if (!v) throw DataError(where_ + ": malformed integer '" + tok + "' for " + what);
    return *v;
  }
  Matrix block(std::string_view name, Eigen::Index rows, Eigen::Index cols) {
    expect("block");
    expect(name);
    auto r = integer<Eigen::Index>("block rows");
    auto c = integer<Eigen::Index>("block cols");
    if (r != rows || c != cols)
      throw DataError(where_ + ": shape mismatch for " + std::string(name) + " (" + std::to_string(r) + "x" +
                      std::to_string(c) + ", expected " + std::to_string(rows) + "x" + std::to_string(cols) + ")");
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = real(std::string(name).c_str());
    return m;
  }
  Vector vec(std::string_view name, Eigen::Index n) {
    Matrix m = block(name, 1, n);
    return m.row(0).transpose();
  }
  const std::string& where() const { return where_; }

 private:
  std::istream& in_;
  std::string where_;
};

inline void write_block(std::ostream& out, std::string_view name, const Matrix& m) {
  out << "block " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << format_double(m(i, j));
    out << '\n';
  }
}

inline void write_vec(std::ostream& out, std::string_view name, const Vector& v) {
  write_block(out, name, Matrix(v.transpose()));
}

}  // namespace detail

// --- Configuration -----------------------------------------------------------

/// `key = value` lines; '#' starts a comment. Later keys win.
using KeyValues = std::map<std::string, std::string, std::less<>>;

inline KeyValues parse_key_values(std::istream& in, const std::string& where = "<config>") {
  KeyValues kv;
  std::string line;
  for (std::size_t ln = 1; std::getline(in, line); ++ln) {
    std::string_view v = line;
    if (auto h = v.find('#'); h != std::string_view::npos) v = v.substr(0, h);
    v = trim(v);
    if (v.empty()) continue;
    auto eq = v.find('=');
    if (eq == std::string_view::npos) throw detail::line_error(where, ln, "expected key=value");
    auto key = trim(v.substr(0, eq));
    if (key.empty()) throw detail::line_error(where, ln, "empty key");
    kv[std::string(key)] = std::string(trim(v.substr(eq + 1)));
  }
  return kv;
}

inline KeyValues read_key_values(const std::string& path) {
  auto in = detail::open_in(path);
  return parse_key_values(in, path);
}

inline bool parse_bool(std::string_view s, const std::string& key) {
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return false;
  throw DataError("config: '" + key + "' expects a boolean, got '" + std::string(s) + "'");
}

/// Overrides the fields of cfg named in kv. Unknown keys are returned.
inline std::vector<std::string> apply_config(const KeyValues& kv, ExperimentConfig& cfg) {
  std::vector<std::string> unknown;
  auto real = [](const std::string& k, const std::string& v) {
    auto d = parse_double(v);
    if (!d) throw DataError("config: '" + k + "' expects a number, got '" + v + "'");
    return *d;
  };
  auto integer = [](const std::string& k, const std::string& v) {
    auto d = parse_int<long long>(v);
    if (!d) throw DataError("config: '" + k + "' expects an integer, got '" + v + "'");
    return *d;
  };
  for (const auto& [k, v] : kv) {
    if (k == "eta") cfg.eta = real(k, v);
    else if (k == "lambda") cfg.lambda = real(k, v);
    else if (k == "f") cfg.f = static_cast<int>(integer(k, v));
    else if (k == "epsilon") cfg.epsilon = real(k, v);
    else if (k == "c") cfg.c = real(k, v);
    else if (k == "max_iter") cfg.max_iter = static_cast<int>(integer(k, v));
    else if (k == "patience") cfg.patience = static_cast<int>(integer(k, v));
    else if (k == "seed") cfg.seed = static_cast<std::uint64_t>(integer(k, v));
    else if (k == "use_biases") cfg.use_biases = parse_bool(v, k);
    else if (k == "eta_beta") cfg.eta_beta = real(k, v);
    else if (k == "beta_init") cfg.beta_init = real(k, v);
    else if (k == "refresh_weights") cfg.refresh_weights = parse_bool(v, k);
    else unknown.push_back(k);
  }
  return unknown;
}

inline KeyValues config_to_key_values(const ExperimentConfig& cfg) {
  KeyValues kv;
  kv["eta"] = format_double(cfg.eta);
  kv["lambda"] = format_double(cfg.lambda);
  kv["f"] = std::to_string(cfg.f);
  kv["epsilon"] = format_double(cfg.epsilon);
  kv["c"] = format_double(cfg.c);
  kv["max_iter"] = std::to_string(cfg.max_iter);
  kv["patience"] = std::to_string(cfg.patience);
  kv["seed"] = std::to_string(cfg.seed);
  kv["use_biases"] = cfg.use_biases ? "1" : "0";
  if (cfg.eta_beta) kv["eta_beta"] = format_double(*cfg.eta_beta);
  if (cfg.beta_init) kv["beta_init"] = format_double(*cfg.beta_init);
  kv["refresh_weights"] = cfg.refresh_weights ? "1" : "0";
  return kv;
}

// --- Model artifacts ---------------------------------------------------------

inline constexpr int kModelFormatVersion = 1;

struct ModelArtifact {
  int format_version = kModelFormatVersion;
  ModelState model;
  ExperimentConfig config;

  friend bool operator==(const ModelArtifact&, const ModelArtifact&) = default;
};

inline void save_model(std::ostream& out, const ModelArtifact& a) {
  const auto& fm = a.model.factors;
  out << "setrec-model " << a.format_version << '\n';
  out << "variant " << to_string(a.model.variant) << '\n';
  out << "users " << fm.num_users() << "\nitems " << fm.num_items() << "\nfactors " << fm.factors() << '\n';
  out << "seed " << a.config.seed << '\n';
  const auto kv = config_to_key_values(a.config);
  out << "config " << kv.size() << '\n';
  for (const auto& [k, v] : kv) out << k << ' ' << v << '\n';
  out << "biases " << (fm.use_biases ? 1 : 0) << '\n';
  detail::write_block(out, "P", fm.P);
  detail::write_block(out, "Q", fm.Q);
  if (fm.use_biases) {
    out << "mu " << format_double(fm.mu) << '\n';
    detail::write_vec(out, "b_user", fm.b_user);
    detail::write_vec(out, "b_item", fm.b_item);
  }
  if (a.model.esarm) {
    out << "esarm " << format_double(a.model.esarm->peak_floor) << ' ' << a.model.esarm->set_size << '\n';
    detail::write_block(out, "weights", a.model.esarm->weights);
  }
  if (a.model.voarm) {
    out << "voarm " << format_double(a.model.voarm->epsilon) << '\n';
    detail::write_vec(out, "beta", a.model.voarm->beta);
  }
  out << "end\n";
}

inline void save_model(const std::string& path, const ModelArtifact& a) {
  std::ostringstream buf;
  save_model(buf, a);
  auto out = detail::open_out(path);
  out << buf.str();
  if (!out) throw DataError("failed writing " + path);
}

/// Throws on unknown version, truncation, shape mismatch, or (when given) a
/// variant other than `expected`.
inline ModelArtifact load_model(std::istream& in, const std::string& where = "<model>",
                                std::optional<Variant> expected = std::nullopt) {
  detail::TokenReader rd(in, where);
  ModelArtifact a;
  rd.expect("setrec-model");
  a.format_version = rd.integer<int>("format version");
  if (a.format_version != kModelFormatVersion)
    throw DataError(where + ": unsupported model format version " + std::to_string(a.format_version));
  rd.expect("variant");
  auto tag = rd.next("variant tag");
  auto v = parse_variant(tag);
  if (!v) throw DataError(where + ": unknown variant '" + tag + "'");
  if (expected && *v != *expected)
    throw DataError(where + ": model variant is " + tag + ", expected " + std::string(to_string(*expected)));
  rd.expect("users");
  auto nu = rd.integer<std::size_t>("users");
  rd.expect("items");
  auto ni = rd.integer<std::size_t>("items");
  rd.expect("factors");
  auto f = rd.integer<int>("factors");
  rd.expect("seed");
  auto seed = rd.integer<std::uint64_t>("seed");
  rd.expect("config");
  auto nkv = rd.integer<std::size_t>("config entries");
  KeyValues kv;
  for (std::size_t k = 0; k < nkv; ++k) {
    auto key = rd.next("config key");
    kv[key] = rd.next("config value");
  }
  apply_config(kv, a.config);
  if (a.config.seed != seed) throw DataError(where + ": seed in header disagrees with config");
  rd.expect("biases");
  const bool biases = rd.integer<int>("biases") != 0;
  if (f < 1) throw DataError(where + ": factor count must be positive");

  ModelState& m = a.model;
  m.variant = *v;
  m.factors = FactorModel(nu, ni, f, biases);
  const auto nue = static_cast<Eigen::Index>(nu), nie = static_cast<Eigen::Index>(ni);
  m.factors.P = rd.block("P", nue, f);
  m.factors.Q = rd.block("Q", nie, f);
  if (biases) {
    rd.expect("mu");
    m.factors.mu = rd.real("mu");
    m.factors.b_user = rd.vec("b_user", nue);
    m.factors.b_item = rd.vec("b_item", nie);
  }
  if (*v == Variant::esarm) {
    rd.expect("esarm");
    EsarmParams e;
    e.peak_floor = rd.real("peak floor");
    e.set_size = rd.integer<std::size_t>("set size");
    e.weights = rd.block("weights", nue, static_cast<Eigen::Index>(extremal_count(std::max<std::size_t>(e.set_size, 1))));
    m.esarm = std::move(e);
  }
  if (*v == Variant::voarm) {
    rd.expect("voarm");
    VoarmParams p;
    p.epsilon = rd.real("epsilon");
    p.beta = rd.vec("beta", nue);
    m.voarm = std::move(p);
  }
  rd.expect("end");
  return a;
}

inline ModelArtifact load_model(const std::string& path, std::optional<Variant> expected = std::nullopt) {
  auto in = detail::open_in(path);
  return load_model(in, path, expected);
}

// --- Ground-truth sidecar ------------------------------------------------------

inline void save_ground_truth(std::ostream& out, const GroundTruth& gt) {
  out << "setrec-truth 1\n";
  out << "mode " << to_string(gt.mode) << '\n';
  out << "alpha " << format_double(gt.alpha) << '\n';
  out << "set_size " << gt.set_size << '\n';
  detail::write_block(out, "P_true", gt.P_true);
  detail::write_block(out, "Q_true", gt.Q_true);
  out << "selected " << gt.selected_users.size() << '\n';
  for (std::size_t k = 0; k < gt.selected_users.size(); ++k) out << (k ? " " : "") << gt.selected_users[k];
  out << '\n';
  out << "extremal_index " << gt.extremal_index.size() << '\n';
  for (std::size_t k = 0; k < gt.extremal_index.size(); ++k) out << (k ? " " : "") << gt.extremal_index[k];
  out << '\n';
  out << "beta " << gt.beta.size() << '\n';
  for (std::size_t k = 0; k < gt.beta.size(); ++k) out << (k ? " " : "") << format_double(gt.beta[k]);
  out << "\nend\n";
}

inline void save_ground_truth(const std::string& path, const GroundTruth& gt) {
  std::ostringstream buf;
  save_ground_truth(buf, gt);
  auto out = detail::open_out(path);
  out << buf.str();
}

inline GroundTruth load_ground_truth(std::istream& in, const std::string& where = "<truth>") {
  detail::TokenReader rd(in, where);
  GroundTruth gt;
  rd.expect("setrec-truth");
  if (rd.integer<int>("version") != 1) throw DataError(where + ": unsupported ground-truth version");
  rd.expect("mode");
  auto tag = rd.next("mode");
  auto mode = parse_synth_mode(tag);
  if (!mode) throw DataError(where + ": unknown mode '" + tag + "'");
  gt.mode = *mode;
  rd.expect("alpha");
  gt.alpha = rd.real("alpha");
  rd.expect("set_size");
  gt.set_size = rd.integer<std::size_t>("set size");
  // Shapes are read from the block headers themselves.
  auto read_any_block = [&](std::string_view name) {
    rd.expect("block");
    rd.expect(name);
    auto r = rd.integer<Eigen::Index>("rows");
    auto c = rd.integer<Eigen::Index>("cols");
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rd.real(std::string(name).c_str());
    return m;
  };
  gt.P_true = read_any_block("P_true");
  gt.Q_true = read_any_block("Q_true");
  if (gt.P_true.cols() != gt.Q_true.cols()) throw DataError(where + ": factor ranks disagree");
  rd.expect("selected");
  auto ns = rd.integer<std::size_t>("selected count");
  for (std::size_t k = 0; k < ns; ++k) gt.selected_users.push_back(rd.integer<UserId>("selected user"));
  rd.expect("extremal_index");
  auto ne = rd.integer<std::size_t>("extremal count");
  for (std::size_t k = 0; k < ne; ++k) gt.extremal_index.push_back(rd.integer<int>("extremal index"));
  rd.expect("beta");
  auto nb = rd.integer<std::size_t>("beta count");
  for (std::size_t k = 0; k < nb; ++k) gt.beta.push_back(rd.real("beta"));
  rd.expect("end");
  return gt;
}

inline GroundTruth load_ground_truth(const std::string& path) {
  auto in = detail::open_in(path);
  return load_ground_truth(in, path);
}

// --- Import adapter ------------------------------------------------------------

/// Raw id string -> dense index, in order of first appearance.
class Vocabulary {
 public:
  std::uint32_t intern(std::string_view raw) {
    auto it = index_.find(std::string(raw));
    if (it != index_.end()) return it->second;
    const auto id = static_cast<std::uint32_t>(names_.size());
    names_.emplace_back(raw);
    index_.emplace(names_.back(), id);
    return id;
  }
  std::optional<std::uint32_t> find(std::string_view raw) const {
    auto it = index_.find(std::string(raw));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

/// Describes a foreign delimited file. Set rows carry a member list in one
/// column; item rows carry one item per row.
struct ImportMapping {
  char delimiter = ',';
  bool has_header = true;
  std::string user_column = "user";
  std::string rating_column = "rating";
  std::string items_column = "items";  // sets
  char item_separator = ';';
  std::string item_column = "item";  // item rows
  // Columns may also be given by 0-based position when the file has no header.
  std::optional<std::size_t> user_index, rating_index, items_index, item_index;

  static ImportMapping from(const KeyValues& kv) {
    ImportMapping m;
    auto ch = [](const std::string& k, const std::string& v) {
      if (v == "tab" || v == "\\t") return '\t';
      if (v.size() != 1) throw DataError("import mapping: '" + k + "' must be one character");
      return v[0];
    };
    auto pos = [](const std::string& k, const std::string& v) {
      auto p = parse_int<std::size_t>(v);
      if (!p) throw DataError("import mapping: '" + k + "' must be a column position");
      return *p;
    };
    for (const auto& [k, v] : kv) {
      if (k == "delimiter") m.delimiter = ch(k, v);
      else if (k == "has_header") m.has_header = parse_bool(v, k);
      else if (k == "user_column") m.user_column = v;
      else if (k == "rating_column") m.rating_column = v;
      else if (k == "items_column") m.items_column = v;
      else if (k == "item_separator") m.item_separator = ch(k, v);
      else if (k == "item_column") m.item_column = v;
      else if (k == "user_index") m.user_index = pos(k, v);
      else if (k == "rating_index") m.rating_index = pos(k, v);
      else if (k == "items_index") m.items_index = pos(k, v);
      else if (k == "item_index") m.item_index = pos(k, v);
      else throw DataError("import mapping: unknown key '" + k + "'");
    }
    return m;
  }
};

struct ImportedData {
  std::vector<SetRating> sets;
  std::vector<ItemRating> items;
  Vocabulary users;
  Vocabulary item_ids;
};

namespace detail {

struct ImportColumns {
  std::size_t user = 0, rating = 0, members = 0;
};

inline ImportColumns resolve_columns(const ImportMapping& m, std::istream& in, const std::string& where,
                                     bool sets) {
  ImportColumns c;
  std::map<std::string, std::size_t, std::less<>> names;
  if (m.has_header) {
    std::string header;
    if (!std::getline(in, header)) throw line_error(where, 1, "missing header");
    auto f = split_fields(header, m.delimiter);
    for (std::size_t k = 0; k < f.size(); ++k) {
      auto name = trim(f[k]);
      if (name.size() >= 2 && name.front() == '"' && name.back() == '"') name = name.substr(1, name.size() - 2);
      names.emplace(std::string(name), k);
    }
  }
  auto pick = [&](const std::optional<std::size_t>& idx, const std::string& name) {
    if (idx) return *idx;
    if (!m.has_header) throw DataError(where + ": file has no header, give the column position for '" + name + "'");
    auto it = names.find(name);
    if (it == names.end()) throw line_error(where, 1, "header lacks column '" + name + "'");
    return it->second;
  };
  c.user = pick(m.user_index, m.user_column);
  c.rating = pick(m.rating_index, m.rating_column);
  c.members = sets ? pick(m.items_index, m.items_column) : pick(m.item_index, m.item_column);
  return c;
}

inline std::string_view unquote(std::string_view s) {
  s = trim(s);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return trim(s);
}

}  // namespace detail

/// Reads foreign set rows (and optionally item rows) and re-indexes users and
/// items densely via shared vocabularies.
inline ImportedData import_ratings(std::istream& sets_in, const ImportMapping& set_map, std::istream* items_in,
                                   const ImportMapping& item_map, const std::string& where = "<import>") {
  ImportedData out;
  {
    auto c = detail::resolve_columns(set_map, sets_in, where, true);
    std::string line;
    for (std::size_t ln = set_map.has_header ? 2 : 1; std::getline(sets_in, line); ++ln) {
      if (trim(line).empty()) continue;
      auto f = split_fields(line, set_map.delimiter);
      if (f.size() <= std::max({c.user, c.rating, c.members})) throw detail::line_error(where, ln, "too few fields");
      auto r = parse_double(detail::unquote(f[c.rating]));
      if (!r) throw detail::line_error(where, ln, "malformed rating");
      SetRating s{out.users.intern(detail::unquote(f[c.user])), {}, *r};
      std::unordered_set<ItemId> seen;
      for (auto tok : split_fields(detail::unquote(f[c.members]), set_map.item_separator)) {
        tok = trim(tok);
        if (tok.empty()) continue;
        ItemId i = out.item_ids.intern(tok);
        if (!seen.insert(i).second) throw detail::line_error(where, ln, "duplicate item in set");
        s.items.push_back(i);
      }
      if (s.items.empty()) throw detail::line_error(where, ln, "empty item list");
      out.sets.push_back(std::move(s));
    }
  }
  if (items_in) {
    auto c = detail::resolve_columns(item_map, *items_in, where + " (items)", false);
    std::string line;
    for (std::size_t ln = item_map.has_header ? 2 : 1; std::getline(*items_in, line); ++ln) {
      if (trim(line).empty()) continue;
      auto f = split_fields(line, item_map.delimiter);
      if (f.size() <= std::max({c.user, c.rating, c.members}))
        throw detail::line_error(where + " (items)", ln, "too few fields");
      auto r = parse_double(detail::unquote(f[c.rating]));
      if (!r) throw detail::line_error(where + " (items)", ln, "malformed rating");
      out.items.push_back(ItemRating{out.users.intern(detail::unquote(f[c.user])),
                                     out.item_ids.intern(detail::unquote(f[c.members])), *r});
    }
  }
  return out;
}

inline void write_vocabulary(const std::string& path, const Vocabulary& v, std::string_view kind) {
  auto out = detail::open_out(path);
  out << "index," << kind << '\n';
  for (std::size_t k = 0; k < v.size(); ++k) out << k << ',' << v.names()[k] << '\n';
}

}  // namespace setrec
