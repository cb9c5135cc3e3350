#pragma once

// Results tables for the command line: one header, typed cells, rendered as
// CSV or as a JSON array of row objects.

#include <cstdint>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "setrec/io.hpp"

namespace setrec::cli {

using Cell = std::variant<std::string, double, std::int64_t>;

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  Table(std::string n, std::vector<std::string> cols) : name(std::move(n)), columns(std::move(cols)) {}

  template <class... Ts>
  void add(Ts&&... cells) {
    rows.push_back({to_cell(std::forward<Ts>(cells))...});
  }

  void write_csv(std::ostream& out) const {
    for (std::size_t k = 0; k < columns.size(); ++k) out << (k ? "," : "") << columns[k];
    out << '\n';
    for (const auto& r : rows) {
      for (std::size_t k = 0; k < r.size(); ++k) out << (k ? "," : "") << render(r[k]);
      out << '\n';
    }
  }

  nlohmann::ordered_json to_json() const {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
      nlohmann::ordered_json obj = nlohmann::ordered_json::object();
      for (std::size_t k = 0; k < r.size() && k < columns.size(); ++k)
        std::visit([&](const auto& v) { obj[columns[k]] = v; }, r[k]);
      arr.push_back(std::move(obj));
    }
    return arr;
  }

 private:
  static Cell to_cell(const char* s) { return std::string(s); }
  static Cell to_cell(std::string s) { return s; }
  static Cell to_cell(std::string_view s) { return std::string(s); }
  static Cell to_cell(double v) { return v; }
  static Cell to_cell(bool v) { return static_cast<std::int64_t>(v); }
  template <class I, class = std::enable_if_t<std::is_integral_v<I>>>
  static Cell to_cell(I v) {
    return static_cast<std::int64_t>(v);
  }

  static std::string render(const Cell& c) {
    if (auto s = std::get_if<std::string>(&c)) {
      if (s->find_first_of(",\"\n") == std::string::npos) return *s;
      std::string q = "\"";
      for (char ch : *s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
      return q + "\"";
    }
    if (auto d = std::get_if<double>(&c)) return format_double(*d);
    return std::to_string(std::get<std::int64_t>(c));
  }
};

}  // namespace setrec::cli
