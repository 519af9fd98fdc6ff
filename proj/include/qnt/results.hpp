#pragma once

// Accuracy tables: CSV and markdown, with the gap column recomputed on
// every emission.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "qnt/error.hpp"
#include "qnt/train.hpp"

namespace qnt {

struct ResultsRow {
  Algorithm algorithm = Algorithm::none;
  StartMode start = StartMode::cold;
  double blend_rho = 0.0;
  std::string seeds;  // a seed, or "n=10" for an aggregate
  double accuracy = 0.0;
  std::optional<double> accuracy_std;
  std::optional<double> reference;  // full-precision accuracy
  bool failed = false;

  std::optional<double> gap() const {
    if (!reference || failed) return std::nullopt;
    return *reference - accuracy;
  }
};

enum class TableFormat { csv, markdown };

namespace detail {

inline std::string fixed4(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, 4);
  return std::string(buf, r.ptr);
}

inline std::string opt4(const std::optional<double>& v) { return v ? fixed4(*v) : std::string(); }

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string rho_text(double rho) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), rho);
  return std::string(buf, r.ptr);
}

}  // namespace detail

inline std::string emit_table(const std::vector<ResultsRow>& rows, TableFormat format) {
  if (rows.empty()) throw InvalidInput("emit_table: no rows");
  const std::vector<std::string> header = {"algorithm", "start",     "blend_rho", "seeds", "accuracy",
                                           "accuracy_std", "reference", "gap",       "status"};
  auto cells = [](const ResultsRow& r) {
    return std::vector<std::string>{to_string(r.algorithm),
                                    to_string(r.start),
                                    detail::rho_text(r.blend_rho),
                                    r.seeds,
                                    r.failed ? std::string() : detail::fixed4(r.accuracy),
                                    r.failed ? std::string() : detail::opt4(r.accuracy_std),
                                    detail::opt4(r.reference),
                                    detail::opt4(r.gap()),
                                    r.failed ? "failed" : "ok"};
  };

  std::string out;
  if (format == TableFormat::csv) {
    auto line = [&](const std::vector<std::string>& v) {
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += detail::csv_field(v[i]);
      }
      out += '\n';
    };
    line(header);
    for (const auto& r : rows) line(cells(r));
  } else {
    auto line = [&](const std::vector<std::string>& v) {
      out += '|';
      for (const auto& s : v) out += ' ' + s + " |";
      out += '\n';
    };
    line(header);
    out += '|';
    for (std::size_t i = 0; i < header.size(); ++i) out += "---|";
    out += '\n';
    for (const auto& r : rows) line(cells(r));
  }
  return out;
}

/// Markdown grid laid out like the classic accuracy table: one row per
/// (start, blend) pair, one column per algorithm, plus the 32-bit column.
inline std::string emit_grid(const std::vector<ResultsRow>& rows) {
  const ResultsRow* fp = nullptr;
  for (const auto& r : rows) {
    if (r.algorithm == Algorithm::none) fp = &r;
  }
  auto cell = [](const ResultsRow* r) -> std::string {
    if (!r) return "";
    if (r->failed) return "failed";
    std::string s = detail::fixed4(r->accuracy);
    if (r->accuracy_std) s += " ± " + detail::fixed4(*r->accuracy_std);
    return s;
  };

  std::vector<std::pair<StartMode, double>> row_keys;
  for (const auto& r : rows) {
    if (r.algorithm == Algorithm::none) continue;
    const std::pair<StartMode, double> key{r.start, r.blend_rho};
    if (std::find(row_keys.begin(), row_keys.end(), key) == row_keys.end()) row_keys.push_back(key);
  }

  std::string out = "| start | 32 bit | Median BC | BC | BR |\n|---|---|---|---|---|\n";
  for (const auto& [start, rho] : row_keys) {
    auto find = [&](Algorithm a) -> const ResultsRow* {
      for (const auto& r : rows) {
        if (r.algorithm == a && r.start == start && r.blend_rho == rho) return &r;
      }
      return nullptr;
    };
    std::string label = to_string(start);
    if (rho > 0.0) label += ", blend " + detail::rho_text(rho);
    out += "| " + label + " | " + cell(fp) + " | " + cell(find(Algorithm::median_bc)) + " | " +
           cell(find(Algorithm::bc)) + " | " + cell(find(Algorithm::br)) + " |\n";
  }
  return out;
}

inline std::string emit_metrics_csv(const std::vector<MetricsEntry>& log) {
  std::string out = "iteration,train_loss,test_accuracy\n";
  for (const auto& m : log) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof(buf), m.train_loss);
    out += std::to_string(m.iteration) + ',' + std::string(buf, r.ptr) + ',' + detail::fixed4(m.test_accuracy) + '\n';
  }
  return out;
}

}  // namespace qnt
