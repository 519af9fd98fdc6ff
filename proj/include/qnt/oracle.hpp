#pragma once

// Brute-force reference projections. Exponential in the input length; every
// entry point enforces a size cap. Nothing here calls into quantize.hpp
// beyond its result types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "qnt/error.hpp"
#include "qnt/quantize.hpp"

namespace qnt::oracle {

inline constexpr std::size_t kMaxBinaryDim = 12;
inline constexpr std::size_t kMaxTernaryDim = 10;
inline constexpr std::size_t kMaxMbitDim = 6;
inline constexpr std::size_t kMaxMbitLevels = 3;
inline constexpr int kSafetyGridPoints = 10000;

namespace detail {

inline void check_dim(std::span<const double> w, std::size_t cap, const char* what) {
  if (w.empty() || w.size() > cap) {
    throw InvalidInput(std::string(what) + ": oracle supports 1 <= D <= " +
                       std::to_string(cap) + ", got D = " + std::to_string(w.size()));
  }
  for (double x : w) {
    if (!std::isfinite(x)) throw InvalidInput(std::string(what) + ": non-finite entry");
  }
}

// ||s*codes - w|| in the requested norm, written out longhand.
inline double error(std::span<const double> w, std::span<const std::int32_t> codes, double s,
                    Norm norm) {
  double acc = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    const double r = s * static_cast<double>(codes[j]) - w[j];
    acc += norm == Norm::l1 ? std::abs(r) : r * r;
  }
  return norm == Norm::l1 ? acc : std::sqrt(acc);
}

struct ScaleFit {
  double scale = 0.0;
  double objective = std::numeric_limits<double>::infinity();
};

// l1 scale fit for fixed codes: the minimizer over s >= 0 of
// sum_j |s*c_j - w_j| sits at s = 0 or at a breakpoint w_j / c_j.
inline ScaleFit fit_l1_scale(std::span<const double> w, std::span<const std::int32_t> codes) {
  ScaleFit best;
  auto consider = [&](double s) {
    const double obj = error(w, codes, s, Norm::l1);
    if (obj < best.objective) best = {s, obj};
  };
  consider(0.0);
  for (std::size_t j = 0; j < w.size(); ++j) {
    if (codes[j] == 0) continue;
    const double s = w[j] / static_cast<double>(codes[j]);
    if (s >= 0.0) consider(s);
  }
  return best;
}

inline ProjectionResult make_result(std::span<const double> w, std::vector<std::int32_t> codes,
                                    double scale, int bits, Norm norm) {
  ProjectionResult r;
  r.support_size = static_cast<std::size_t>(
      std::count_if(codes.begin(), codes.end(), [](std::int32_t c) { return c != 0; }));
  r.objective = error(w, codes, scale, norm);
  r.quantized.scale = scale;
  r.quantized.codes = std::move(codes);
  r.quantized.bits = bits;
  return r;
}

}  // namespace detail

/// Binary projection by scanning candidate scales with q fixed to sgn(w):
/// every |w_j|, the mean magnitude, and a uniform grid over [0, max|w_j|].
inline ProjectionResult oracle_binary(std::span<const double> w, Norm norm) {
  detail::check_dim(w, kMaxBinaryDim, "oracle_binary");
  std::vector<std::int32_t> codes(w.size());
  double max_mag = 0.0;
  double sum_mag = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    codes[j] = w[j] >= 0.0 ? 1 : -1;
    max_mag = std::max(max_mag, std::abs(w[j]));
    sum_mag += std::abs(w[j]);
  }

  double best_s = 0.0;
  double best = detail::error(w, codes, 0.0, norm);
  auto consider = [&](double s) {
    const double obj = detail::error(w, codes, s, norm);
    if (obj < best) {
      best = obj;
      best_s = s;
    }
  };
  for (double x : w) consider(std::abs(x));
  consider(sum_mag / static_cast<double>(w.size()));
  for (int k = 0; k <= kSafetyGridPoints; ++k) {
    consider(max_mag * static_cast<double>(k) / kSafetyGridPoints);
  }
  return detail::make_result(w, std::move(codes), best_s, 1, norm);
}

/// Exhaustive ternary l1 projection over all of {0, +-1}^D.
inline ProjectionResult oracle_ternary_l1(std::span<const double> w) {
  detail::check_dim(w, kMaxTernaryDim, "oracle_ternary_l1");
  const std::size_t d = w.size();
  const bool all_zero = std::all_of(w.begin(), w.end(), [](double x) { return x == 0.0; });
  if (all_zero) {
    return detail::make_result(w, std::vector<std::int32_t>(d, 0), 0.0, 2, Norm::l1);
  }

  std::vector<std::int32_t> codes(d, -1);
  std::vector<std::int32_t> best_codes;
  detail::ScaleFit best;
  // Odometer over {-1, 0, +1}^D.
  while (true) {
    const bool nonzero = std::any_of(codes.begin(), codes.end(), [](auto c) { return c != 0; });
    if (nonzero) {
      const auto fit = detail::fit_l1_scale(w, codes);
      if (fit.objective < best.objective) {
        best = fit;
        best_codes = codes;
      }
    }
    std::size_t k = 0;
    while (k < d && codes[k] == 1) codes[k++] = -1;
    if (k == d) break;
    ++codes[k];
  }
  return detail::make_result(w, std::move(best_codes), best.scale, 2, Norm::l1);
}

/// Exhaustive ternary l2 projection; the scale for fixed codes is the
/// least-squares fit <w, c> / <c, c>, clamped at zero.
inline ProjectionResult oracle_ternary_l2(std::span<const double> w) {
  detail::check_dim(w, kMaxTernaryDim, "oracle_ternary_l2");
  const std::size_t d = w.size();
  std::vector<std::int32_t> codes(d, -1);
  std::vector<std::int32_t> best_codes(d, 0);
  double best_s = 0.0;
  double best = detail::error(w, best_codes, 0.0, Norm::l2);
  while (true) {
    double wc = 0.0;
    double cc = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      wc += w[j] * codes[j];
      cc += static_cast<double>(codes[j] * codes[j]);
    }
    if (cc > 0.0) {
      const double s = std::max(0.0, wc / cc);
      const double obj = detail::error(w, codes, s, Norm::l2);
      if (obj < best) {
        best = obj;
        best_s = s;
        best_codes = codes;
      }
    }
    std::size_t k = 0;
    while (k < d && codes[k] == 1) codes[k++] = -1;
    if (k == d) break;
    ++codes[k];
  }
  return detail::make_result(w, std::move(best_codes), best_s, 2, Norm::l2);
}

/// Exhaustive m-bit l1 projection over every assignment from the codebook's
/// states, with the scale fitted by a weighted breakpoint scan.
inline ProjectionResult oracle_mbit_l1(std::span<const double> w, const Codebook& codebook) {
  detail::check_dim(w, kMaxMbitDim, "oracle_mbit_l1");
  if (codebook.levels().size() > kMaxMbitLevels) {
    throw InvalidInput("oracle_mbit_l1: codebook has more than " +
                       std::to_string(kMaxMbitLevels) + " levels");
  }
  std::vector<std::int32_t> states;
  if (codebook.admits_zero()) states.push_back(0);
  for (auto q : codebook.levels()) {
    states.push_back(q);
    states.push_back(-q);
  }

  const std::size_t d = w.size();
  const bool all_zero = std::all_of(w.begin(), w.end(), [](double x) { return x == 0.0; });
  std::vector<std::size_t> pick(d, 0);
  std::vector<std::int32_t> codes(d);
  std::vector<std::int32_t> best_codes;
  detail::ScaleFit best;
  while (true) {
    for (std::size_t j = 0; j < d; ++j) codes[j] = states[pick[j]];
    const bool nonzero = std::any_of(codes.begin(), codes.end(), [](auto c) { return c != 0; });
    if (nonzero || all_zero) {
      const auto fit = detail::fit_l1_scale(w, codes);
      if (fit.objective < best.objective) {
        best = fit;
        best_codes = codes;
      }
    }
    std::size_t k = 0;
    while (k < d && pick[k] + 1 == states.size()) pick[k++] = 0;
    if (k == d) break;
    ++pick[k];
  }
  const int bits = static_cast<int>(std::ceil(std::log2(2.0 * codebook.max_level() + 1.0)));
  return detail::make_result(w, std::move(best_codes), best.scale, bits, Norm::l1);
}

}  // namespace qnt::oracle
