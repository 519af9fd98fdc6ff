#pragma once

// Projections of a real vector onto scaled binary, ternary and m-bit sets.
//
// All projectors share one scale per input vector (z = s * q). Binary codes
// use sgn(0) = +1; ternary and m-bit codes may be 0. An all-zero input
// yields scale 0 and objective 0 with `degenerate` set.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qnt/error.hpp"

namespace qnt {

enum class Norm { l1, l2 };

inline const char* to_string(Norm n) { return n == Norm::l1 ? "l1" : "l2"; }

struct QuantizedVector {
  double scale = 0.0;
  std::vector<std::int32_t> codes;
  int bits = 1;

  std::vector<double> dense() const {
    std::vector<double> out(codes.size());
    for (std::size_t j = 0; j < codes.size(); ++j) out[j] = scale * static_cast<double>(codes[j]);
    return out;
  }
};

struct ProjectionResult {
  QuantizedVector quantized;
  double objective = 0.0;        // ||dense - w|| in the projector's norm
  std::size_t support_size = 0;  // nonzero codes
  bool degenerate = false;       // all-zero input, or Lloyd collapsed to all-zero codes
};

/// Admissible magnitudes {q_1 < ... < q_m} for m-bit codes; states are
/// {+-q_1, ..., +-q_m}, plus 0 when `admits_zero`.
class Codebook {
 public:
  explicit Codebook(std::vector<std::int32_t> levels, bool admits_zero = false)
      : levels_(std::move(levels)), admits_zero_(admits_zero) {
    if (levels_.empty()) throw InvalidInput("codebook: no levels");
    for (std::size_t i = 0; i < levels_.size(); ++i) {
      if (levels_[i] <= 0) throw InvalidInput("codebook: levels must be positive");
      if (i > 0 && levels_[i] <= levels_[i - 1]) {
        throw InvalidInput("codebook: levels must be strictly increasing");
      }
    }
  }

  std::span<const std::int32_t> levels() const { return levels_; }
  bool admits_zero() const { return admits_zero_; }
  std::int32_t max_level() const { return levels_.back(); }

  /// States ordered by nondecreasing |code|, positive before negative.
  std::vector<std::int32_t> states() const {
    std::vector<std::int32_t> s;
    if (admits_zero_) s.push_back(0);
    for (auto q : levels_) {
      s.push_back(q);
      s.push_back(-q);
    }
    return s;
  }

 private:
  std::vector<std::int32_t> levels_;
  bool admits_zero_;
};

namespace detail {

inline void require_valid(std::span<const double> w, const char* op) {
  if (w.empty()) throw InvalidInput(std::string(op) + ": empty input vector");
  for (std::size_t j = 0; j < w.size(); ++j) {
    if (!std::isfinite(w[j])) {
      throw InvalidInput(std::string(op) + ": non-finite entry at index " + std::to_string(j));
    }
  }
}

inline bool all_zero(std::span<const double> w) {
  return std::all_of(w.begin(), w.end(), [](double x) { return x == 0.0; });
}

// Order statistic at index (n-1)/2 of an ascending sort: the middle element
// for odd n, the lower of the two middle elements for even n.
inline double lower_median(std::vector<double> v) {
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>((v.size() - 1) / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

// Indices sorted by |w_j| descending; equal magnitudes keep index order.
inline std::vector<std::size_t> by_magnitude_desc(std::span<const double> w) {
  std::vector<std::size_t> order(w.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(w[a]) > std::abs(w[b]); });
  return order;
}

inline ProjectionResult finish(std::span<const double> w, QuantizedVector q, Norm norm,
                               bool degenerate = false);

}  // namespace detail

/// ||scale * codes - w|| in the given norm.
inline double reconstruction_error(const QuantizedVector& q, std::span<const double> w,
                                   Norm norm) {
  double acc = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    const double r = q.scale * static_cast<double>(q.codes[j]) - w[j];
    acc += norm == Norm::l1 ? std::abs(r) : r * r;
  }
  return norm == Norm::l1 ? acc : std::sqrt(acc);
}

namespace detail {

inline ProjectionResult finish(std::span<const double> w, QuantizedVector q, Norm norm,
                               bool degenerate) {
  ProjectionResult r;
  r.objective = reconstruction_error(q, w, norm);
  r.support_size = static_cast<std::size_t>(
      std::count_if(q.codes.begin(), q.codes.end(), [](std::int32_t c) { return c != 0; }));
  r.quantized = std::move(q);
  r.degenerate = degenerate;
  return r;
}

inline std::vector<std::int32_t> binary_signs(std::span<const double> w) {
  std::vector<std::int32_t> codes(w.size());
  std::transform(w.begin(), w.end(), codes.begin(), [](double x) { return x >= 0.0 ? 1 : -1; });
  return codes;
}

}  // namespace detail

/// Nearest s * {+-1}^D in l2: s is the mean magnitude.
inline ProjectionResult project_binary_l2(std::span<const double> w) {
  detail::require_valid(w, "project_binary_l2");
  QuantizedVector q;
  q.bits = 1;
  q.codes = detail::binary_signs(w);
  double sum = 0.0;
  for (double x : w) sum += std::abs(x);
  q.scale = sum / static_cast<double>(w.size());
  return detail::finish(w, std::move(q), Norm::l2, detail::all_zero(w));
}

/// Nearest s * {+-1}^D in l1: s is the (lower) median magnitude.
inline ProjectionResult project_binary_l1(std::span<const double> w) {
  detail::require_valid(w, "project_binary_l1");
  QuantizedVector q;
  q.bits = 1;
  q.codes = detail::binary_signs(w);
  std::vector<double> mags(w.size());
  std::transform(w.begin(), w.end(), mags.begin(), [](double x) { return std::abs(x); });
  q.scale = detail::lower_median(std::move(mags));
  return detail::finish(w, std::move(q), Norm::l1, detail::all_zero(w));
}

inline ProjectionResult project_binary(std::span<const double> w, Norm norm) {
  return norm == Norm::l1 ? project_binary_l1(w) : project_binary_l2(w);
}

/// Nearest s * {0, +-1}^D in l1.
///
/// For each support size t the support is the t largest magnitudes and the
/// best scale on it is their lower median; the scan over t uses prefix sums
/// of the sorted magnitudes, so the whole projection is O(D log D). Ties in
/// the scan go to the smaller t.
inline ProjectionResult project_ternary_l1(std::span<const double> w) {
  detail::require_valid(w, "project_ternary_l1");
  const std::size_t d = w.size();
  QuantizedVector q;
  q.bits = 2;
  q.codes.assign(d, 0);
  if (detail::all_zero(w)) return detail::finish(w, std::move(q), Norm::l1, true);

  const auto order = detail::by_magnitude_desc(w);
  std::vector<double> a(d);      // magnitudes, descending
  std::vector<double> pre(d + 1, 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    a[k] = std::abs(w[order[k]]);
    pre[k + 1] = pre[k] + a[k];
  }

  std::size_t best_t = 1;
  double best_obj = std::numeric_limits<double>::infinity();
  for (std::size_t t = 1; t <= d; ++t) {
    // Lower median of a[0..t) sits at descending position t-1-(t-1)/2.
    const std::size_t m = t - 1 - (t - 1) / 2;
    const double s = a[m];
    const double above = pre[m] - static_cast<double>(m) * s;
    const double below = static_cast<double>(t - 1 - m) * s - (pre[t] - pre[m + 1]);
    const double obj = (pre[d] - pre[t]) + above + below;
    if (obj < best_obj) {
      best_obj = obj;
      best_t = t;
    }
  }

  q.scale = a[best_t - 1 - (best_t - 1) / 2];
  for (std::size_t k = 0; k < best_t; ++k) {
    const double x = w[order[k]];
    q.codes[order[k]] = x > 0.0 ? 1 : (x < 0.0 ? -1 : 0);
  }
  return detail::finish(w, std::move(q), Norm::l1);
}

/// Nearest s * {0, +-1}^D in l2: t* maximizes (sum of t largest magnitudes)^2 / t,
/// smaller t on ties; s is the mean magnitude over the support.
inline ProjectionResult project_ternary_l2(std::span<const double> w) {
  detail::require_valid(w, "project_ternary_l2");
  const std::size_t d = w.size();
  QuantizedVector q;
  q.bits = 2;
  q.codes.assign(d, 0);
  if (detail::all_zero(w)) return detail::finish(w, std::move(q), Norm::l2, true);

  const auto order = detail::by_magnitude_desc(w);
  double partial = 0.0;
  double best_score = -1.0;
  double best_sum = 0.0;
  std::size_t best_t = 1;
  for (std::size_t t = 1; t <= d; ++t) {
    partial += std::abs(w[order[t - 1]]);
    const double score = partial * partial / static_cast<double>(t);
    if (score > best_score) {
      best_score = score;
      best_sum = partial;
      best_t = t;
    }
  }
  q.scale = best_sum / static_cast<double>(best_t);
  for (std::size_t k = 0; k < best_t; ++k) {
    const double x = w[order[k]];
    q.codes[order[k]] = x > 0.0 ? 1 : (x < 0.0 ? -1 : 0);
  }
  return detail::finish(w, std::move(q), Norm::l2);
}

/// Minimizer of sum_i weights_i * |s - values_i|.
///
/// Pairs are sorted by value; the result is the value at the first sorted
/// position k where 2 * (weights_1 + ... + weights_k) exceeds the total.
inline double weighted_median(std::span<const double> values, std::span<const double> weights) {
  if (values.empty()) throw InvalidInput("weighted_median: empty input");
  if (values.size() != weights.size()) {
    throw InvalidInput("weighted_median: values and weights differ in length");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) throw InvalidInput("weighted_median: non-finite value");
    if (!(weights[i] > 0.0) || !std::isfinite(weights[i])) {
      throw InvalidInput("weighted_median: weights must be positive and finite");
    }
    total += weights[i];
  }
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  double cumulative = 0.0;
  for (std::size_t i : order) {
    cumulative += weights[i];
    if (total < 2.0 * cumulative) return values[i];
  }
  return values[order.back()];
}

struct LloydOptions {
  int max_iters = 50;
  double tol = 1e-10;
  std::optional<double> initial_scale;  // defaults to the l1 binary scale
};

/// Per-iteration record, filled when a trace is requested.
struct LloydTrace {
  std::vector<double> objectives;  // l1 objective after each (q, s) iteration
  std::vector<double> scales;
  int iterations = 0;
  bool converged = false;
};

namespace detail {

inline std::int32_t nearest_state(double s, double x, std::span<const std::int32_t> states) {
  std::int32_t best = states.front();
  double best_dist = std::abs(s * static_cast<double>(best) - x);
  for (std::size_t i = 1; i < states.size(); ++i) {
    const double dist = std::abs(s * static_cast<double>(states[i]) - x);
    if (dist < best_dist) {
      best_dist = dist;
      best = states[i];
    }
  }
  return best;
}

}  // namespace detail

/// Lloyd q-update: each code is the nearest admissible state at scale `s`,
/// ties to the smaller magnitude.
inline std::vector<std::int32_t> lloyd_assign(std::span<const double> w, double s,
                                              const Codebook& codebook) {
  const auto states = codebook.states();
  std::vector<std::int32_t> codes(w.size());
  for (std::size_t j = 0; j < w.size(); ++j) codes[j] = detail::nearest_state(s, w[j], states);
  return codes;
}

/// Lloyd s-update: weighted median of w_j / c_j with weights |c_j| over
/// nonzero codes. Requires at least one nonzero code.
inline double lloyd_rescale(std::span<const double> w, std::span<const std::int32_t> codes) {
  std::vector<double> values;
  std::vector<double> weights;
  for (std::size_t j = 0; j < w.size(); ++j) {
    if (codes[j] == 0) continue;
    values.push_back(w[j] / static_cast<double>(codes[j]));
    weights.push_back(std::abs(static_cast<double>(codes[j])));
  }
  return weighted_median(values, weights);
}

/// m-bit l1 quantization by alternating assignment and weighted-median
/// centroid steps. Stops when codes repeat, when the objective drops by less
/// than `tol`, or after `max_iters` iterations.
inline ProjectionResult lloyd_mbit(std::span<const double> w, const Codebook& codebook,
                                   const LloydOptions& opts = {}, LloydTrace* trace = nullptr) {
  detail::require_valid(w, "lloyd_mbit");
  if (opts.max_iters < 1) throw InvalidInput("lloyd_mbit: max_iters must be >= 1");
  if (!(opts.tol >= 0.0)) throw InvalidInput("lloyd_mbit: tol must be nonnegative");

  QuantizedVector q;
  q.bits = static_cast<int>(std::ceil(std::log2(2.0 * codebook.max_level() + 1.0)));
  if (detail::all_zero(w)) {
    q.codes = lloyd_assign(w, 0.0, codebook);
    return detail::finish(w, std::move(q), Norm::l1, true);
  }

  double s = opts.initial_scale ? *opts.initial_scale : project_binary_l1(w).quantized.scale;
  if (!std::isfinite(s) || s < 0.0) throw InvalidInput("lloyd_mbit: invalid initial scale");

  std::vector<std::int32_t> codes;
  double prev_obj = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= opts.max_iters; ++it) {
    auto next = lloyd_assign(w, s, codebook);
    const bool all_zero_codes =
        std::all_of(next.begin(), next.end(), [](std::int32_t c) { return c == 0; });
    if (all_zero_codes) {
      q.scale = s;
      q.codes = std::move(next);
      return detail::finish(w, std::move(q), Norm::l1, true);
    }
    if (it > 1 && next == codes) {
      if (trace) trace->converged = true;
      break;
    }
    codes = std::move(next);
    s = lloyd_rescale(w, codes);

    double obj = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
      obj += std::abs(s * static_cast<double>(codes[j]) - w[j]);
    }
    if (trace) {
      trace->objectives.push_back(obj);
      trace->scales.push_back(s);
      trace->iterations = it;
    }
    if (prev_obj - obj < opts.tol) {
      if (trace) trace->converged = true;
      break;
    }
    prev_obj = obj;
  }
  q.scale = s;
  q.codes = std::move(codes);
  return detail::finish(w, std::move(q), Norm::l1);
}

/// (lambda * proj(w_f) + w_f) / (lambda + 1), elementwise, using the binary
/// projector in the given norm.
inline std::vector<double> relax_projection(std::span<const double> w_f, double lambda,
                                            Norm projector) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw InvalidInput("relax_projection: lambda must be finite and nonnegative");
  }
  const auto hard = project_binary(w_f, projector).quantized.dense();
  std::vector<double> out(w_f.size());
  for (std::size_t j = 0; j < w_f.size(); ++j) {
    out[j] = (lambda * hard[j] + w_f[j]) / (lambda + 1.0);
  }
  return out;
}

}  // namespace qnt
