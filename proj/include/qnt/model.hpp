#pragma once

// Parameter containers, a ReLU MLP with softmax cross-entropy, and a diagonal
// quadratic objective. Both objectives expose
//   loss_and_gradient(const ParamSet&, const batch_type&) -> LossAndGradient
// which is what the training loop consumes.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "qnt/data.hpp"
#include "qnt/error.hpp"
#include "qnt/rng.hpp"

namespace qnt {

/// A named slice of a ParamSet. Quantized groups are the weight matrices the
/// projectors act on; the others (biases) stay full precision.
struct ParamGroup {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool quantized = false;

  std::size_t size() const { return rows * cols; }
  friend bool operator==(const ParamGroup&, const ParamGroup&) = default;
};

/// Flat parameter vector partitioned into groups.
class ParamSet {
 public:
  ParamSet() = default;

  void add_group(std::string name, std::size_t rows, std::size_t cols, bool quantized) {
    groups_.push_back({std::move(name), values_.size(), rows, cols, quantized});
    values_.resize(values_.size() + rows * cols, 0.0);
  }

  std::size_t size() const { return values_.size(); }
  std::size_t num_groups() const { return groups_.size(); }
  const std::vector<ParamGroup>& groups() const { return groups_; }
  const ParamGroup& group_info(std::size_t g) const { return groups_[g]; }

  std::span<double> group(std::size_t g) {
    return std::span<double>(values_).subspan(groups_[g].offset, groups_[g].size());
  }
  std::span<const double> group(std::size_t g) const {
    return std::span<const double>(values_).subspan(groups_[g].offset, groups_[g].size());
  }

  std::span<double> flat() { return values_; }
  std::span<const double> flat() const { return values_; }

  bool same_layout(const ParamSet& other) const { return groups_ == other.groups_; }

  /// Same layout, all zeros.
  ParamSet zeros_like() const {
    ParamSet p = *this;
    std::fill(p.values_.begin(), p.values_.end(), 0.0);
    return p;
  }

  friend bool operator==(const ParamSet&, const ParamSet&) = default;

 private:
  std::vector<ParamGroup> groups_;
  std::vector<double> values_;
};

using Gradient = ParamSet;

struct LossAndGradient {
  double loss = 0.0;
  Gradient gradient;
};

template <class M>
concept Objective = requires(const M& m, const ParamSet& p, const typename M::batch_type& b) {
  { m.loss_and_gradient(p, b) } -> std::same_as<LossAndGradient>;
};

struct MlpSpec {
  std::vector<std::size_t> layer_dims;  // [d_in, h_1, ..., d_out]

  void validate() const {
    if (layer_dims.size() < 2) throw InvalidInput("model.layer_dims needs at least 2 entries");
    for (auto d : layer_dims) {
      if (d < 1) throw InvalidInput("model.layer_dims entries must be >= 1");
    }
  }
  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t num_classes() const { return layer_dims.back(); }
  std::size_t num_layers() const { return layer_dims.size() - 1; }

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

struct ForwardResult {
  double loss = 0.0;
  std::vector<double> probabilities;  // batch x classes, row-major
};

/// Fully connected ReLU network; layer l has weight group 2l (out x in,
/// row-major) and bias group 2l+1. No activation after the last layer.
class Mlp {
 public:
  using batch_type = Dataset;

  explicit Mlp(MlpSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

  const MlpSpec& spec() const { return spec_; }

  ParamSet make_params() const {
    ParamSet p;
    for (std::size_t l = 0; l < spec_.num_layers(); ++l) {
      const auto in = spec_.layer_dims[l];
      const auto out = spec_.layer_dims[l + 1];
      p.add_group("layer" + std::to_string(l) + ".weight", out, in, true);
      p.add_group("layer" + std::to_string(l) + ".bias", out, 1, false);
    }
    return p;
  }

  /// Uniform(-a, a) weights with a = sqrt(6 / (fan_in + fan_out)); zero biases.
  ParamSet init_params(std::uint64_t seed) const {
    ParamSet p = make_params();
    Rng rng(derive_seed(seed, 3));
    for (std::size_t l = 0; l < spec_.num_layers(); ++l) {
      const double a = std::sqrt(
          6.0 / static_cast<double>(spec_.layer_dims[l] + spec_.layer_dims[l + 1]));
      for (double& x : p.group(2 * l)) x = rng.uniform(-a, a);
    }
    return p;
  }

  ForwardResult forward_loss(const ParamSet& params, const Dataset& batch) const {
    check(params, batch);
    const std::size_t k = spec_.num_classes();
    ForwardResult out;
    out.probabilities.resize(batch.size() * k);
    Workspace ws(spec_);
    double total = 0.0;
    for (std::size_t n = 0; n < batch.size(); ++n) {
      forward_sample(params, batch.row(n), ws);
      const auto logits = std::span<const double>(ws.act.back());
      total += softmax_xent(logits, batch.labels[n],
                            std::span<double>(out.probabilities).subspan(n * k, k));
    }
    out.loss = total / static_cast<double>(batch.size());
    return out;
  }

  /// Mean cross-entropy and its exact gradient.
  LossAndGradient loss_and_gradient(const ParamSet& params, const Dataset& batch) const {
    check(params, batch);
    const std::size_t k = spec_.num_classes();
    const std::size_t layers = spec_.num_layers();
    LossAndGradient out{0.0, params.zeros_like()};
    Workspace ws(spec_);
    std::vector<double> prob(k);
    const double inv_n = 1.0 / static_cast<double>(batch.size());

    for (std::size_t n = 0; n < batch.size(); ++n) {
      forward_sample(params, batch.row(n), ws);
      out.loss += softmax_xent(ws.act.back(), batch.labels[n], prob);

      // dL/dlogits = (p - onehot) / N
      auto& delta = ws.delta[layers];
      for (std::size_t c = 0; c < k; ++c) delta[c] = prob[c] * inv_n;
      delta[static_cast<std::size_t>(batch.labels[n])] -= inv_n;

      for (std::size_t l = layers; l-- > 0;) {
        const auto in_dim = spec_.layer_dims[l];
        const auto out_dim = spec_.layer_dims[l + 1];
        const auto w = params.group(2 * l);
        auto gw = out.gradient.group(2 * l);
        auto gb = out.gradient.group(2 * l + 1);
        const auto& a_in = ws.act[l];
        const auto& d_out = ws.delta[l + 1];
        auto& d_in = ws.delta[l];
        if (l > 0) std::fill(d_in.begin(), d_in.end(), 0.0);
        for (std::size_t o = 0; o < out_dim; ++o) {
          const double g = d_out[o];
          gb[o] += g;
          if (g == 0.0) continue;
          double* gw_row = gw.data() + o * in_dim;
          const double* w_row = w.data() + o * in_dim;
          for (std::size_t i = 0; i < in_dim; ++i) gw_row[i] += g * a_in[i];
          if (l > 0) {
            for (std::size_t i = 0; i < in_dim; ++i) d_in[i] += g * w_row[i];
          }
        }
        if (l > 0) {
          // ReLU derivative, using the stored post-activation.
          for (std::size_t i = 0; i < in_dim; ++i) {
            if (a_in[i] <= 0.0) d_in[i] = 0.0;
          }
        }
      }
    }
    out.loss *= inv_n;
    return out;
  }

  Gradient backward(const ParamSet& params, const Dataset& batch) const {
    return loss_and_gradient(params, batch).gradient;
  }

  /// Fraction of samples whose argmax logit (lowest index on ties) matches.
  double accuracy(const ParamSet& params, const Dataset& data) const {
    if (data.empty()) throw InvalidInput("accuracy: empty dataset");
    check(params, data);
    Workspace ws(spec_);
    std::size_t correct = 0;
    for (std::size_t n = 0; n < data.size(); ++n) {
      forward_sample(params, data.row(n), ws);
      const auto& logits = ws.act.back();
      const auto best = static_cast<std::size_t>(
          std::max_element(logits.begin(), logits.end()) - logits.begin());
      if (best == static_cast<std::size_t>(data.labels[n])) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
  }

 private:
  struct Workspace {
    explicit Workspace(const MlpSpec& spec) {
      for (auto d : spec.layer_dims) {
        act.emplace_back(d, 0.0);
        delta.emplace_back(d, 0.0);
      }
    }
    std::vector<std::vector<double>> act;    // act[0] = input, act.back() = logits
    std::vector<std::vector<double>> delta;  // gradient w.r.t. pre-activations
  };

  void check(const ParamSet& params, const Dataset& batch) const {
    if (batch.empty()) throw InvalidInput("mlp: empty batch");
    if (batch.dim != spec_.input_dim()) {
      throw InvalidInput("mlp: batch has dimension " + std::to_string(batch.dim) +
                         ", model expects " + std::to_string(spec_.input_dim()));
    }
    if (params.num_groups() != 2 * spec_.num_layers()) {
      throw InvalidInput("mlp: parameter layout does not match the model spec");
    }
    for (std::size_t l = 0; l < spec_.num_layers(); ++l) {
      const auto& w = params.group_info(2 * l);
      if (w.rows != spec_.layer_dims[l + 1] || w.cols != spec_.layer_dims[l]) {
        throw InvalidInput("mlp: parameter layout does not match the model spec");
      }
    }
    for (auto y : batch.labels) {
      if (y < 0 || static_cast<std::size_t>(y) >= spec_.num_classes()) {
        throw InvalidInput("mlp: label " + std::to_string(y) + " out of range");
      }
    }
    for (double x : batch.features) {
      if (std::isnan(x)) throw InvalidInput("mlp: NaN in inputs");
    }
  }

  void forward_sample(const ParamSet& params, std::span<const double> x, Workspace& ws) const {
    std::copy(x.begin(), x.end(), ws.act[0].begin());
    const std::size_t layers = spec_.num_layers();
    for (std::size_t l = 0; l < layers; ++l) {
      const auto in_dim = spec_.layer_dims[l];
      const auto out_dim = spec_.layer_dims[l + 1];
      const auto w = params.group(2 * l);
      const auto b = params.group(2 * l + 1);
      const double* a_in = ws.act[l].data();
      auto& a_out = ws.act[l + 1];
      for (std::size_t o = 0; o < out_dim; ++o) {
        const double* w_row = w.data() + o * in_dim;
        double z = b[o];
        for (std::size_t i = 0; i < in_dim; ++i) z += w_row[i] * a_in[i];
        a_out[o] = (l + 1 < layers) ? std::max(z, 0.0) : z;
      }
    }
  }

  // -log softmax(logits)[label], writing the probabilities; max-shifted.
  static double softmax_xent(std::span<const double> logits, std::int32_t label,
                             std::span<double> prob) {
    const double m = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < logits.size(); ++c) {
      prob[c] = std::exp(logits[c] - m);
      sum += prob[c];
    }
    for (double& p : prob) p /= sum;
    const double lse = m + std::log(sum);
    return lse - logits[static_cast<std::size_t>(label)];
  }

  MlpSpec spec_;
};

/// f(w) = 1/2 * sum_i h_i (w_i - target_i)^2 over a single quantized group.
class DiagonalQuadratic {
 public:
  struct batch_type {};

  DiagonalQuadratic(std::vector<double> curvature, std::vector<double> target)
      : curvature_(std::move(curvature)), target_(std::move(target)) {
    if (curvature_.size() != target_.size() || curvature_.empty()) {
      throw InvalidInput("quadratic: curvature and target must be nonempty and equal length");
    }
  }

  ParamSet make_params() const {
    ParamSet p;
    p.add_group("w", 1, target_.size(), true);
    return p;
  }

  double value(const ParamSet& p) const {
    const auto w = p.flat();
    double f = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double r = w[i] - target_[i];
      f += 0.5 * curvature_[i] * r * r;
    }
    return f;
  }

  LossAndGradient loss_and_gradient(const ParamSet& p, const batch_type&) const {
    LossAndGradient out{value(p), p.zeros_like()};
    const auto w = p.flat();
    auto g = out.gradient.flat();
    for (std::size_t i = 0; i < w.size(); ++i) g[i] = curvature_[i] * (w[i] - target_[i]);
    return out;
  }

 private:
  std::vector<double> curvature_;
  std::vector<double> target_;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
};

/// Compares the analytic gradient against central differences for every
/// parameter. Relative error is |a - b| / max(|a|, |b|, floor).
template <Objective M>
GradCheckResult check_gradient(const M& model, const ParamSet& params,
                               const typename M::batch_type& batch, double step = 1e-5,
                               double floor = 1e-6,
                               const std::function<void(Gradient&)>& tamper = {}) {
  auto analytic = model.loss_and_gradient(params, batch).gradient;
  if (tamper) tamper(analytic);
  ParamSet probe = params;
  GradCheckResult res;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double orig = probe.flat()[i];
    probe.flat()[i] = orig + step;
    const double up = model.loss_and_gradient(probe, batch).loss;
    probe.flat()[i] = orig - step;
    const double down = model.loss_and_gradient(probe, batch).loss;
    probe.flat()[i] = orig;
    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic.flat()[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), floor});
    const double rel = std::abs(a - numeric) / denom;
    if (rel > res.max_rel_error) res = {rel, i};
  }
  return res;
}

}  // namespace qnt
