#pragma once

// BinaryConnect-style quantized training.
//
// Every algorithm keeps float weights w_f and evaluates the gradient at the
// quantized weights w:
//
//   w_f <- blend(w_f, w, rho) - eta_t * grad f(w)
//   w   <- P(w_f)
//
// P is the l2 binary projector (bc), the l1 binary projector (median_bc), or
// the relaxed projector (lambda * proj(w_f) + w_f) / (lambda + 1) (br), which
// switches to a hard projection once phase 2 starts. Projection is per
// quantized group (one scale per weight matrix); other groups pass through.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "qnt/data.hpp"
#include "qnt/error.hpp"
#include "qnt/model.hpp"
#include "qnt/quantize.hpp"
#include "qnt/rng.hpp"
#include "qnt/tensor_file.hpp"

namespace qnt {

enum class Algorithm { none, bc, median_bc, br };
enum class StartMode { cold, warm };

inline const char* to_string(Algorithm a) {
  switch (a) {
    case Algorithm::none: return "none";
    case Algorithm::bc: return "bc";
    case Algorithm::median_bc: return "median_bc";
    case Algorithm::br: return "br";
  }
  return "?";
}

inline const char* to_string(StartMode s) { return s == StartMode::cold ? "cold" : "warm"; }

/// Piecewise-constant learning rate: initial * drop_factor^(number of
/// drop_at entries <= iteration).
struct LrSchedule {
  double initial = 0.05;
  double drop_factor = 0.1;
  std::vector<std::int64_t> drop_at;

  void validate() const {
    if (!(initial > 0.0) || !std::isfinite(initial)) throw InvalidInput("train.lr must be > 0");
    if (!(drop_factor > 0.0 && drop_factor < 1.0)) {
      throw InvalidInput("train.lr_drop_factor must lie in (0, 1)");
    }
    for (std::size_t i = 0; i < drop_at.size(); ++i) {
      if (drop_at[i] < 0 || (i > 0 && drop_at[i] <= drop_at[i - 1])) {
        throw InvalidInput("train.lr_drop_at must be strictly increasing and nonnegative");
      }
    }
  }

  double rate(std::int64_t iteration) const {
    double eta = initial;
    for (auto t : drop_at) {
      if (iteration >= t) eta *= drop_factor;
    }
    return eta;
  }
};

struct TrainConfig {
  Algorithm algorithm = Algorithm::median_bc;
  double blend_rho = 0.0;
  LrSchedule lr_schedule;
  bool lr_drop_auto = true;  // drop once at 3/4 of the run when drop_at is not given
  double br_gamma = 1.02;
  double br_lambda0 = 1.0;
  std::int64_t br_phase2_start = -1;  // iteration; -1 -> 3/4 of the run
  std::int64_t br_lambda_every = 0;   // iterations; 0 -> every half epoch
  Norm br_hard_norm = Norm::l2;
  int epochs = 30;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  StartMode start = StartMode::cold;
  std::string warm_source;
  double momentum = 0.0;
  double weight_decay = 0.0;

  void validate() const {
    if (!(blend_rho >= 0.0 && blend_rho < 1.0)) throw InvalidInput("train.blend_rho must lie in [0, 1)");
    lr_schedule.validate();
    if (algorithm == Algorithm::br) {
      if (!(br_gamma > 1.0)) throw InvalidInput("train.br_gamma must be > 1");
      if (!(br_lambda0 > 0.0)) throw InvalidInput("train.br_lambda0 must be > 0");
      if (br_phase2_start < -1) throw InvalidInput("train.br_phase2_start must be >= 0");
      if (br_lambda_every < 0) throw InvalidInput("train.br_lambda_every must be >= 0");
    }
    if (epochs < 0) throw InvalidInput("train.epochs must be >= 0");
    if (batch_size < 1) throw InvalidInput("train.batch_size must be >= 1");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidInput("train.momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw InvalidInput("train.weight_decay must be >= 0");
  }
};

/// The per-step update rule with every schedule resolved to iteration counts.
struct StepConfig {
  Algorithm algorithm = Algorithm::median_bc;
  double blend_rho = 0.0;
  LrSchedule lr;
  double br_gamma = 1.02;
  std::int64_t br_lambda_every = 0;    // 0 -> lambda never grows
  std::int64_t br_phase2_start = INT64_MAX;
  Norm br_hard_norm = Norm::l2;
  double momentum = 0.0;
  double weight_decay = 0.0;
};

inline std::int64_t iterations_per_epoch(std::size_t train_size, std::size_t batch_size) {
  return static_cast<std::int64_t>((train_size + batch_size - 1) / batch_size);
}

inline StepConfig resolve_step_config(const TrainConfig& cfg, std::int64_t iters_per_epoch) {
  const std::int64_t total = iters_per_epoch * cfg.epochs;
  StepConfig s;
  s.algorithm = cfg.algorithm;
  s.blend_rho = cfg.blend_rho;
  s.lr = cfg.lr_schedule;
  if (cfg.lr_drop_auto && s.lr.drop_at.empty() && total > 0) s.lr.drop_at = {total * 3 / 4};
  s.br_gamma = cfg.br_gamma;
  s.br_lambda_every = cfg.br_lambda_every > 0 ? cfg.br_lambda_every
                                              : std::max<std::int64_t>(1, iters_per_epoch / 2);
  s.br_phase2_start = cfg.br_phase2_start >= 0 ? cfg.br_phase2_start : total * 3 / 4;
  s.br_hard_norm = cfg.br_hard_norm;
  s.momentum = cfg.momentum;
  s.weight_decay = cfg.weight_decay;
  return s;
}

struct MetricsEntry {
  std::int64_t iteration = 0;
  double train_loss = 0.0;
  double test_accuracy = 0.0;
};

struct TrainState {
  ParamSet w_f;  // float (auxiliary) weights
  ParamSet w;    // weights the loss is evaluated at
  ParamSet velocity;
  std::int64_t iteration = 0;
  double lambda = 0.0;
  std::vector<MetricsEntry> metrics_log;
};

/// w_f + rho * (w - w_f), elementwise.
inline ParamSet blend(const ParamSet& w_f, const ParamSet& w, double rho) {
  if (!w_f.same_layout(w)) throw InvalidInput("blend: parameter layouts differ");
  if (!(rho >= 0.0 && rho < 1.0)) throw InvalidInput("blend: rho must lie in [0, 1)");
  ParamSet out = w_f;
  if (rho == 0.0) return out;
  auto o = out.flat();
  const auto a = w_f.flat();
  const auto b = w.flat();
  // Written as a + rho * (b - a) so that w_f = w is an exact fixed point.
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] + rho * (b[i] - a[i]);
  return out;
}

inline bool in_phase2(const StepConfig& cfg, std::int64_t iteration) {
  return cfg.algorithm == Algorithm::br && iteration >= cfg.br_phase2_start;
}

/// w = P(w_f) group by group, for the state's current iteration and lambda.
inline ParamSet quantize_params(const ParamSet& w_f, const StepConfig& cfg,
                                std::int64_t iteration, double lambda) {
  ParamSet w = w_f;
  if (cfg.algorithm == Algorithm::none) return w;
  for (std::size_t g = 0; g < w.num_groups(); ++g) {
    if (!w.group_info(g).quantized) continue;
    const auto src = w_f.group(g);
    std::vector<double> out;
    switch (cfg.algorithm) {
      case Algorithm::bc: out = project_binary_l2(src).quantized.dense(); break;
      case Algorithm::median_bc: out = project_binary_l1(src).quantized.dense(); break;
      case Algorithm::br:
        out = in_phase2(cfg, iteration) ? project_binary(src, cfg.br_hard_norm).quantized.dense()
                                        : relax_projection(src, lambda, Norm::l2);
        break;
      case Algorithm::none: break;
    }
    std::copy(out.begin(), out.end(), w.group(g).begin());
  }
  return w;
}

/// Fresh state with w^0 = P(w_f^0).
inline TrainState make_state(ParamSet w_f, const StepConfig& cfg, double lambda0) {
  TrainState s;
  s.lambda = cfg.algorithm == Algorithm::br ? lambda0 : 0.0;
  s.w = quantize_params(w_f, cfg, 0, s.lambda);
  s.velocity = w_f.zeros_like();
  s.w_f = std::move(w_f);
  return s;
}

inline bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

/// One update. The gradient is taken at state.w. Returns the loss at state.w.
/// Throws NumericAbort, leaving the state untouched, if the loss or gradient
/// is not finite.
template <Objective M>
double train_step(TrainState& state, const typename M::batch_type& batch, const StepConfig& cfg,
                  const M& objective) {
  auto [loss, grad] = objective.loss_and_gradient(state.w, batch);
  if (!std::isfinite(loss) || !all_finite(grad.flat())) {
    throw NumericAbort("non-finite loss or gradient at iteration " +
                       std::to_string(state.iteration));
  }
  const double eta = cfg.lr.rate(state.iteration);

  ParamSet next = blend(state.w_f, state.w, cfg.blend_rho);
  auto g = grad.flat();
  if (cfg.weight_decay > 0.0) {
    const auto wf = state.w_f.flat();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += cfg.weight_decay * wf[i];
  }
  auto nx = next.flat();
  if (cfg.momentum > 0.0) {
    auto v = state.velocity.flat();
    for (std::size_t i = 0; i < g.size(); ++i) {
      v[i] = cfg.momentum * v[i] + g[i];
      nx[i] -= eta * v[i];
    }
  } else {
    for (std::size_t i = 0; i < g.size(); ++i) nx[i] -= eta * g[i];
  }

  state.w_f = std::move(next);
  state.iteration += 1;
  if (cfg.algorithm == Algorithm::br && cfg.br_lambda_every > 0 &&
      state.iteration % cfg.br_lambda_every == 0) {
    state.lambda *= cfg.br_gamma;
  }
  state.w = quantize_params(state.w_f, cfg, state.iteration, state.lambda);
  return loss;
}

/// True when every quantized group of `p` is exactly scale * {+-1}: all
/// magnitudes agree to within `tol`.
inline bool has_binary_form(const ParamSet& p, double tol = 1e-12) {
  for (std::size_t g = 0; g < p.num_groups(); ++g) {
    if (!p.group_info(g).quantized) continue;
    const auto v = p.group(g);
    const double ref = std::abs(v[0]);
    for (double x : v) {
      if (std::abs(std::abs(x) - ref) > tol) return false;
    }
  }
  return true;
}

// --- checkpoints ------------------------------------------------------------

struct Checkpoint {
  MlpSpec spec;
  ParamSet params;
  std::uint64_t seed = 0;
};

/// One entry per parameter group plus `meta.layer_dims` and `meta.seed`.
inline TensorList checkpoint_tensors(const Checkpoint& ck) {
  TensorList out;
  std::vector<double> dims(ck.spec.layer_dims.begin(), ck.spec.layer_dims.end());
  out.emplace_back("meta.layer_dims", Tensor::vector(std::move(dims)));
  out.emplace_back("meta.seed", Tensor::scalar(static_cast<double>(ck.seed)));
  for (std::size_t g = 0; g < ck.params.num_groups(); ++g) {
    const auto& info = ck.params.group_info(g);
    const auto v = ck.params.group(g);
    out.emplace_back(info.name, Tensor{{info.rows, info.cols}, {v.begin(), v.end()}});
  }
  return out;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  write_tensors(path, checkpoint_tensors(ck));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  if (!std::filesystem::exists(path)) throw IoError("checkpoint '" + path + "' not found");
  const auto tensors = read_tensors(path);
  const auto* dims = find_tensor(tensors, "meta.layer_dims");
  if (!dims) throw IoError("checkpoint '" + path + "' has no meta.layer_dims entry");
  Checkpoint ck;
  for (double d : dims->values) ck.spec.layer_dims.push_back(static_cast<std::size_t>(d));
  if (const auto* seed = find_tensor(tensors, "meta.seed"); seed && !seed->values.empty()) {
    ck.seed = static_cast<std::uint64_t>(seed->values[0]);
  }
  ck.params = Mlp(ck.spec).make_params();
  for (std::size_t g = 0; g < ck.params.num_groups(); ++g) {
    const auto& info = ck.params.group_info(g);
    const auto* t = find_tensor(tensors, info.name);
    if (!t || t->values.size() != info.size()) {
      throw IoError("checkpoint '" + path + "': missing or misshapen entry '" + info.name + "'");
    }
    std::copy(t->values.begin(), t->values.end(), ck.params.group(g).begin());
  }
  return ck;
}

// --- experiments ------------------------------------------------------------

struct ExperimentResult {
  TrainState state;
  double final_accuracy = 0.0;
  double final_train_loss = 0.0;
};

namespace detail {

inline double mean_loss(const Mlp& mlp, const ParamSet& p, const Dataset& data) {
  return mlp.forward_loss(p, data).loss;
}

}  // namespace detail

/// Trains from `init` for config.epochs epochs of shuffled minibatches,
/// logging (iteration, mean batch loss, test accuracy) after every epoch and
/// once before the first. BR runs end with w hard-projected.
inline ExperimentResult train_from(ParamSet init, const TrainConfig& config, const DataSplit& data,
                                   const Mlp& mlp) {
  config.validate();
  if (data.train.empty() || data.test.empty()) throw InvalidInput("train/test sets must be nonempty");
  const auto per_epoch = iterations_per_epoch(data.train.size(), config.batch_size);
  const auto step_cfg = resolve_step_config(config, per_epoch);

  ExperimentResult res;
  TrainState& st = res.state;
  st = make_state(std::move(init), step_cfg, config.br_lambda0);
  st.metrics_log.push_back(
      {0, detail::mean_loss(mlp, st.w, data.train), mlp.accuracy(st.w, data.test)});

  Rng rng(derive_seed(config.seed, 2));
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    std::int64_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const auto len = std::min(config.batch_size, order.size() - start);
      const auto batch = data.train.subset(std::span<const std::size_t>(order).subspan(start, len));
      loss_sum += train_step(st, batch, step_cfg, mlp);
      ++batches;
    }
    st.metrics_log.push_back(
        {st.iteration, loss_sum / static_cast<double>(batches), mlp.accuracy(st.w, data.test)});
  }

  if (config.algorithm == Algorithm::br && !in_phase2(step_cfg, st.iteration)) {
    auto hard = step_cfg;
    hard.br_phase2_start = 0;
    st.w = quantize_params(st.w_f, hard, st.iteration, st.lambda);
    st.metrics_log.back().test_accuracy = mlp.accuracy(st.w, data.test);
  }
  res.final_accuracy = st.metrics_log.back().test_accuracy;
  res.final_train_loss = detail::mean_loss(mlp, st.w, data.train);
  return res;
}

/// Quantized training. Cold start draws w_f from the seeded initializer;
/// warm start loads `warm` (or config.warm_source when `warm` is empty).
inline ExperimentResult run_experiment(const TrainConfig& config, const DataSplit& data,
                                       const MlpSpec& spec,
                                       const std::optional<ParamSet>& warm = std::nullopt) {
  config.validate();
  const Mlp mlp(spec);
  ParamSet init;
  if (config.start == StartMode::warm) {
    if (warm) {
      init = *warm;
    } else {
      if (config.warm_source.empty()) throw InvalidInput("warm start requires train.warm_source");
      auto ck = load_checkpoint(config.warm_source);
      if (!(ck.spec == spec)) throw InvalidInput("warm-start checkpoint does not match model.layer_dims");
      init = std::move(ck.params);
    }
    if (!init.same_layout(mlp.make_params())) throw InvalidInput("warm-start parameters do not match the model");
  } else {
    init = mlp.init_params(config.seed);
  }
  return train_from(std::move(init), config, data, mlp);
}

/// Plain SGD on the float weights (no projection), cold start.
inline ExperimentResult train_full_precision(TrainConfig config, const DataSplit& data,
                                             const MlpSpec& spec) {
  config.algorithm = Algorithm::none;
  config.start = StartMode::cold;
  config.blend_rho = 0.0;
  const Mlp mlp(spec);
  return train_from(mlp.init_params(config.seed), config, data, mlp);
}

}  // namespace qnt
