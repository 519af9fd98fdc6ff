#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <unistd.h>

#include "qnt/train.hpp"

namespace {

using qnt::Algorithm;
using qnt::DiagonalQuadratic;
using qnt::ParamSet;
using qnt::StepConfig;

ParamSet vec_params(std::vector<double> v) {
  ParamSet p;
  p.add_group("w", 1, v.size(), true);
  std::copy(v.begin(), v.end(), p.flat().begin());
  return p;
}

std::vector<double> values(const ParamSet& p) { return {p.flat().begin(), p.flat().end()}; }

StepConfig step_config(Algorithm a, double eta) {
  StepConfig c;
  c.algorithm = a;
  c.lr.initial = eta;
  return c;
}

// Wraps an objective and records every point the gradient is requested at.
template <class M>
struct Recording {
  using batch_type = typename M::batch_type;
  const M& inner;
  mutable std::vector<ParamSet> points;

  qnt::LossAndGradient loss_and_gradient(const ParamSet& p, const batch_type& b) const {
    points.push_back(p);
    return inner.loss_and_gradient(p, b);
  }
};

qnt::DataSplit small_blobs(std::size_t classes = 3) {
  qnt::DatasetSpec spec;
  spec.num_classes = classes;
  spec.dim = 4;
  spec.samples_per_class = 40;
  return qnt::generate(spec);
}

qnt::TrainConfig short_config(Algorithm a, int epochs = 3) {
  qnt::TrainConfig c;
  c.algorithm = a;
  c.epochs = epochs;
  c.batch_size = 16;
  return c;
}

const qnt::MlpSpec kSmallNet{{4, 8, 3}};

TEST(Blend, Examples) {
  const auto wf = vec_params({1.0, -3.0});
  const auto w = vec_params({2.0, 2.0});
  EXPECT_EQ(qnt::blend(wf, w, 0.0), wf);
  EXPECT_EQ(qnt::blend(wf, wf, 0.3), wf);
  EXPECT_DOUBLE_EQ(qnt::blend(vec_params({1.0}), vec_params({2.0}), 1e-5).flat()[0], 1.00001);
  EXPECT_EQ(values(qnt::blend(wf, w, 0.25)), (std::vector<double>{1.25, -1.75}));
  EXPECT_THROW(qnt::blend(wf, vec_params({1.0}), 0.1), qnt::InvalidInput);
  EXPECT_THROW(qnt::blend(wf, w, 1.0), qnt::InvalidInput);
}

TEST(TrainStep, MedianToyStep) {
  // f(w) = 1/2 ||w - (3, 1)||^2, w_f = (1, 2). The lower median of {1, 2}
  // is 1, so w = (1, 1) and g = (-2, 0).
  const DiagonalQuadratic f({1.0, 1.0}, {3.0, 1.0});
  const auto cfg = step_config(Algorithm::median_bc, 0.1);
  auto st = qnt::make_state(vec_params({1.0, 2.0}), cfg, 0.0);
  EXPECT_EQ(values(st.w), (std::vector<double>{1.0, 1.0}));

  const double loss = qnt::train_step(st, {}, cfg, f);
  EXPECT_DOUBLE_EQ(loss, 2.0);
  EXPECT_NEAR(st.w_f.flat()[0], 1.2, 1e-15);
  EXPECT_EQ(st.w_f.flat()[1], 2.0);
  EXPECT_EQ(st.w.flat()[0], st.w_f.flat()[0]);
  EXPECT_EQ(st.w.flat()[1], st.w_f.flat()[0]);
  EXPECT_EQ(st.iteration, 1);
}

TEST(TrainStep, ZeroStepLeavesStateUnchanged) {
  const DiagonalQuadratic f({1.0, 2.0, 3.0}, {0.5, -1.0, 2.0});
  for (auto a : {Algorithm::bc, Algorithm::median_bc, Algorithm::br}) {
    auto cfg = step_config(a, 0.0);
    cfg.br_lambda_every = 0;
    auto st = qnt::make_state(vec_params({0.3, -0.7, 1.1}), cfg, 1.0);
    const auto before = st;
    qnt::train_step(st, {}, cfg, f);
    EXPECT_EQ(st.w_f, before.w_f);
    EXPECT_EQ(st.w, before.w);
    EXPECT_EQ(st.iteration, 1);
  }
}

TEST(TrainStep, BcAndMedianCoincideWhenMedianEqualsMean) {
  // Magnitudes {1, 2, 3}: median = mean = 2. g = w / 4 at w = (2, -2, 2).
  const DiagonalQuadratic f({0.25, 0.25, 0.25}, {0.0, 0.0, 0.0});
  auto bc_cfg = step_config(Algorithm::bc, 0.5);
  auto med_cfg = step_config(Algorithm::median_bc, 0.5);
  auto a = qnt::make_state(vec_params({1.0, -2.0, 3.0}), bc_cfg, 0.0);
  auto b = qnt::make_state(vec_params({1.0, -2.0, 3.0}), med_cfg, 0.0);
  EXPECT_EQ(a.w, b.w);
  qnt::train_step(a, {}, bc_cfg, f);
  qnt::train_step(b, {}, med_cfg, f);
  EXPECT_EQ(values(a.w_f), (std::vector<double>{0.75, -1.75, 2.75}));
  EXPECT_EQ(a.w_f, b.w_f);
  EXPECT_EQ(a.w, b.w);
  EXPECT_EQ(values(a.w), (std::vector<double>{1.75, -1.75, 1.75}));
}

TEST(TrainStep, GradientIsTakenAtQuantizedWeights) {
  const DiagonalQuadratic f({1.0, 1.0, 1.0, 1.0}, {1.0, 2.0, -1.0, 0.5});
  for (auto a : {Algorithm::bc, Algorithm::median_bc, Algorithm::br}) {
    Recording<DiagonalQuadratic> rec{f, {}};
    auto cfg = step_config(a, 0.05);
    cfg.blend_rho = 0.1;
    cfg.br_lambda_every = 1;
    auto st = qnt::make_state(vec_params({0.2, -0.9, 1.4, 0.05}), cfg, 1.0);
    for (int k = 0; k < 5; ++k) {
      const auto w_before = st.w;
      const auto wf_before = st.w_f;
      qnt::train_step(st, {}, cfg, rec);
      ASSERT_EQ(rec.points.size(), static_cast<std::size_t>(k + 1));
      EXPECT_EQ(rec.points.back(), w_before);
      EXPECT_NE(rec.points.back(), wf_before);
    }
  }
}

TEST(TrainStep, BlendedUpdate) {
  const DiagonalQuadratic f({1.0, 1.0}, {0.0, 0.0});
  auto cfg = step_config(Algorithm::bc, 0.1);
  cfg.blend_rho = 0.5;
  auto st = qnt::make_state(vec_params({1.0, -3.0}), cfg, 0.0);  // w = (2, -2)
  qnt::train_step(st, {}, cfg, f);
  // blend = (1.5, -2.5); g = (2, -2)
  EXPECT_DOUBLE_EQ(st.w_f.flat()[0], 1.3);
  EXPECT_DOUBLE_EQ(st.w_f.flat()[1], -2.3);
}

TEST(TrainStep, BinaryFormAfterEveryStep) {
  const auto data = small_blobs();
  const qnt::Mlp mlp(kSmallNet);
  for (auto a : {Algorithm::bc, Algorithm::median_bc}) {
    auto cfg = step_config(a, 0.05);
    auto st = qnt::make_state(mlp.init_params(3), cfg, 0.0);
    EXPECT_TRUE(qnt::has_binary_form(st.w));
    for (int k = 0; k < 10; ++k) {
      qnt::train_step(st, data.train, cfg, mlp);
      EXPECT_TRUE(qnt::has_binary_form(st.w));
      // Biases are never projected.
      EXPECT_EQ(st.w.group(1)[0], st.w_f.group(1)[0]);
    }
  }
}

TEST(TrainStep, RelaxedWeightsLieBetweenFloatAndProjection) {
  const qnt::Mlp mlp(kSmallNet);
  const auto data = small_blobs();
  auto cfg = step_config(Algorithm::br, 0.05);
  cfg.br_lambda_every = 2;
  auto st = qnt::make_state(mlp.init_params(9), cfg, 0.5);
  for (int k = 0; k < 20; ++k) {
    qnt::train_step(st, data.train, cfg, mlp);
    for (std::size_t g = 0; g < st.w.num_groups(); g += 2) {
      const auto wf = st.w_f.group(g);
      const auto hard = qnt::project_binary_l2(wf).quantized.dense();
      const auto w = st.w.group(g);
      for (std::size_t i = 0; i < w.size(); ++i) {
        EXPECT_GE(w[i], std::min(wf[i], hard[i]) - 1e-15);
        EXPECT_LE(w[i], std::max(wf[i], hard[i]) + 1e-15);
      }
    }
  }
  EXPECT_FALSE(qnt::has_binary_form(st.w));

  // Phase 2 is a hard projection.
  cfg.br_phase2_start = st.iteration;
  qnt::train_step(st, data.train, cfg, mlp);
  EXPECT_TRUE(qnt::has_binary_form(st.w));
}

TEST(TrainStep, LambdaGrowsGeometrically) {
  const DiagonalQuadratic f({1.0, 1.0}, {0.0, 0.0});
  auto cfg = step_config(Algorithm::br, 0.01);
  cfg.br_gamma = 1.02;
  cfg.br_lambda_every = 3;
  auto st = qnt::make_state(vec_params({0.4, -0.2}), cfg, 2.0);
  double prev = st.lambda;
  for (int k = 1; k <= 30; ++k) {
    qnt::train_step(st, {}, cfg, f);
    if (k % 3 == 0) {
      EXPECT_DOUBLE_EQ(st.lambda, prev * 1.02);
      prev = st.lambda;
    } else {
      EXPECT_EQ(st.lambda, prev);
    }
  }
  EXPECT_NEAR(st.lambda, 2.0 * std::pow(1.02, 10), 1e-12);
}

TEST(TrainStep, NonFiniteLossAborts) {
  const DiagonalQuadratic f({1.0}, {std::nan("")});
  auto cfg = step_config(Algorithm::bc, 0.1);
  auto st = qnt::make_state(vec_params({1.0}), cfg, 0.0);
  const auto before = st;
  EXPECT_THROW(qnt::train_step(st, {}, cfg, f), qnt::NumericAbort);
  EXPECT_EQ(st.w_f, before.w_f);
  EXPECT_EQ(st.iteration, 0);
}

TEST(LrSchedule, PiecewiseConstant) {
  qnt::LrSchedule s{0.1, 0.1, {10, 20}};
  EXPECT_EQ(s.rate(0), 0.1);
  EXPECT_EQ(s.rate(9), 0.1);
  EXPECT_DOUBLE_EQ(s.rate(10), 0.01);
  EXPECT_DOUBLE_EQ(s.rate(19), 0.01);
  EXPECT_DOUBLE_EQ(s.rate(20), 0.001);
  EXPECT_DOUBLE_EQ(s.rate(1000), 0.001);
  EXPECT_THROW((qnt::LrSchedule{0.1, 0.1, {5, 5}}.validate()), qnt::InvalidInput);
  EXPECT_THROW((qnt::LrSchedule{0.1, 1.5, {}}.validate()), qnt::InvalidInput);
  EXPECT_THROW((qnt::LrSchedule{0.0, 0.1, {}}.validate()), qnt::InvalidInput);
}

TEST(StepConfigResolution, Defaults) {
  qnt::TrainConfig c;
  c.epochs = 8;
  const auto s = qnt::resolve_step_config(c, 10);
  EXPECT_EQ(s.lr.drop_at, (std::vector<std::int64_t>{60}));
  EXPECT_EQ(s.br_lambda_every, 5);
  EXPECT_EQ(s.br_phase2_start, 60);
  c.lr_drop_auto = false;
  EXPECT_TRUE(qnt::resolve_step_config(c, 10).lr.drop_at.empty());
}

TEST(TrainConfigValidation, Rejects) {
  qnt::TrainConfig c;
  c.blend_rho = 1.0;
  EXPECT_THROW(c.validate(), qnt::InvalidInput);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), qnt::InvalidInput);
  c = {};
  c.algorithm = Algorithm::br;
  c.br_gamma = 1.0;
  EXPECT_THROW(c.validate(), qnt::InvalidInput);
}

TEST(Experiment, LambdaAfterTenHalfEpochs) {
  const auto data = small_blobs();  // 96 training samples -> 6 batches of 16
  auto cfg = short_config(Algorithm::br, 5);
  cfg.br_lambda0 = 1.5;
  cfg.br_phase2_start = 1000;
  const auto res = qnt::run_experiment(cfg, data, kSmallNet);
  EXPECT_EQ(res.state.iteration, 30);
  EXPECT_NEAR(res.state.lambda, 1.5 * std::pow(1.02, 10), 1e-12);
  // Never reached phase 2, so the run ends with a hard projection.
  EXPECT_TRUE(qnt::has_binary_form(res.state.w));
}

TEST(Experiment, Deterministic) {
  const auto data = small_blobs();
  for (auto a : {Algorithm::bc, Algorithm::median_bc, Algorithm::br}) {
    const auto cfg = short_config(a);
    const auto r1 = qnt::run_experiment(cfg, data, kSmallNet);
    const auto r2 = qnt::run_experiment(cfg, data, kSmallNet);
    ASSERT_EQ(r1.state.metrics_log.size(), 4u);
    for (std::size_t i = 0; i < r1.state.metrics_log.size(); ++i) {
      EXPECT_EQ(r1.state.metrics_log[i].iteration, r2.state.metrics_log[i].iteration);
      EXPECT_EQ(r1.state.metrics_log[i].train_loss, r2.state.metrics_log[i].train_loss);
      EXPECT_EQ(r1.state.metrics_log[i].test_accuracy, r2.state.metrics_log[i].test_accuracy);
    }
    EXPECT_EQ(r1.state.w, r2.state.w);
    auto other = cfg;
    other.seed = 2;
    EXPECT_NE(qnt::run_experiment(other, data, kSmallNet).state.w_f, r1.state.w_f);
  }
}

TEST(Experiment, ZeroEpochsReportsInitialAccuracy) {
  const auto data = small_blobs();
  const auto res = qnt::run_experiment(short_config(Algorithm::median_bc, 0), data, kSmallNet);
  ASSERT_EQ(res.state.metrics_log.size(), 1u);
  EXPECT_EQ(res.state.iteration, 0);
  const qnt::Mlp mlp(kSmallNet);
  EXPECT_EQ(res.final_accuracy, mlp.accuracy(res.state.w, data.test));
}

TEST(Experiment, FinalQuantizedWeightsHaveBinaryForm) {
  const auto data = small_blobs();
  for (auto a : {Algorithm::bc, Algorithm::median_bc, Algorithm::br}) {
    EXPECT_TRUE(qnt::has_binary_form(qnt::run_experiment(short_config(a, 4), data, kSmallNet).state.w));
  }
}

TEST(Experiment, TrainingReducesTrainingLoss) {
  const auto data = small_blobs();
  const qnt::Mlp mlp(kSmallNet);
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto cfg = short_config(Algorithm::median_bc, 10);
    cfg.seed = seed;
    const auto res = qnt::run_experiment(cfg, data, kSmallNet);
    const auto init = qnt::quantize_params(mlp.init_params(seed), qnt::resolve_step_config(cfg, 6), 0, 0.0);
    EXPECT_LT(res.final_train_loss, mlp.forward_loss(init, data.train).loss) << seed;
  }
}

TEST(FullPrecision, SeparableBlobs) {
  qnt::DatasetSpec spec;
  spec.num_classes = 2;
  spec.dim = 2;
  spec.samples_per_class = 200;
  spec.class_separation = 6.0;
  const auto data = qnt::generate(spec);
  auto cfg = short_config(Algorithm::none, 200);  // 20 batches per epoch -> 4000 steps
  const auto res = qnt::train_full_precision(cfg, data, qnt::MlpSpec{{2, 8, 2}});
  EXPECT_GE(res.final_accuracy, 0.98);
  EXPECT_EQ(res.state.w, res.state.w_f);
}

TEST(FullPrecision, ZeroRateLeavesParameters) {
  const auto data = small_blobs();
  auto cfg = short_config(Algorithm::none, 2);
  const qnt::Mlp mlp(kSmallNet);
  const auto init = mlp.init_params(cfg.seed);
  auto step = qnt::resolve_step_config(cfg, 6);
  step.algorithm = Algorithm::none;
  step.lr.initial = 0.0;
  auto st = qnt::make_state(init, step, 0.0);
  qnt::train_step(st, data.train, step, mlp);
  EXPECT_EQ(st.w_f, init);
}

TEST(Checkpoint, RoundTripAndWarmStart) {
  const auto data = small_blobs();
  const auto fp = qnt::train_full_precision(short_config(Algorithm::none), data, kSmallNet);
  const auto path = (std::filesystem::temp_directory_path() /
                     ("qnt_ckpt_" + std::to_string(::getpid()) + ".qtns")).string();
  qnt::save_checkpoint(path, {kSmallNet, fp.state.w, 7});
  const auto ck = qnt::load_checkpoint(path);
  EXPECT_EQ(ck.spec, kSmallNet);
  EXPECT_EQ(ck.seed, 7u);
  EXPECT_EQ(ck.params, fp.state.w);

  auto warm = short_config(Algorithm::median_bc);
  warm.start = qnt::StartMode::warm;
  warm.warm_source = path;
  const auto from_file = qnt::run_experiment(warm, data, kSmallNet);
  const auto from_memory = qnt::run_experiment(warm, data, kSmallNet, fp.state.w);
  EXPECT_EQ(from_file.state.w, from_memory.state.w);
  EXPECT_THROW(qnt::run_experiment(warm, data, qnt::MlpSpec{{4, 5, 3}}), qnt::InvalidInput);
  std::filesystem::remove(path);

  EXPECT_THROW(qnt::load_checkpoint(path), qnt::IoError);
  EXPECT_THROW(qnt::run_experiment(warm, data, kSmallNet), qnt::IoError);
  warm.warm_source.clear();
  EXPECT_THROW(qnt::run_experiment(warm, data, kSmallNet), qnt::InvalidInput);
}

}  // namespace
