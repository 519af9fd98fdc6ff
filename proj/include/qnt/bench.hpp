#pragma once

// Benchmark sweep: the full-precision baseline plus
// {bc, median_bc, br} x {cold, warm} x {rho = 0, rho = 1e-5} over N seeds.
// Cells run in parallel; every cell derives its randomness from its own
// seed, so results do not depend on the number of workers.

#include <atomic>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "qnt/config.hpp"
#include "qnt/results.hpp"
#include "qnt/train.hpp"

namespace qnt {

/// Calls fn(i) for i in [0, n) on up to `jobs` threads.
inline void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> workers;
  for (std::size_t j = 0; j < jobs; ++j) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
}

inline constexpr double kBenchBlend = 1e-5;

struct BenchCell {
  Algorithm algorithm = Algorithm::none;
  StartMode start = StartMode::cold;
  double blend_rho = 0.0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  double accuracy = 0.0;
  ParamSet final_w;
};

struct BenchResult {
  std::vector<BenchCell> baseline;  // one per seed
  std::vector<BenchCell> cells;     // grid order, seeds innermost
  std::vector<ResultsRow> rows;     // 13 aggregate rows, baseline first
};

namespace detail {

inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

inline ResultsRow aggregate(const std::vector<BenchCell>& cells, std::size_t first, std::size_t count) {
  const auto& c0 = cells[first];
  ResultsRow row;
  row.algorithm = c0.algorithm;
  row.start = c0.start;
  row.blend_rho = c0.blend_rho;
  row.seeds = "n=" + std::to_string(count);
  std::vector<double> acc;
  for (std::size_t i = first; i < first + count; ++i) {
    if (cells[i].failed) row.failed = true;
    acc.push_back(cells[i].accuracy);
  }
  if (!row.failed) std::tie(row.accuracy, row.accuracy_std) = mean_std(acc);
  return row;
}

inline BenchCell make_cell(Algorithm a, StartMode start, double rho, std::uint64_t seed) {
  BenchCell c;
  c.algorithm = a;
  c.start = start;
  c.blend_rho = rho;
  c.seed = seed;
  return c;
}

}  // namespace detail

/// Runs the sweep. Seeds are base.train.seed, base.train.seed + 1, ...;
/// warm cells for seed s start from the baseline trained with seed s.
inline BenchResult run_bench(const ExperimentConfig& base, std::size_t num_seeds, std::size_t jobs,
                             const std::function<void(const BenchCell&)>& on_cell = {}) {
  if (num_seeds < 1) throw InvalidInput("bench needs at least one seed");
  base.validate();
  const DataSplit data = generate(base.data);
  const MlpSpec spec = base.model_for(data.train);

  auto run_cell = [&](BenchCell& cell, const std::optional<ParamSet>& warm) {
    TrainConfig cfg = base.train;
    cfg.algorithm = cell.algorithm;
    cfg.start = cell.start;
    cfg.blend_rho = cell.blend_rho;
    cfg.seed = cell.seed;
    try {
      auto res = cell.algorithm == Algorithm::none ? train_full_precision(cfg, data, spec)
                                                   : run_experiment(cfg, data, spec, warm);
      cell.accuracy = res.final_accuracy;
      cell.final_w = std::move(res.state.w);
    } catch (const std::exception& e) {
      cell.failed = true;
      cell.error = e.what();
    }
    if (on_cell) on_cell(cell);
  };

  BenchResult out;
  for (std::size_t s = 0; s < num_seeds; ++s) {
    out.baseline.push_back(detail::make_cell(Algorithm::none, StartMode::cold, 0.0, base.train.seed + s));
  }
  parallel_for(num_seeds, jobs, [&](std::size_t i) { run_cell(out.baseline[i], std::nullopt); });

  for (auto start : {StartMode::cold, StartMode::warm}) {
    for (double rho : {0.0, kBenchBlend}) {
      for (auto alg : {Algorithm::median_bc, Algorithm::bc, Algorithm::br}) {
        for (std::size_t s = 0; s < num_seeds; ++s) {
          out.cells.push_back(detail::make_cell(alg, start, rho, base.train.seed + s));
        }
      }
    }
  }
  parallel_for(out.cells.size(), jobs, [&](std::size_t i) {
    auto& cell = out.cells[i];
    const auto& fp = out.baseline[i % num_seeds];
    if (cell.start == StartMode::warm) {
      if (fp.failed) {
        cell.failed = true;
        cell.error = "baseline for seed " + std::to_string(fp.seed) + " failed";
        if (on_cell) on_cell(cell);
        return;
      }
      run_cell(cell, fp.final_w);
    } else {
      run_cell(cell, std::nullopt);
    }
  });

  auto fp_row = detail::aggregate(out.baseline, 0, num_seeds);
  const std::optional<double> reference = fp_row.failed ? std::nullopt : std::optional(fp_row.accuracy);
  fp_row.reference = reference;
  out.rows.push_back(fp_row);
  for (std::size_t first = 0; first < out.cells.size(); first += num_seeds) {
    auto row = detail::aggregate(out.cells, first, num_seeds);
    row.reference = reference;
    out.rows.push_back(row);
  }
  return out;
}

}  // namespace qnt
