#pragma once

// `qnt` command line: project, train, bench, gradcheck.
// Exit codes: 0 ok, 1 I/O, 2 validation, 3 numeric abort, 4 check failure.

#include <CLI11.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "qnt/bench.hpp"
#include "qnt/config.hpp"
#include "qnt/error.hpp"
#include "qnt/model.hpp"
#include "qnt/oracle.hpp"
#include "qnt/quantize.hpp"
#include "qnt/results.hpp"
#include "qnt/tensor_file.hpp"
#include "qnt/train.hpp"

namespace qnt::cli {

enum ExitCode : int { kOk = 0, kIoError = 1, kInvalid = 2, kNumericAbort = 3, kCheckFailed = 4 };

namespace detail {

inline std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, r.ptr);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline std::filesystem::path prepare_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
  return dir;
}

inline Codebook parse_codebook(const std::string& text) {
  std::vector<std::int32_t> levels;
  bool zero = false;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const auto item = qnt::detail::trim(
        std::string_view(text).substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
    const auto v = qnt::detail::parse_number<std::int32_t>(item);
    if (!v || *v < 0) throw InvalidInput("--codebook entries must be nonnegative integers, got '" + std::string(item) + "'");
    if (*v == 0) {
      zero = true;
    } else {
      levels.push_back(*v);
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return Codebook(std::move(levels), zero);
}

// --- project -----------------------------------------------------------------

struct ProjectArgs {
  std::string in;
  std::string out;
  std::string tensor;
  std::string norm = "l2";
  int bits = 1;
  std::string codebook;
  bool oracle = false;
};

inline int cmd_project(const ProjectArgs& a, std::ostream& out) {
  Norm norm;
  if (a.norm == "l1") norm = Norm::l1;
  else if (a.norm == "l2") norm = Norm::l2;
  else throw InvalidInput("--norm must be l1 or l2");
  if (a.bits < 1 || a.bits > 16) throw InvalidInput("--bits must lie in 1..16");

  const auto tensors = read_tensors(a.in);
  const Tensor* input = nullptr;
  if (!a.tensor.empty()) {
    input = find_tensor(tensors, a.tensor);
    if (!input) throw InvalidInput("no tensor named '" + a.tensor + "' in " + a.in);
  } else if (tensors.size() == 1) {
    input = &tensors.front().second;
  } else {
    throw InvalidInput(a.in + " holds " + std::to_string(tensors.size()) + " tensors; pick one with --tensor");
  }
  const std::vector<double>& w = input->values;

  std::optional<Codebook> codebook;
  if (!a.codebook.empty()) {
    if (a.bits == 1) throw InvalidInput("--codebook needs --bits >= 2");
    codebook = parse_codebook(a.codebook);
    const auto states = codebook->states().size();
    if (states > (std::size_t{1} << a.bits)) {
      throw InvalidInput("codebook has " + std::to_string(states) + " states, more than 2^bits");
    }
  } else if (a.bits >= 3) {
    std::vector<std::int32_t> levels;
    for (std::int32_t q = 1; q <= (1 << (a.bits - 1)); ++q) levels.push_back(q);
    codebook = Codebook(std::move(levels));
  }
  if (codebook && norm != Norm::l1) throw InvalidInput("codebook quantization supports --norm l1 only");

  ProjectionResult r;
  std::optional<ProjectionResult> reference;
  if (codebook) {
    r = lloyd_mbit(w, *codebook);
    if (a.oracle) reference = oracle::oracle_mbit_l1(w, *codebook);
  } else if (a.bits == 1) {
    r = project_binary(w, norm);
    if (a.oracle) reference = oracle::oracle_binary(w, norm);
  } else {
    r = norm == Norm::l1 ? project_ternary_l1(w) : project_ternary_l2(w);
    if (a.oracle) reference = norm == Norm::l1 ? oracle::oracle_ternary_l1(w) : oracle::oracle_ternary_l2(w);
  }

  std::vector<double> codes(r.quantized.codes.begin(), r.quantized.codes.end());
  write_tensors(a.out, {{"scale", Tensor::scalar(r.quantized.scale)},
                        {"codes", Tensor{input->shape, std::move(codes)}},
                        {"dense", Tensor{input->shape, r.quantized.dense()}}});

  out << "scale " << num(r.quantized.scale) << "\n";
  out << "objective " << num(r.objective) << "\n";
  if (a.bits >= 2) out << "t* " << r.support_size << "\n";
  if (reference) {
    out << "oracle_objective " << num(reference->objective) << "\n";
    out << "difference " << num(r.objective - reference->objective) << "\n";
  }
  return kOk;
}

// --- train -------------------------------------------------------------------

inline int cmd_train(const std::string& config_path, const std::string& out_dir, std::ostream& out,
                     std::ostream& err) {
  const auto cfg = parse_config(config_path);
  const auto dir = prepare_dir(out_dir);
  const auto data = generate(cfg.data);
  const auto spec = cfg.model_for(data.train);

  ExperimentResult res;
  try {
    res = cfg.train.algorithm == Algorithm::none ? train_full_precision(cfg.train, data, spec)
                                                 : run_experiment(cfg.train, data, spec);
  } catch (const NumericAbort& e) {
    const auto diag = dir / "diagnostics.txt";
    write_text(diag, std::string("numeric abort: ") + e.what() + "\nconfig:\n" + emit_config(cfg));
    err << "qnt train: " << e.what() << "\n  diagnostics: " << diag.string() << "\n";
    return kNumericAbort;
  }

  write_text(dir / "metrics.csv", emit_metrics_csv(res.state.metrics_log));
  save_checkpoint((dir / "checkpoint.qtns").string(), Checkpoint{spec, res.state.w, cfg.train.seed});
  ResultsRow row;
  row.algorithm = cfg.train.algorithm;
  row.start = cfg.train.start;
  row.blend_rho = cfg.train.blend_rho;
  row.seeds = std::to_string(cfg.train.seed);
  row.accuracy = res.final_accuracy;
  if (cfg.train.algorithm == Algorithm::none) row.reference = res.final_accuracy;
  write_text(dir / "results.csv", emit_table({row}, TableFormat::csv));
  const auto md = emit_table({row}, TableFormat::markdown);
  write_text(dir / "results.md", md);
  out << md;
  return kOk;
}

// --- bench -------------------------------------------------------------------

inline int cmd_bench(const std::string& config_path, std::size_t seeds, std::size_t jobs,
                     const std::string& out_dir, std::ostream& out, std::ostream& err) {
  const auto cfg = config_path.empty() ? ExperimentConfig{} : parse_config(config_path);
  if (seeds < 1) throw InvalidInput("--seeds must be >= 1");
  if (jobs < 1) throw InvalidInput("--jobs must be >= 1");
  const auto dir = prepare_dir(out_dir);

  std::mutex log_mutex;
  const auto result = run_bench(cfg, seeds, jobs, [&](const BenchCell& c) {
    std::lock_guard lock(log_mutex);
    err << to_string(c.algorithm) << " " << to_string(c.start) << " rho=" << c.blend_rho << " seed=" << c.seed;
    if (c.failed) {
      err << " FAILED: " << c.error << "\n";
    } else {
      err << " acc=" << num(c.accuracy) << "\n";
    }
  });

  write_text(dir / "results.csv", emit_table(result.rows, TableFormat::csv));
  const auto md = emit_table(result.rows, TableFormat::markdown) + "\n" + emit_grid(result.rows);
  write_text(dir / "results.md", md);
  out << md;
  for (const auto& r : result.rows) {
    if (r.failed) err << "warning: some cells failed; see results.csv\n";
    if (r.failed) break;
  }
  return kOk;
}

// --- gradcheck ---------------------------------------------------------------

inline int cmd_gradcheck(const std::string& dims_text, int trials, std::uint64_t seed, std::ostream& out) {
  const auto dims = qnt::detail::parse_list<std::size_t>(dims_text);
  if (!dims) throw InvalidInput("--dims must be a comma-separated list of positive integers");
  const Mlp mlp(MlpSpec{*dims});
  if (trials < 0) throw InvalidInput("--trials must be >= 0");
  if (trials == 0) {
    out << "no trials requested; nothing checked\n";
    return kOk;
  }

  constexpr double kTolerance = 1e-5;
  constexpr std::size_t kBatch = 4;
  std::function<void(Gradient&)> tamper;
#ifdef QNT_CORRUPT_BACKWARD
  tamper = [](Gradient& g) { g.flat()[0] += 1e-2; };
#endif
  bool ok = true;
  for (int t = 0; t < trials; ++t) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    auto p = mlp.make_params();
    for (double& x : p.flat()) x = rng.uniform(-1.0, 1.0);
    Dataset batch;
    batch.dim = mlp.spec().input_dim();
    batch.num_classes = mlp.spec().num_classes();
    for (std::size_t i = 0; i < kBatch * batch.dim; ++i) batch.features.push_back(rng.normal());
    for (std::size_t i = 0; i < kBatch; ++i) {
      batch.labels.push_back(static_cast<std::int32_t>(rng.index(batch.num_classes)));
    }
    const auto res = check_gradient(mlp, p, batch, 1e-5, 1e-6, tamper);
    const bool pass = res.max_rel_error < kTolerance;
    ok = ok && pass;
    out << "trial " << t << " max_rel_error " << res.max_rel_error << (pass ? "" : "  FAIL") << "\n";
  }
  return ok ? kOk : kCheckFailed;
}

}  // namespace detail

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Weight quantization toolkit: projections, quantized training, benchmarks."};
  app.name("qnt");
  app.require_subcommand(1);

  detail::ProjectArgs pa;
  auto* project = app.add_subcommand("project", "Quantize a tensor from a QTNS file.");
  project->add_option("--in", pa.in, "Input tensor file")->required();
  project->add_option("--out", pa.out, "Output tensor file")->required();
  project->add_option("--tensor", pa.tensor, "Tensor name when the file holds several");
  project->add_option("--norm", pa.norm, "l1 or l2")->capture_default_str();
  project->add_option("--bits", pa.bits, "1 = binary, 2 = ternary, >= 3 = codebook")->capture_default_str();
  project->add_option("--codebook", pa.codebook, "Levels, e.g. \"1,2\"; a 0 entry admits zero");
  project->add_flag("--oracle", pa.oracle, "Also run the brute-force oracle (small inputs)");

  std::string train_config;
  std::string train_out = ".";
  auto* train = app.add_subcommand("train", "Run one experiment.");
  train->add_option("--config", train_config, "Config file")->required();
  train->add_option("--out-dir", train_out, "Output directory")->capture_default_str();

  std::string bench_config;
  std::size_t bench_seeds = 10;
  std::size_t bench_jobs = 1;
  std::string bench_out = ".";
  auto* bench = app.add_subcommand("bench", "Run the benchmark grid.");
  bench->add_option("--config", bench_config, "Config file (defaults when omitted)");
  bench->add_option("--seeds", bench_seeds, "Seeds per cell")->capture_default_str();
  bench->add_option("--jobs", bench_jobs, "Worker threads")->capture_default_str();
  bench->add_option("--out-dir", bench_out, "Output directory")->capture_default_str();

  std::string gc_dims = "3,5,2";
  int gc_trials = 20;
  std::uint64_t gc_seed = 1;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of the MLP gradient.");
  gradcheck->add_option("--dims", gc_dims, "Layer widths")->capture_default_str();
  gradcheck->add_option("--trials", gc_trials, "Number of random trials")->capture_default_str();
  gradcheck->add_option("--seed", gc_seed, "Seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "qnt: " << e.what() << "\n";
    return kInvalid;
  }

  try {
    if (*project) return detail::cmd_project(pa, out);
    if (*train) return detail::cmd_train(train_config, train_out, out, err);
    if (*bench) return detail::cmd_bench(bench_config, bench_seeds, bench_jobs, bench_out, out, err);
    if (*gradcheck) return detail::cmd_gradcheck(gc_dims, gc_trials, gc_seed, out);
  } catch (const IoError& e) {
    err << "qnt: " << e.what() << "\n";
    return kIoError;
  } catch (const InvalidInput& e) {
    err << "qnt: " << e.what() << "\n";
    return kInvalid;
  } catch (const NumericAbort& e) {
    err << "qnt: numeric abort: " << e.what() << "\n";
    return kNumericAbort;
  }
  return kInvalid;
}

}  // namespace qnt::cli
