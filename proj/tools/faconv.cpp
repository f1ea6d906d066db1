// faconv command-line driver.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "faconv/bench.hpp"
#include "faconv/gradcheck.hpp"
#include "faconv/harness.hpp"
#include "faconv/io.hpp"

namespace fs = std::filesystem;
using namespace faconv;

namespace {

int exit_code(const std::string& code) {
  if (code == "E_ARGUMENT") return 2;
  if (code == "E_CONFIG") return 3;
  if (code == "E_DIMENSION") return 4;
  if (code == "E_STATE") return 5;
  if (code == "E_IO") return 6;
  if (code == "E_DIVERGED") return 7;
  if (code == "E_GRADCHECK") return 8;
  if (code == "E_COST") return 9;
  return 1;
}

int fail(const std::string& code, const std::string& message) {
  std::cerr << "error[" << code << "]: " << message << "\n";
  return exit_code(code);
}

std::string read_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

HarnessConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  return parse_harness_config(read_file(path));
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw IoError("cannot open '" + p.string() + "' for writing");
  return os;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

std::uint64_t count_params_of(const SpatioTemporalModel& model) {
  ParameterStore store;
  std::mt19937_64 rng(0);
  model.init(store, rng);
  return store.total_size();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FAConvLSTM toolkit: gradient checks, cost model, synthetic data, training and clustering"};
  app.require_subcommand(1);

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  GradCheckOptions gopt;
  gc->add_option("--seed", gopt.seed, "Random seed")->capture_default_str();
  gc->add_option("--instances", gopt.instances, "Random instances per check")->capture_default_str();
  gc->add_option("--tolerance", gopt.tolerance, "Maximum relative error")->capture_default_str();
  gc->add_option("--step", gopt.step, "Central-difference step")->capture_default_str();

  // bench
  auto* bench = app.add_subcommand("bench", "Cost-model sweep as CSV");
  std::string sweep = "default", bench_out;
  bench->add_option("--sweep", sweep, "Sweep name")->check(CLI::IsMember({"default", "small"}))->capture_default_str();
  bench->add_option("--out", bench_out, "CSV path (stdout when omitted)");

  // gen
  auto* gen = app.add_subcommand("gen", "Write a synthetic sequence as T4D plus regime labels");
  std::string spec_path, out_dir = "out";
  std::uint64_t seed = 1;
  gen->add_option("--spec", spec_path, "JSON config (defaults when omitted)");
  gen->add_option("--seed", seed, "Data seed")->capture_default_str();
  gen->add_option("--out-dir", out_dir, "Output directory")->capture_default_str();

  // train
  auto* tr = app.add_subcommand("train", "Train a model; writes a checkpoint and the loss CSV");
  std::string arch_name = "faconvlstm";
  const auto arch_check = CLI::IsMember({"faconvlstm", "fa", "convlstm2d", "convlstm"});
  tr->add_option("--spec", spec_path, "JSON config (defaults when omitted)");
  tr->add_option("--arch", arch_name, "faconvlstm | convlstm2d")->check(arch_check)->capture_default_str();
  tr->add_option("--seed", seed, "Data, init and training seed")->capture_default_str();
  tr->add_option("--out-dir", out_dir, "Output directory")->capture_default_str();

  // cluster
  auto* cl = app.add_subcommand("cluster", "Embed a sequence, run k-means and print the metric report");
  std::string checkpoint;
  std::size_t k_override = 0;
  cl->add_option("--spec", spec_path, "JSON config (defaults when omitted)");
  cl->add_option("--arch", arch_name, "faconvlstm | convlstm2d")->check(arch_check)->capture_default_str();
  cl->add_option("--checkpoint", checkpoint, "Checkpoint from `train` (untrained weights when omitted)");
  cl->add_option("--seed", seed, "Data and init seed")->capture_default_str();
  cl->add_option("--k", k_override, "Number of clusters (config value when omitted)");

  // compare
  auto* cmp = app.add_subcommand("compare", "FAConvLSTM vs ConvLSTM2D end to end over several seeds");
  std::size_t seeds_override = 0;
  cmp->add_option("--spec", spec_path, "JSON config (defaults when omitted)");
  cmp->add_option("--k", k_override, "Number of clusters (config value when omitted)");
  cmp->add_option("--seeds", seeds_override, "Number of seeds (config value when omitted)");
  cmp->add_option("--out-dir", out_dir, "Output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code("E_ARGUMENT");
  }

  try {
    if (*gc) {
      const auto results = run_gradient_suite(gopt);
      bool ok = true;
      double total = 0.0;
      for (const auto& r : results) {
        std::printf("%-28s instances=%-3zu max_rel_error=%.3e  %s\n", r.name.c_str(), r.instances, r.maxRelError,
                    r.passed ? "PASS" : "FAIL");
        ok = ok && r.passed;
        total += r.seconds;
      }
      std::printf("%zu checks, %.2f s\n", results.size(), total);
      if (!ok) return fail("E_GRADCHECK", "gradient check failed");
      return 0;
    }

    if (*bench) {
      const auto rows = run_bench(sweep == "default" ? default_sweep() : small_sweep());
      if (bench_out.empty()) {
        write_bench_csv(std::cout, rows);
      } else {
        const auto parent = fs::path(bench_out).parent_path();
        if (!parent.empty()) ensure_dir(parent.string());
        auto os = open_out(bench_out);
        write_bench_csv(os, rows);
      }
      for (std::size_t i = 0; i + 1 < rows.size(); i += 2) {
        if (!counters_match(rows[i]) || !counters_match(rows[i + 1])) {
          return fail("E_COST", "measured counters differ from the closed form");
        }
        if (efficiency_asserted(rows[i].bench) && !(rows[i].closed.macs < rows[i + 1].closed.macs)) {
          return fail("E_COST", "FAConvLSTM is not cheaper than ConvLSTM2D in an asserted row");
        }
      }
      return 0;
    }

    if (*gen) {
      auto cfg = load_config(spec_path);
      cfg.data.seed = seed;
      const auto data = generate_synthetic_sequence(cfg.data);
      ensure_dir(out_dir);
      save_t4d((fs::path(out_dir) / "sequence.t4d").string(), stack_sequence(data.frames));
      auto os = open_out(fs::path(out_dir) / "labels.csv");
      os << "t,regime\n";
      for (std::size_t t = 0; t < data.labels.size(); ++t) os << t << "," << data.labels[t] << "\n";
      std::cout << "wrote " << data.frames.size() << " frames to " << out_dir << "\n";
      return 0;
    }

    if (*tr) {
      const auto cfg = load_config(spec_path);
      const auto arch = architecture_from_string(arch_name);
      SyntheticSpec dspec = cfg.data;
      dspec.seed = seed;
      const auto data = generate_synthetic_sequence(dspec);
      const SpatioTemporalModel model(arch, cfg.model);
      ParameterStore store;
      std::seed_seq init_seed{seed, std::uint64_t{0x5eed}};
      std::mt19937_64 rng(init_seed);
      model.init(store, rng);
      TrainSpec tspec = cfg.train;
      tspec.seed = seed;
      ensure_dir(out_dir);
      auto log = open_out(fs::path(out_dir) / "losses.csv");
      const auto result = train(model, store, data.frames, tspec, &log);
      save_checkpoint((fs::path(out_dir) / "model.fackpt").string(), store);
      std::printf("trained %s for %zu steps: task loss %.6g -> %.6g\n", to_string(arch).c_str(), result.log.size(),
                  result.log.front().task, result.log.back().task);
      return 0;
    }

    if (*cl) {
      auto cfg = load_config(spec_path);
      if (k_override) cfg.k = k_override;
      cfg.validate();
      const auto arch = architecture_from_string(arch_name);
      SyntheticSpec dspec = cfg.data;
      dspec.seed = seed;
      const auto data = generate_synthetic_sequence(dspec);
      const SpatioTemporalModel model(arch, cfg.model);
      ParameterStore store;
      std::seed_seq init_seed{seed, std::uint64_t{0x5eed}};
      std::mt19937_64 rng(init_seed);
      model.init(store, rng);
      if (!checkpoint.empty()) assign_parameters(store, load_checkpoint(checkpoint));
      const auto ev = evaluate(model, store, data, cfg, seed);
      const auto& m = ev.metrics;
      std::cout << "arch,seed,k,silhouette,davies_bouldin,calinski_harabasz,rmse,variance,inter_centroid_distance,"
                   "accuracy\n"
                << m.architecture << "," << m.seed << "," << m.k << "," << fmt(m.silhouette) << ","
                << fmt(m.daviesBouldin) << "," << fmt(m.calinskiHarabasz) << "," << fmt(m.rmse) << ","
                << fmt(m.variance) << "," << fmt(m.interCentroidDistance) << "," << fmt(ev.accuracy) << "\n";
      return 0;
    }

    if (*cmp) {
      auto cfg = load_config(spec_path);
      if (k_override) cfg.k = k_override;
      if (seeds_override) cfg.seeds = seeds_override;
      const auto t0 = std::chrono::steady_clock::now();
      const auto runs = run_compare(cfg, {Architecture::FAConvLSTM, Architecture::ConvLSTM2D});
      ensure_dir(out_dir);
      {
        auto os = open_out(fs::path(out_dir) / "metrics.csv");
        write_metrics_csv(os, cfg, runs);
      }
      {
        auto os = open_out(fs::path(out_dir) / "losses.csv");
        write_losses_csv(os, cfg, runs);
      }
      {
        auto os = open_out(fs::path(out_dir) / "embeddings.csv");
        write_embeddings_csv(os, cfg, runs);
      }
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      for (auto arch : {Architecture::FAConvLSTM, Architecture::ConvLSTM2D}) {
        std::printf("%-11s params=%-6llu silhouette untrained=%.4f trained=%.4f accuracy trained=%.4f\n",
                    to_string(arch).c_str(),
                    static_cast<unsigned long long>(count_params_of(SpatioTemporalModel(arch, cfg.model))),
                    mean_over(runs, arch, [](const SeedRun& r) { return r.untrained.metrics.silhouette; }),
                    mean_over(runs, arch, [](const SeedRun& r) { return r.trained.metrics.silhouette; }),
                    mean_over(runs, arch, [](const SeedRun& r) { return r.trained.accuracy; }));
      }
      std::printf("wrote metrics.csv, losses.csv, embeddings.csv to %s (%.1f s)\n", out_dir.c_str(), secs);
      return 0;
    }
  } catch (const Error& e) {
    return fail(e.code(), e.what());
  } catch (const std::exception& e) {
    return fail("E_INTERNAL", e.what());
  }
  return 0;
}
