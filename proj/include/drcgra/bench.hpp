#pragma once

// Thread-count sweeps comparing baseline and DR mode, and prevalence-weighted
// pattern-suite summaries.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "drcgra/sim.hpp"

namespace drcgra::bench {

inline const std::vector<int> kDefaultThreads = {8, 32, 128, 512};

struct Experiment {
  std::filesystem::path dfg;
  std::optional<std::filesystem::path> grid;  // default grid when absent
  std::vector<int> threads = kDefaultThreads;
  int mem_latency = 20;
  int spill_latency = 8;
  std::optional<int> mem_max_outstanding;
  int repetitions = 1;
};

/// Throws InvalidArgument / Io when an invariant fails (threads strictly
/// increasing, files exist, repetitions >= 1).
void check(const Experiment& exp);

/// JSON: {"dfg", "grid"?, "threads"?, "params"?: {mem_latency, spill_latency,
/// mem_max_outstanding}, "repetitions"?}. Relative paths resolve against
/// `base_dir`.
Experiment parse_experiment(std::string_view json_text, const std::filesystem::path& base_dir);
Experiment load_experiment(const std::filesystem::path& path);

struct SweepPoint {
  int threads = 0;
  std::int64_t cycles_baseline = 0;
  std::int64_t cycles_dr = 0;
  double speedup = 0.0;
  double wall_seconds = 0.0;  // mean simulator wall time per repetition, both modes

  bool operator==(const SweepPoint& o) const {
    return threads == o.threads && cycles_baseline == o.cycles_baseline && cycles_dr == o.cycles_dr &&
           speedup == o.speedup;
  }
};

using SpeedupCurve = std::vector<SweepPoint>;

sim::MachineParams machine_params(const Experiment& exp, sim::Mode mode, int threads);

/// Both modes at every thread count; points run concurrently and are merged
/// in declared order. Simulation errors are rethrown with "(T=<t>, mode=<m>)".
SpeedupCurve sweep(const Experiment& exp, bool parallel = true);

/// Same, for an already loaded graph and grid.
SpeedupCurve sweep(const ir::DataflowGraph& g, const grid::GridSpec& spec, const Experiment& exp,
                   bool parallel = true);

/// "threads,cycles_baseline,cycles_dr,speedup" plus one row per point.
std::string to_csv(const SpeedupCurve& curve);

/// Six significant decimals, trailing zeros trimmed.
std::string format_number(double v);

/// Time-weighted (harmonic) combination: sum(w) / sum(w / s).
double combine_speedups(const std::vector<double>& speedups, const std::vector<double>& weights);

struct SuiteEntry {
  std::string name;  // file stem
  double weight = 1.0;
  SpeedupCurve curve;
};

struct SuiteReport {
  std::vector<int> threads;
  std::vector<SuiteEntry> entries;   // sorted by name
  std::vector<double> combined;      // per thread count
  std::vector<std::string> warnings;
};

struct SuiteOptions {
  std::vector<int> threads = kDefaultThreads;
  int mem_latency = 20;
  int spill_latency = 8;
  std::optional<int> mem_max_outstanding;
  std::optional<std::filesystem::path> grid;
};

/// Runs every *.dfg graph in `dir`, in name order.
/// Weights come from `weights.csv` ("fixture,weight"); a missing file gives
/// uniform weights and a warning.
SuiteReport suite(const std::filesystem::path& dir, const SuiteOptions& opts = {});

/// Comment header naming the weighting, then
/// "fixture,weight,threads,cycles_baseline,cycles_dr,speedup" rows and one
/// "combined" row per thread count.
std::string to_csv(const SuiteReport& report);

}  // namespace drcgra::bench
