#pragma once

// Run-time flow analysis over basic-block traces: per-routine block graphs,
// closed loop routes by bounded DFS, and loop prevalence statistics.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace drcgra::trace {

using BlockId = std::string;

struct BasicBlock {
  std::int64_t instructions = 1;  // per execution
  std::int64_t executions = 0;

  bool operator==(const BasicBlock&) const = default;
};

struct RoutineGraph {
  std::string name;
  std::map<BlockId, BasicBlock> blocks;
  std::map<std::pair<BlockId, BlockId>, std::int64_t> edges;  // traversal counts

  /// Sum over blocks of executions * instructions.
  std::int64_t instructions() const;
  bool operator==(const RoutineGraph&) const = default;
};

struct TraceData {
  std::map<std::string, RoutineGraph> routines;
  std::vector<std::string> warnings;
};

/// Streaming lines "<routine>,<bb>[,<instr>]" or, after a "#aggregated"
/// header, "<routine>,<src>,<dst>,<count>" and "#bb <routine>,<bb>,<instr>[,<exec>]".
/// Throws MalformedTrace (with line number) or MixedTraceFormats.
TraceData ingest(std::istream& in);
TraceData ingest_text(const std::string& text);
TraceData load_trace(const std::filesystem::path& path);

struct LoopRoute {
  std::vector<BlockId> blocks;  // rotation starting at the smallest id
  std::int64_t iterations = 0;  // bottleneck edge count
  std::int64_t instructions_per_iteration = 0;

  bool operator==(const LoopRoute&) const = default;
};

struct LoopEnumeration {
  std::vector<LoopRoute> routes;
  bool truncated = false;
};

inline constexpr int kDefaultMaxLen = 32;
inline constexpr int kDefaultMaxRoutes = 4096;

/// Simple cycles of at most `max_len` blocks, sorted by descending
/// iterations then block sequence. Enumeration stops once `max_routes`
/// cycles are found and sets `truncated`.
LoopEnumeration enumerate_loops(const RoutineGraph& g, int max_len = kDefaultMaxLen,
                                int max_routes = kDefaultMaxRoutes);

struct RoutineStats {
  std::string name;
  std::int64_t instructions = 0;
  double run_fraction = 0.0;
  bool included = false;  // run_fraction > min_routine_frac
  std::int64_t loop_instructions = 0;
  double loop_fraction = 0.0;
  bool scaled = false;  // route time exceeded routine time and was scaled down
  bool truncated = false;
  std::vector<LoopRoute> routes;
};

struct PrevalenceReport {
  double min_routine_frac = 0.01;
  std::int64_t total_instructions = 0;
  std::vector<RoutineStats> routines;  // by name
  std::vector<std::string> filtered;
  /// Loop instructions over instructions, across included routines.
  double loop_fraction = 0.0;
  std::vector<std::string> warnings;
};

PrevalenceReport prevalence_report(const TraceData& data, double min_routine_frac = 0.01,
                                   int max_len = kDefaultMaxLen, int max_routes = kDefaultMaxRoutes);

struct Coverage {
  double p = 0.0;
  std::size_t k = 0;
  std::size_t total_routes = 0;
  double fraction = 0.0;  // k / total_routes
  std::optional<std::string> warning;
};

/// Minimal k such that the k largest counts reach p of the total.
/// Throws InvalidArgument unless 0 < p <= 1.
Coverage coverage(std::vector<std::int64_t> iterations, double p);

/// Over the routes of all included routines.
Coverage coverage(const PrevalenceReport& report, double p);

/// Percentage with a fixed number of decimals: 0.239 -> "23.9%".
std::string percent(double fraction, int decimals);

std::string to_json(const PrevalenceReport& report, const std::vector<Coverage>& coverages);

}  // namespace drcgra::trace
