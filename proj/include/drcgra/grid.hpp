#pragma once

// Placement of a loop dataflow graph onto a heterogeneous unit grid, static
// NoC routing, and ILDR / end-of-route attachment for loop-carried deps.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "drcgra/deps.hpp"
#include "drcgra/ir.hpp"

namespace drcgra::grid {

using ir::NodeId;
using ir::UnitClass;

struct Cell {
  int row = 0;
  int col = 0;

  auto operator<=>(const Cell&) const = default;
};

int manhattan(Cell a, Cell b);
std::string to_string(Cell c);  // "r<row>c<col>"

struct GridSpec {
  int rows = 8;
  int cols = 8;
  std::vector<UnitClass> unit_map;  // row-major, rows * cols entries
  ir::LatencyTable latencies;
  int hop_latency = 1;
  int token_buffer_depth = 16;

  UnitClass unit_at(Cell c) const { return unit_map.at(static_cast<std::size_t>(c.row * cols + c.col)); }
  bool operator==(const GridSpec&) const = default;
};

/// 8x8: columns 0-1 LDST, column 2 alternating CONTROL (even rows) / SJU
/// (odd rows), columns 3-7 COMPUTE.
GridSpec default_grid();

/// Throws InvalidArgument when an invariant (size, latencies, depth) fails.
void check(const GridSpec& spec);

GridSpec parse_grid_json(std::string_view text);
GridSpec load_grid(const std::filesystem::path& path);
std::string to_json(const GridSpec& spec);

/// Cell per node id.
using Placement = std::vector<Cell>;

struct Route {
  std::vector<Cell> path;  // source and destination cells inclusive
  int latency = 0;

  bool operator==(const Route&) const = default;
};

/// Dimension-ordered (row first, then column) route between two cells.
Route xy_route(Cell from, Cell to, int hop_latency);

enum class Realization { SelfFeedback, EndOfRoute };

struct IldrEdge {
  std::size_t back_edge = 0;
  NodeId producer = 0;
  NodeId consumer = 0;
  int slot = 0;
  int diff = 1;
  int selector_init = 1;  // threads served by the original input
  Realization realization = Realization::SelfFeedback;
  std::optional<std::size_t> eor;  // index into GridConfig::eor_updates

  bool operator==(const IldrEdge&) const = default;
};

/// Identity unit that re-broadcasts the final value of a dependent path,
/// retagged by +diff, to the consumer's dependent slot.
struct EorUpdate {
  NodeId producer = 0;
  NodeId consumer = 0;
  Cell cell;
  Route in_route;   // producer -> eor
  Route out_route;  // eor -> consumer

  bool operator==(const EorUpdate&) const = default;
};

struct IldrAttachment {
  std::vector<IldrEdge> ildr_edges;
  std::vector<EorUpdate> eor_updates;
  /// Back edges left to spill handling even in DR mode (Consecutive deps).
  std::vector<std::size_t> baseline_edges;

  bool operator==(const IldrAttachment&) const = default;
};

struct GridConfig {
  GridSpec spec;
  Placement placement;
  /// One route per graph edge (same index): NoC route for intra edges, spill
  /// route (producer -> nearest LDST -> consumer) for back edges.
  std::vector<Route> routes;
  std::vector<IldrEdge> ildr_edges;
  std::vector<EorUpdate> eor_updates;
  std::vector<std::size_t> baseline_edges;

  bool operator==(const GridConfig&) const = default;
};

/// Greedy BFS placement from graph sources: each node takes the free
/// class-correct cell minimizing summed manhattan distance to its placed
/// predecessors, ties to the lowest (row, col). Throws CapacityExceeded.
Placement place(const ir::DataflowGraph& g, const GridSpec& spec);

std::vector<Route> route(const Placement& placement, const ir::DataflowGraph& g, const GridSpec& spec);

/// Throws UnsupportedDualDependency when one node carries two dependent
/// inputs, CapacityExceeded when no COMPUTE cell is left for an eor node.
IldrAttachment attach_ildr(const ir::DataflowGraph& g, std::span<const deps::LoopCarriedDep> deps,
                           const Placement& placement, const GridSpec& spec);

/// place + route + find_deps + attach_ildr.
GridConfig map_graph(const ir::DataflowGraph& g, const GridSpec& spec);

std::string to_json(const GridConfig& config, const ir::DataflowGraph& g);

}  // namespace drcgra::grid
