#pragma once

// Loop-carried dependency analysis over an already-built loop dataflow graph.

#include <span>
#include <string_view>
#include <vector>

#include "drcgra/ir.hpp"

namespace drcgra::deps {

using ir::NodeId;

struct LoopCarriedDep {
  std::size_t back_edge = 0;  // index into DataflowGraph::edges
  NodeId producer = 0;
  NodeId consumer = 0;
  int consumer_slot = 0;
  int diff = 1;
  /// Intra-edge path from the consumer to the producer, both inclusive.
  std::vector<NodeId> dependent_path;
  /// Sum of unit latencies along dependent_path.
  int path_latency = 0;

  bool operator==(const LoopCarriedDep&) const = default;
};

/// Structural pattern of one dependency. Memory involvement is reported
/// separately (see Classification::memory).
enum class Pattern { SinglePath, DivergingAfter, DivergingBefore, Consecutive };

std::string_view to_string(Pattern p);

struct Classification {
  Pattern pattern = Pattern::SinglePath;
  bool memory = false;

  bool operator==(const Classification&) const = default;
};

/// One record per back edge, in declaration order. When several intra paths
/// lead from consumer to producer the longest-latency one is taken, ties
/// broken by the lexicographically smallest node-id sequence.
/// Throws MalformedLoop when a consumer cannot reach its producer.
std::vector<LoopCarriedDep> find_deps(const ir::DataflowGraph& g,
                                      const ir::LatencyTable& latencies = {});

Classification classify(const ir::DataflowGraph& g, const LoopCarriedDep& dep,
                        std::span<const LoopCarriedDep> all_deps);

/// Convenience overload; recomputes the full dependency list.
Classification classify(const ir::DataflowGraph& g, const LoopCarriedDep& dep);

}  // namespace drcgra::deps
