#include "drcgra/deps.hpp"

#include <algorithm>
#include <optional>
#include <set>

#include "drcgra/error.hpp"

namespace drcgra::deps {

namespace {

struct BestPath {
  int latency = 0;
  std::vector<NodeId> nodes;
};

// Longest-latency path from `from` to `target` over intra edges, or nullopt.
// Memoized over the DAG; among equal latencies the lexicographically smallest
// sequence wins, which reduces to the smallest next hop at every node.
std::optional<BestPath> longest_path(const ir::DataflowGraph& g,
                                     const std::vector<std::vector<std::size_t>>& succ,
                                     const ir::LatencyTable& lat, NodeId from, NodeId target) {
  std::vector<std::optional<std::optional<BestPath>>> memo(g.size());
  auto solve = [&](auto&& self, NodeId n) -> const std::optional<BestPath>& {
    auto& slot = memo[static_cast<std::size_t>(n)];
    if (slot) return *slot;
    const int own = lat.cycles(g.node(n).latency());
    std::optional<BestPath> best;
    if (n == target) {
      best = BestPath{own, {n}};
    } else {
      std::vector<NodeId> next;
      for (std::size_t e : succ[static_cast<std::size_t>(n)]) next.push_back(g.edges[e].dst);
      std::sort(next.begin(), next.end());
      next.erase(std::unique(next.begin(), next.end()), next.end());
      for (NodeId s : next) {
        const auto& sub = self(self, s);
        if (!sub) continue;
        if (!best || sub->latency + own > best->latency) {
          BestPath p{sub->latency + own, {n}};
          p.nodes.insert(p.nodes.end(), sub->nodes.begin(), sub->nodes.end());
          best = std::move(p);
        }
      }
    }
    slot = std::move(best);
    return *slot;
  };
  return solve(solve, from);
}

}  // namespace

std::string_view to_string(Pattern p) {
  switch (p) {
    case Pattern::SinglePath: return "SinglePath";
    case Pattern::DivergingAfter: return "DivergingAfter";
    case Pattern::DivergingBefore: return "DivergingBefore";
    case Pattern::Consecutive: return "Consecutive";
  }
  return "?";
}

std::vector<LoopCarriedDep> find_deps(const ir::DataflowGraph& g, const ir::LatencyTable& latencies) {
  const auto succ = ir::intra_successors(g);
  std::vector<LoopCarriedDep> deps;
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const ir::Edge& edge = g.edges[e];
    if (!edge.is_back()) continue;
    auto path = longest_path(g, succ, latencies, edge.dst, edge.src);
    if (!path) {
      throw Error(ErrorCode::MalformedLoop,
                  "back edge " + std::to_string(edge.src) + "->" + std::to_string(edge.dst) +
                      ": consumer cannot reach producer through intra edges");
    }
    LoopCarriedDep d;
    d.back_edge = e;
    d.producer = edge.src;
    d.consumer = edge.dst;
    d.consumer_slot = edge.slot;
    d.diff = edge.diff;
    d.dependent_path = std::move(path->nodes);
    d.path_latency = path->latency;
    deps.push_back(std::move(d));
  }
  return deps;
}

Classification classify(const ir::DataflowGraph& g, const LoopCarriedDep& dep,
                        std::span<const LoopCarriedDep> all_deps) {
  Classification c;
  c.memory = std::any_of(g.nodes.begin(), g.nodes.end(),
                         [](const ir::Node& n) { return ir::is_memory(n.op); });

  const std::set<NodeId> on_path(dep.dependent_path.begin(), dep.dependent_path.end());
  for (const auto& other : all_deps) {
    if (other.back_edge == dep.back_edge) continue;
    const bool shares = std::any_of(other.dependent_path.begin(), other.dependent_path.end(),
                                    [&](NodeId n) { return on_path.count(n) != 0; });
    if (shares) {
      c.pattern = Pattern::Consecutive;
      return c;
    }
  }

  // Sinks only observe results; they are not grid consumers.
  bool after = false, before = false;
  for (const auto& e : g.edges) {
    if (e.is_back() || !on_path.count(e.src) || on_path.count(e.dst)) continue;
    if (g.node(e.dst).op == ir::Op::Sink) continue;
    (e.src == dep.producer ? after : before) = true;
  }
  c.pattern = before ? Pattern::DivergingBefore : after ? Pattern::DivergingAfter : Pattern::SinglePath;
  return c;
}

Classification classify(const ir::DataflowGraph& g, const LoopCarriedDep& dep) {
  const auto all = find_deps(g);
  return classify(g, dep, all);
}

}  // namespace drcgra::deps
