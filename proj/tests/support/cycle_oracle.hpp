#pragma once

// Brute-force simple-cycle enumeration: every ordering of distinct blocks
// that starts at its smallest block is tried and kept if all its edges exist.

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "drcgra/trace.hpp"

namespace drcgra::testing {

inline std::vector<trace::LoopRoute> brute_force_cycles(const trace::RoutineGraph& g, int max_len) {
  std::vector<trace::BlockId> ids;
  for (const auto& [id, b] : g.blocks) ids.push_back(id);
  const int n = static_cast<int>(ids.size());
  std::vector<trace::LoopRoute> out;
  std::vector<int> seq;
  std::vector<bool> used(static_cast<std::size_t>(n), false);

  auto edge_count = [&](int a, int b) -> std::int64_t {
    auto it = g.edges.find({ids[static_cast<std::size_t>(a)], ids[static_cast<std::size_t>(b)]});
    return it == g.edges.end() ? 0 : it->second;
  };
  auto consider = [&] {
    std::int64_t iters = -1;
    for (std::size_t i = 0; i < seq.size(); ++i) {
      const std::int64_t c = edge_count(seq[i], seq[(i + 1) % seq.size()]);
      if (c == 0) return;
      iters = iters < 0 ? c : std::min(iters, c);
    }
    trace::LoopRoute r;
    r.iterations = iters;
    for (int v : seq) {
      r.blocks.push_back(ids[static_cast<std::size_t>(v)]);
      r.instructions_per_iteration += g.blocks.at(ids[static_cast<std::size_t>(v)]).instructions;
    }
    out.push_back(std::move(r));
  };
  auto extend = [&](auto&& self) -> void {
    consider();
    if (static_cast<int>(seq.size()) >= max_len) return;
    for (int v = seq.front() + 1; v < n; ++v) {
      if (used[static_cast<std::size_t>(v)]) continue;
      used[static_cast<std::size_t>(v)] = true;
      seq.push_back(v);
      self(self);
      seq.pop_back();
      used[static_cast<std::size_t>(v)] = false;
    }
  };
  for (int s = 0; s < n; ++s) {
    seq = {s};
    used[static_cast<std::size_t>(s)] = true;
    extend(extend);
    used[static_cast<std::size_t>(s)] = false;
  }
  std::sort(out.begin(), out.end(), [](const trace::LoopRoute& a, const trace::LoopRoute& b) {
    if (a.iterations != b.iterations) return a.iterations > b.iterations;
    return a.blocks < b.blocks;
  });
  return out;
}

/// Graph on `n` blocks whose edge set is the bit pattern `mask` over n*n
/// ordered pairs; counts come from `rng`.
inline trace::RoutineGraph graph_from_mask(int n, std::uint64_t mask, std::mt19937_64& rng) {
  trace::RoutineGraph g;
  g.name = "r";
  for (int i = 0; i < n; ++i) {
    g.blocks["b" + std::to_string(i)] = {1 + static_cast<std::int64_t>(rng() % 5), 1};
  }
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      if (mask >> (a * n + b) & 1u) {
        g.edges[{"b" + std::to_string(a), "b" + std::to_string(b)}] = 1 + static_cast<std::int64_t>(rng() % 9);
      }
    }
  }
  return g;
}

}  // namespace drcgra::testing
