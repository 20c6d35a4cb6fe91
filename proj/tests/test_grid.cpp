#include <algorithm>
#include <cstdlib>
#include <set>

#include "doctest.h"
#include "drcgra/error.hpp"
#include "drcgra/grid.hpp"
#include "support/fixtures.hpp"
#include "support/random_dfg.hpp"

using namespace drcgra;
using drcgra::testing::load_fixture;

namespace {

grid::GridSpec uniform_grid(int rows, int cols, ir::UnitClass u = ir::UnitClass::Compute) {
  grid::GridSpec s;
  s.rows = rows;
  s.cols = cols;
  s.unit_map.assign(static_cast<std::size_t>(rows * cols), u);
  return s;
}

void check_placement(const ir::DataflowGraph& g, const grid::GridSpec& spec, const grid::Placement& p) {
  REQUIRE(p.size() == g.size());
  std::set<grid::Cell> used(p.begin(), p.end());
  CHECK(used.size() == p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(p[i].row >= 0);
    CHECK(p[i].row < spec.rows);
    CHECK(p[i].col >= 0);
    CHECK(p[i].col < spec.cols);
    CHECK(spec.unit_at(p[i]) == ir::unit_class(g.nodes[i].op));
  }
}

// Accumulator without the sink, so it fits a 1x3 [L C C] row.
constexpr const char* kBareAccumulator =
    "node 0 const 1\nnode 1 add\nedge 0 1 0\nback 1 1 1 1\nlivein x 1 1 0\nliveout 1\n";

}  // namespace

TEST_SUITE("grid") {
  TEST_CASE("default grid: LDST columns 0-1, CONTROL/SJU column 2, COMPUTE 3-7") {
    const auto s = grid::default_grid();
    CHECK(s.rows == 8);
    CHECK(s.cols == 8);
    CHECK(s.hop_latency == 1);
    CHECK(s.token_buffer_depth == 16);
    CHECK(s.latencies.alu == 1);
    CHECK(s.latencies.fpu == 4);
    for (int r = 0; r < 8; ++r) {
      CHECK(s.unit_at({r, 0}) == ir::UnitClass::LdSt);
      CHECK(s.unit_at({r, 1}) == ir::UnitClass::LdSt);
      CHECK(s.unit_at({r, 2}) == (r % 2 == 0 ? ir::UnitClass::Control : ir::UnitClass::Sju));
      for (int c = 3; c < 8; ++c) CHECK(s.unit_at({r, c}) == ir::UnitClass::Compute);
    }
  }

  TEST_CASE("three compute nodes on a 2x2 compute grid: injective and repeatable") {
    const auto g = ir::parse_dfg("node 0 const 1\nnode 1 const 2\nnode 2 add\nedge 0 2 0\nedge 1 2 1\nliveout 2\n");
    const auto spec = uniform_grid(2, 2);
    const auto p = grid::place(g, spec);
    check_placement(g, spec, p);
    CHECK(grid::place(g, spec) == p);
  }

  TEST_CASE("a LOAD on an all-compute grid exceeds LDST capacity") {
    const auto g = ir::parse_dfg("node 0 load\nlivein a 0 0 0\nliveout 0\nmem 0 1\n");
    try {
      grid::place(g, uniform_grid(2, 2));
      FAIL("expected capacity-exceeded");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::CapacityExceeded);
      CHECK(std::string(e.what()).find("LDST") != std::string::npos);
    }
  }

  TEST_CASE("scenario4 on the default grid: LOAD on LDST, adds on COMPUTE") {
    const auto g = load_fixture("scenario4.dfg");
    const auto spec = grid::default_grid();
    const auto p = grid::place(g, spec);
    check_placement(g, spec, p);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (g.nodes[i].op == ir::Op::Load) CHECK(spec.unit_at(p[i]) == ir::UnitClass::LdSt);
      if (g.nodes[i].op == ir::Op::Add) CHECK(spec.unit_at(p[i]) == ir::UnitClass::Compute);
    }
  }

  TEST_CASE("xy routes are manhattan distance times hop latency") {
    CHECK(grid::xy_route({1, 1}, {1, 1}, 1).latency == 0);
    const auto r = grid::xy_route({0, 0}, {2, 3}, 1);
    CHECK(r.latency == 5);
    CHECK(r.path.size() == 6);
    CHECK(r.path.front() == grid::Cell{0, 0});
    CHECK(r.path.back() == grid::Cell{2, 3});
    for (std::size_t i = 1; i < r.path.size(); ++i) CHECK(grid::manhattan(r.path[i - 1], r.path[i]) == 1);
    CHECK(grid::xy_route({0, 0}, {2, 3}, 3).latency == 15);
  }

  TEST_CASE("accumulator intra routes match recomputed distances for several hop latencies") {
    const auto g = load_fixture("accumulator.dfg");
    for (int hop : {0, 1, 2, 5}) {
      auto spec = grid::default_grid();
      spec.hop_latency = hop;
      const auto cfg = grid::map_graph(g, spec);
      for (std::size_t e = 0; e < g.edges.size(); ++e) {
        if (g.edges[e].is_back()) continue;
        const auto a = cfg.placement[static_cast<std::size_t>(g.edges[e].src)];
        const auto b = cfg.placement[static_cast<std::size_t>(g.edges[e].dst)];
        CHECK(cfg.routes[e].latency == (std::abs(a.row - b.row) + std::abs(a.col - b.col)) * hop);
      }
    }
  }

  TEST_CASE("spill route goes through the nearest LDST cell") {
    // 1x3 [L C C]: const at c1, add at c2, nearest LDST c0 -> L = 2 + 2.
    grid::GridSpec spec = uniform_grid(1, 3);
    spec.unit_map[0] = ir::UnitClass::LdSt;
    const auto g = ir::parse_dfg(kBareAccumulator);
    const auto cfg = grid::map_graph(g, spec);
    CHECK(cfg.placement[1] == grid::Cell{0, 2});
    const auto back = std::find_if(g.edges.begin(), g.edges.end(), [](const ir::Edge& e) { return e.is_back(); });
    const auto& r = cfg.routes[static_cast<std::size_t>(back - g.edges.begin())];
    CHECK(r.latency == 4);
    CHECK(std::find(r.path.begin(), r.path.end(), grid::Cell{0, 0}) != r.path.end());
  }

  TEST_CASE("self-loop: one self-feedback ILDR, selector_init 1, no eor") {
    const auto cfg = grid::map_graph(load_fixture("scenario1.dfg"), grid::default_grid());
    REQUIRE(cfg.ildr_edges.size() == 1);
    CHECK(cfg.ildr_edges[0].selector_init == 1);
    CHECK(cfg.ildr_edges[0].realization == grid::Realization::SelfFeedback);
    CHECK(cfg.eor_updates.empty());
    CHECK(cfg.baseline_edges.empty());
  }

  TEST_CASE("diverging before: one ILDR edge plus one end-of-route update") {
    const auto g = load_fixture("scenario3.dfg");
    const auto spec = grid::default_grid();
    const auto cfg = grid::map_graph(g, spec);
    REQUIRE(cfg.ildr_edges.size() == 1);
    REQUIRE(cfg.eor_updates.size() == 1);
    CHECK(cfg.ildr_edges[0].realization == grid::Realization::EndOfRoute);
    const auto& eor = cfg.eor_updates[0];
    CHECK(spec.unit_at(eor.cell) == ir::UnitClass::Compute);
    CHECK(std::find(cfg.placement.begin(), cfg.placement.end(), eor.cell) == cfg.placement.end());
    CHECK(eor.in_route.latency == grid::manhattan(cfg.placement[static_cast<std::size_t>(eor.producer)], eor.cell));
    CHECK(eor.out_route.latency == grid::manhattan(eor.cell, cfg.placement[static_cast<std::size_t>(eor.consumer)]));
  }

  TEST_CASE("consecutive: no ILDR, every dep left to the baseline path") {
    const auto cfg = grid::map_graph(load_fixture("scenario5.dfg"), grid::default_grid());
    CHECK(cfg.ildr_edges.empty());
    CHECK(cfg.baseline_edges.size() == 3);
  }

  TEST_CASE("two dependent inputs on one node are rejected") {
    const char* src = R"(node 0 add
back 0 0 0 1
back 0 0 1 1
livein a 0 0 1
livein b 0 1 2
liveout 0
)";
    try {
      grid::map_graph(ir::parse_dfg(src), grid::default_grid());
      FAIL("expected unsupported-dual-dependency");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::UnsupportedDualDependency);
    }
  }

  TEST_CASE("grid spec JSON round trip and validation") {
    auto spec = grid::default_grid();
    spec.hop_latency = 2;
    spec.latencies.fpu = 6;
    CHECK(grid::parse_grid_json(grid::to_json(spec)) == spec);
    const auto small = grid::parse_grid_json(R"({"rows": 1, "cols": 3, "unit_map": ["LCC"]})");
    CHECK(small.unit_at({0, 0}) == ir::UnitClass::LdSt);
    CHECK(small.unit_at({0, 2}) == ir::UnitClass::Compute);
    for (const char* bad : {R"({"rows": 2, "cols": 2, "unit_map": ["CC"]})", R"({"token_buffer_depth": 0})",
                            R"({"latencies": {"alu": 0}})"}) {
      CHECK_THROWS_AS(grid::parse_grid_json(bad), Error);
    }
    CHECK_THROWS_AS(grid::parse_grid_json(R"({"unit_map": ["XX"]})"), Error);
  }

  TEST_CASE("property: random graphs map to valid, deterministic configs") {
    drcgra::testing::RandomDfg gen(2024);
    const auto spec = grid::default_grid();
    int mapped = 0;
    for (int i = 0; i < 300; ++i) {
      const auto g = gen.next();
      grid::GridConfig cfg;
      try {
        cfg = grid::map_graph(g, spec);
      } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::UnsupportedDualDependency);
        continue;
      }
      ++mapped;
      check_placement(g, spec, cfg.placement);
      CHECK(grid::map_graph(g, spec) == cfg);
      REQUIRE(cfg.routes.size() == g.edges.size());
      std::map<ir::NodeId, int> ildr_per_node;
      for (const auto& il : cfg.ildr_edges) {
        CHECK(il.selector_init == il.diff);
        CHECK(il.diff == g.edges[il.back_edge].diff);
        ++ildr_per_node[il.consumer];
        if (il.realization == grid::Realization::SelfFeedback) {
          CHECK(il.producer == il.consumer);
        } else {
          REQUIRE(il.eor);
          CHECK(*il.eor < cfg.eor_updates.size());
        }
      }
      for (const auto& [node, count] : ildr_per_node) CHECK(count == 1);
      std::set<grid::Cell> cells(cfg.placement.begin(), cfg.placement.end());
      for (const auto& eor : cfg.eor_updates) CHECK(cells.insert(eor.cell).second);
    }
    CHECK(mapped > 200);
  }
}
