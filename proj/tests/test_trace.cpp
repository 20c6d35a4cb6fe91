#include <random>
#include <sstream>

#include "doctest.h"
#include "drcgra/error.hpp"
#include "drcgra/trace.hpp"
#include "support/cycle_oracle.hpp"
#include "support/fixtures.hpp"

using namespace drcgra;
using drcgra::testing::fixture;

namespace {

ErrorCode code_of(const std::string& text) {
  try {
    trace::ingest_text(text);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::Io;
}

trace::RoutineGraph self_loop(std::int64_t count) {
  trace::RoutineGraph g;
  g.name = "r";
  g.blocks["A"] = {3, count};
  g.edges[{"A", "A"}] = count;
  return g;
}

}  // namespace

TEST_SUITE("trace") {
  TEST_CASE("streaming A,B,A,B,A counts adjacent pairs") {
    const auto d = trace::ingest_text("r,A\nr,B\nr,A\nr,B\nr,A\n");
    const auto& g = d.routines.at("r");
    CHECK(g.edges.size() == 2);
    CHECK(g.edges.at({"A", "B"}) == 2);
    CHECK(g.edges.at({"B", "A"}) == 2);
    CHECK(g.blocks.at("A").executions == 3);
    CHECK(g.blocks.at("B").executions == 2);
  }

  TEST_CASE("streaming pairs are formed per routine") {
    const auto d = trace::ingest_text("f,A,2\ng,X,5\nf,B\ng,X\nf,A\n");
    CHECK(d.routines.at("f").edges.at({"A", "B"}) == 1);
    CHECK(d.routines.at("f").edges.at({"B", "A"}) == 1);
    CHECK(d.routines.at("g").edges.at({"X", "X"}) == 1);
    CHECK(d.routines.at("f").blocks.at("A").instructions == 2);
    CHECK(d.routines.at("g").instructions() == 10);
  }

  TEST_CASE("aggregated input echoes its counts") {
    const auto d = trace::ingest_text("#aggregated\n#bb r,A,4\n#bb r,B,2,7\nr,A,B,7\nr,B,A,6\n");
    const auto& g = d.routines.at("r");
    CHECK(g.edges.at({"A", "B"}) == 7);
    CHECK(g.edges.at({"B", "A"}) == 6);
    CHECK(g.blocks.at("A").instructions == 4);
    CHECK(g.blocks.at("A").executions == 7);
    CHECK(g.blocks.at("B").executions == 7);
  }

  TEST_CASE("empty input gives no routines") {
    CHECK(trace::ingest_text("").routines.empty());
    CHECK(trace::ingest_text("\n# nothing here\n").routines.empty());
  }

  TEST_CASE("malformed lines report their line number") {
    try {
      trace::ingest_text("r,A\nr,B\nr,,\n");
      FAIL("expected malformed-trace");
    } catch (const ParseError& e) {
      CHECK(e.code() == ErrorCode::MalformedTrace);
      CHECK(e.line() == 3);
    }
    CHECK(code_of("r,A,0\n") == ErrorCode::MalformedTrace);
    CHECK(code_of("r,A,x\n") == ErrorCode::MalformedTrace);
    CHECK(code_of("r,A,2\nr,A,3\n") == ErrorCode::MalformedTrace);
    CHECK(code_of("#aggregated\nr,A,B,1\nr,A,B,2\n") == ErrorCode::MalformedTrace);
    CHECK(code_of("#aggregated\nr,A,B\nr\n") == ErrorCode::MixedTraceFormats);
  }

  TEST_CASE("mixing the two formats is rejected") {
    CHECK(code_of("r,A\n#aggregated\nr,A,B,1\n") == ErrorCode::MixedTraceFormats);
    CHECK(code_of("r,A\nr,A,B,1\n") == ErrorCode::MixedTraceFormats);
    CHECK(code_of("#aggregated\nr,A,B,1\nr,A\n") == ErrorCode::MixedTraceFormats);
    CHECK(code_of("r,A\n#bb r,A,3\n") == ErrorCode::MixedTraceFormats);
  }

  TEST_CASE("blocks with more than two successors produce a warning") {
    const auto d = trace::ingest_text("#aggregated\nr,A,B,1\nr,A,C,1\nr,A,D,1\n");
    CHECK(d.warnings.size() == 1);
  }

  TEST_CASE("self-loop gives one route with its count") {
    const auto loops = trace::enumerate_loops(self_loop(10));
    REQUIRE(loops.routes.size() == 1);
    CHECK(loops.routes[0].iterations == 10);
    CHECK(loops.routes[0].blocks == std::vector<trace::BlockId>{"A"});
    CHECK_FALSE(loops.truncated);
  }

  TEST_CASE("two nested cycles through A and B") {
    const auto d = trace::ingest_text(drcgra::testing::slurp(fixture("traces/nested.trc")));
    const auto loops = trace::enumerate_loops(d.routines.at("r"));
    REQUIRE(loops.routes.size() == 2);
    CHECK(loops.routes[0].blocks == std::vector<trace::BlockId>{"A", "B"});
    CHECK(loops.routes[0].iterations == 2);
    CHECK(loops.routes[1].blocks == std::vector<trace::BlockId>{"A", "B", "C"});
    CHECK(loops.routes[1].iterations == 1);
    CHECK(loops.routes[1].instructions_per_iteration == 9);
    CHECK(loops.routes == drcgra::testing::brute_force_cycles(d.routines.at("r"), 32));
  }

  TEST_CASE("acyclic graph has no routes") {
    const auto d = trace::ingest_text("r,A\nr,B\nr,C\n");
    CHECK(trace::enumerate_loops(d.routines.at("r")).routes.empty());
  }

  TEST_CASE("caps: max_len and max_routes") {
    std::mt19937_64 rng(3);
    const auto complete = drcgra::testing::graph_from_mask(6, (1ull << 36) - 1, rng);
    const auto all = trace::enumerate_loops(complete);
    CHECK_FALSE(all.truncated);
    const auto capped = trace::enumerate_loops(complete, 32, 10);
    CHECK(capped.truncated);
    CHECK(capped.routes.size() == 10);
    const auto short_only = trace::enumerate_loops(complete, 2);
    CHECK(short_only.routes.size() == 6 + 15);
    for (const auto& r : short_only.routes) CHECK(r.blocks.size() <= 2);
  }

  TEST_CASE("exhaustive: every graph on up to 4 blocks matches brute force") {
    std::mt19937_64 rng(11);
    for (int n = 1; n <= 4; ++n) {
      const std::uint64_t limit = 1ull << (n * n);
      for (std::uint64_t mask = 0; mask < limit; ++mask) {
        const auto g = drcgra::testing::graph_from_mask(n, mask, rng);
        REQUIRE(trace::enumerate_loops(g).routes == drcgra::testing::brute_force_cycles(g, 32));
      }
    }
  }

  TEST_CASE("property: random graphs on 5 to 8 blocks match brute force, with length caps") {
    std::mt19937_64 rng(12);
    for (int i = 0; i < 1500; ++i) {
      const int n = 5 + i % 4;
      const std::uint64_t mask = rng() & rng() & (n * n == 64 ? ~0ull : (1ull << (n * n)) - 1);
      const auto g = drcgra::testing::graph_from_mask(n, mask, rng);
      const int max_len = 1 + i % 8;
      REQUIRE(trace::enumerate_loops(g, max_len).routes == drcgra::testing::brute_force_cycles(g, max_len));
    }
  }

  TEST_CASE("routine fully inside one loop has loop fraction 1") {
    trace::TraceData d;
    d.routines["r"] = self_loop(50);
    const auto rep = trace::prevalence_report(d);
    CHECK(rep.loop_fraction == 1.0);
    CHECK(rep.routines[0].loop_fraction == 1.0);
  }

  TEST_CASE("loop-time fixture: 23.9% with the small routine filtered") {
    const auto rep = trace::prevalence_report(trace::load_trace(fixture("traces/loop_time.trc")));
    CHECK(trace::percent(rep.loop_fraction, 1) == "23.9%");
    CHECK(rep.loop_fraction == doctest::Approx(0.239));
    CHECK(rep.filtered == std::vector<std::string>{"helper"});
    CHECK(rep.total_instructions == 1005);
  }

  TEST_CASE("routine filter is strict: exactly the threshold is excluded") {
    trace::TraceData d;
    d.routines["big"] = self_loop(33);
    d.routines["big"].blocks["A"] = {3, 33};
    trace::RoutineGraph small;
    small.name = "small";
    small.blocks["X"] = {1, 1};
    d.routines["small"] = small;
    // 1 of 100 instructions: not over 1%.
    const auto rep = trace::prevalence_report(d, 0.01);
    CHECK(rep.filtered == std::vector<std::string>{"small"});
  }

  TEST_CASE("shared-edge over-attribution is scaled down and flagged") {
    trace::RoutineGraph g;
    g.name = "r";
    g.blocks["A"] = {1, 10};
    g.blocks["B"] = {1, 10};
    g.edges[{"A", "A"}] = 10;
    g.edges[{"A", "B"}] = 10;
    g.edges[{"B", "A"}] = 10;
    trace::TraceData d;
    d.routines["r"] = g;
    const auto rep = trace::prevalence_report(d);
    CHECK(rep.routines[0].scaled);
    CHECK(rep.routines[0].loop_fraction == 1.0);
  }

  TEST_CASE("coverage examples") {
    auto c = trace::coverage(std::vector<std::int64_t>{70, 20, 10}, 0.9);
    CHECK(c.k == 2);
    CHECK(c.fraction == doctest::Approx(2.0 / 3.0));
    c = trace::coverage(std::vector<std::int64_t>{100}, 0.9);
    CHECK(c.k == 1);
    CHECK(c.fraction == 1.0);
    c = trace::coverage(std::vector<std::int64_t>{}, 0.9);
    CHECK(c.k == 0);
    CHECK(c.fraction == 0.0);
    CHECK(c.warning);
    CHECK_THROWS_AS(trace::coverage(std::vector<std::int64_t>{1}, 0.0), Error);
    CHECK_THROWS_AS(trace::coverage(std::vector<std::int64_t>{1}, 1.5), Error);
  }

  TEST_CASE("coverage fixtures: 2 of 15 routes at 90%, 11 of 60 at 95%") {
    const auto r15 = trace::prevalence_report(trace::load_trace(fixture("traces/coverage15.trc")));
    const auto c15 = trace::coverage(r15, 0.90);
    CHECK(c15.k == 2);
    CHECK(c15.total_routes == 15);
    CHECK(trace::percent(c15.fraction, 2) == "13.33%");
    const auto r60 = trace::prevalence_report(trace::load_trace(fixture("traces/coverage60.trc")));
    const auto c60 = trace::coverage(r60, 0.95);
    CHECK(c60.k == 11);
    CHECK(c60.total_routes == 60);
    CHECK(trace::percent(c60.fraction, 1) == "18.3%");
  }

  TEST_CASE("property: coverage is monotone in p") {
    std::mt19937_64 rng(21);
    for (int i = 0; i < 300; ++i) {
      std::vector<std::int64_t> counts(1 + rng() % 30);
      for (auto& c : counts) c = 1 + static_cast<std::int64_t>(rng() % 1000);
      std::size_t prev = 0;
      for (double p = 0.05; p <= 1.0; p += 0.05) {
        const auto k = trace::coverage(counts, p).k;
        CHECK(k >= prev);
        prev = k;
      }
      CHECK(trace::coverage(counts, 1.0).k == counts.size());
    }
  }

  TEST_CASE("property: streaming and aggregated forms of one run give identical graphs") {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 200; ++i) {
      std::ostringstream stream;
      const int routines = 1 + static_cast<int>(rng() % 3);
      const int events = static_cast<int>(rng() % 60);
      std::map<std::string, int> instr;
      for (int e = 0; e < events; ++e) {
        const std::string r = "f" + std::to_string(rng() % routines);
        const std::string b = "b" + std::to_string(rng() % 6);
        const std::string key = r + "," + b;
        if (!instr.count(key)) instr[key] = 1 + static_cast<int>(rng() % 9);
        stream << key << ',' << instr[key] << '\n';
      }
      const auto streamed = trace::ingest_text(stream.str());
      std::ostringstream agg;
      agg << "#aggregated\n";
      for (const auto& [name, g] : streamed.routines) {
        for (const auto& [id, b] : g.blocks) {
          agg << "#bb " << name << ',' << id << ',' << b.instructions << ',' << b.executions << '\n';
        }
        for (const auto& [edge, count] : g.edges) {
          agg << name << ',' << edge.first << ',' << edge.second << ',' << count << '\n';
        }
      }
      CHECK(trace::ingest_text(agg.str()).routines == streamed.routines);
    }
  }

  TEST_CASE("JSON report is deterministic and carries the methodology") {
    const auto d = trace::load_trace(fixture("traces/coverage15.trc"));
    const auto rep = trace::prevalence_report(d);
    const std::vector<trace::Coverage> cov = {trace::coverage(rep, 0.9), trace::coverage(rep, 0.95)};
    const auto a = trace::to_json(rep, cov);
    CHECK(a == trace::to_json(trace::prevalence_report(trace::load_trace(fixture("traces/coverage15.trc"))), cov));
    CHECK(a.find("\"fraction_pct\": \"13.33%\"") != std::string::npos);
    CHECK(a.find("bottleneck") != std::string::npos);
  }
}
