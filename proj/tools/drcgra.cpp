// drcgra: command-line front end for the loop mapper, simulator, benchmark
// harness and trace analyzer.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "drcgra/bench.hpp"
#include "drcgra/deps.hpp"
#include "drcgra/error.hpp"
#include "drcgra/grid.hpp"
#include "drcgra/ir.hpp"
#include "drcgra/sim.hpp"
#include "drcgra/trace.hpp"

namespace {

using namespace drcgra;

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << text;
  if (!out) throw Error(ErrorCode::Io, "write failed: " + path);
}

grid::GridSpec grid_or_default(const std::string& path) {
  return path.empty() ? grid::default_grid() : grid::load_grid(path);
}

void report_warnings(const ir::DataflowGraph& g) {
  for (const auto& v : ir::validate(g)) {
    if (v.severity == ir::Severity::Warning) std::cerr << "warning: " << v.message << '\n';
  }
}

int run_analyze(const std::string& file) {
  const auto g = ir::load_dfg(file);
  report_warnings(g);
  const auto all = deps::find_deps(g);
  std::ostringstream os;
  for (const auto& d : all) {
    const auto c = deps::classify(g, d, all);
    os << "dep " << d.producer << "->" << d.consumer << " slot=" << d.consumer_slot << " diff=" << d.diff
       << " pattern=" << deps::to_string(c.pattern) << " mem=" << (c.memory ? 1 : 0)
       << " path_len=" << d.path_latency << '\n';
  }
  write_output("", os.str());
  return 0;
}

int run_map(const std::string& file, const std::string& grid_path) {
  const auto g = ir::load_dfg(file);
  report_warnings(g);
  const auto cfg = grid::map_graph(g, grid_or_default(grid_path));
  write_output("", grid::to_json(cfg, g));
  return 0;
}

struct SimArgs {
  std::string file;
  std::string mode = "dr";
  int threads = 1;
  std::string grid;
  int mem_latency = 20;
  int spill = 8;
  int mem_outstanding = 0;
  std::string trace;
};

int run_sim(const SimArgs& a) {
  const auto g = ir::load_dfg(a.file);
  report_warnings(g);
  const auto cfg = grid::map_graph(g, grid_or_default(a.grid));
  sim::MachineParams p;
  p.mode = *sim::parse_mode(a.mode);
  p.n_threads = a.threads;
  p.mem_latency = a.mem_latency;
  p.spill_latency = a.spill;
  if (a.mem_outstanding > 0) p.mem_max_outstanding = a.mem_outstanding;

  std::ofstream trace_file;
  sim::TraceSink sink;
  if (!a.trace.empty()) {
    trace_file.open(a.trace, std::ios::binary);
    if (!trace_file) throw Error(ErrorCode::Io, "cannot write " + a.trace);
    sink = [&trace_file](const sim::TraceEvent& e) { trace_file << sim::format(e) << '\n'; };
  }
  const auto r = sim::simulate(cfg, g, p, sink);

  std::ostringstream os;
  os << "mode=" << sim::to_string(p.mode) << " threads=" << p.n_threads << " total_cycles=" << r.total_cycles
     << " measured_ii=" << bench::format_number(r.measured_ii) << " dropped_retag=" << r.dropped_retag
     << " selector_discards=" << r.selector_discards << '\n';
  for (const auto& u : r.units) {
    os << "unit " << u.name << " cell=" << grid::to_string(u.cell) << " fires=" << u.fires << " stalls=" << u.stalls
       << '\n';
  }
  for (std::size_t t = 0; t < r.live_out.size(); ++t) {
    for (const auto& [node, value] : r.live_out[t]) {
      os << "liveout thread=" << t << " node=" << node << " value=" << value << '\n';
    }
  }
  write_output("", os.str());
  return 0;
}

int run_sweep(const std::string& exp_path, const std::string& out) {
  const auto exp = bench::load_experiment(exp_path);
  write_output(out, bench::to_csv(bench::sweep(exp)));
  return 0;
}

int run_suite(const std::string& dir, const std::string& out, const std::vector<int>& threads) {
  bench::SuiteOptions opts;
  if (!threads.empty()) opts.threads = threads;
  const auto report = bench::suite(dir, opts);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  write_output(out, bench::to_csv(report));
  return 0;
}

int run_trace(const std::string& in, double min_frac, const std::vector<double>& ps, const std::string& out,
              int max_len, int max_routes) {
  const auto data = trace::load_trace(in);
  const auto report = trace::prevalence_report(data, min_frac, max_len, max_routes);
  std::vector<trace::Coverage> covs;
  for (double p : ps) covs.push_back(trace::coverage(report, p));
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  for (const auto& c : covs) {
    if (c.warning) std::cerr << "warning: " << *c.warning << '\n';
  }
  std::ostringstream os;
  os << "loop_fraction=" << trace::percent(report.loop_fraction, 1) << '\n';
  for (const auto& c : covs) {
    os << "coverage p=" << bench::format_number(c.p) << " k=" << c.k << " of " << c.total_routes
       << " routes=" << trace::percent(c.fraction, 2) << '\n';
  }
  if (out.empty() || out == "-") {
    std::cout << trace::to_json(report, covs);
  } else {
    write_output(out, trace::to_json(report, covs));
    std::cout << os.str();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dependency-resolved multithreaded CGRA toolchain"};
  app.require_subcommand(1);

  std::string file, grid_path, out;

  auto* analyze = app.add_subcommand("analyze", "List loop-carried dependencies and their patterns");
  analyze->add_option("file", file, "Loop graph (.dfg or .json)")->required();

  auto* map = app.add_subcommand("map", "Place and route a loop graph; print the grid config as JSON");
  map->add_option("file", file, "Loop graph")->required();
  map->add_option("--grid", grid_path, "Grid spec JSON (default 8x8)");

  SimArgs sa;
  auto* simc = app.add_subcommand("sim", "Simulate a mapped loop");
  simc->add_option("file", sa.file, "Loop graph")->required();
  simc->add_option("--mode", sa.mode, "baseline or dr")->check(CLI::IsMember({"baseline", "dr"}));
  simc->add_option("--threads", sa.threads, "Threads in the group")->check(CLI::PositiveNumber);
  simc->add_option("--grid", sa.grid, "Grid spec JSON");
  simc->add_option("--mem-latency", sa.mem_latency, "Load latency in cycles")->check(CLI::PositiveNumber);
  simc->add_option("--spill", sa.spill, "Spill latency in cycles")->check(CLI::NonNegativeNumber);
  simc->add_option("--mem-outstanding", sa.mem_outstanding, "Cap on in-flight loads (0 = unbounded)")
      ->check(CLI::NonNegativeNumber);
  simc->add_option("--trace", sa.trace, "Write a cycle trace to this file");

  std::string exp_path;
  auto* sweep = app.add_subcommand("sweep", "Baseline vs DR speedup over thread counts");
  sweep->add_option("--exp", exp_path, "Experiment JSON")->required();
  sweep->add_option("--out", out, "CSV output (default stdout)");

  std::string dir;
  std::vector<int> suite_threads;
  auto* suite = app.add_subcommand("suite", "Weighted speedups over a directory of fixtures");
  suite->add_option("--dir", dir, "Fixture directory")->required();
  suite->add_option("--out", out, "CSV output (default stdout)");
  suite->add_option("--threads", suite_threads, "Thread counts (default 8,32,128,512)")->delimiter(',');

  std::string trace_in;
  double min_frac = 0.01;
  std::vector<double> ps = {0.90, 0.95};
  int max_len = trace::kDefaultMaxLen, max_routes = trace::kDefaultMaxRoutes;
  auto* tracec = app.add_subcommand("trace", "Loop-route statistics from a basic-block trace");
  tracec->add_option("--in", trace_in, "Trace file")->required();
  tracec->add_option("--min-routine-frac", min_frac, "Routine run-time filter")->check(CLI::Range(0.0, 1.0));
  tracec->add_option("--coverage", ps, "Coverage fractions")->delimiter(',');
  tracec->add_option("--out", out, "JSON output (default stdout)");
  tracec->add_option("--max-len", max_len, "Longest route in blocks")->check(CLI::PositiveNumber);
  tracec->add_option("--max-routes", max_routes, "Route cap per routine")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_status(ErrorCode::InvalidArgument);
  }

  try {
    if (*analyze) return run_analyze(file);
    if (*map) return run_map(file, grid_path);
    if (*simc) return run_sim(sa);
    if (*sweep) return run_sweep(exp_path, out);
    if (*suite) return run_suite(dir, out, suite_threads);
    if (*tracec) return run_trace(trace_in, min_frac, ps, out, max_len, max_routes);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_status(e.code());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
