#include "drcgra/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <map>
#include <sstream>

#include "drcgra/error.hpp"
#include "drcgra/grid.hpp"
#include "json.hpp"

namespace drcgra::bench {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void check_threads(const std::vector<int>& threads) {
  if (threads.empty()) throw Error(ErrorCode::InvalidArgument, "thread list is empty");
  for (std::size_t i = 0; i < threads.size(); ++i) {
    if (threads[i] < 1) throw Error(ErrorCode::InvalidArgument, "thread counts must be >= 1");
    if (i > 0 && threads[i] <= threads[i - 1]) {
      throw Error(ErrorCode::InvalidArgument, "thread counts must be strictly increasing");
    }
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

SweepPoint run_point(const ir::DataflowGraph& g, const grid::GridConfig& cfg, const Experiment& exp, int threads) {
  SweepPoint p;
  p.threads = threads;
  const auto start = std::chrono::steady_clock::now();
  for (int rep = 0; rep < exp.repetitions; ++rep) {
    std::int64_t cycles[2] = {0, 0};
    for (sim::Mode mode : {sim::Mode::Baseline, sim::Mode::Dr}) {
      try {
        cycles[mode == sim::Mode::Dr] = sim::simulate(cfg, g, machine_params(exp, mode, threads)).total_cycles;
      } catch (const Error& e) {
        throw Error(e.code(), e.detail() + " (T=" + std::to_string(threads) +
                                  ", mode=" + std::string(sim::to_string(mode)) + ")");
      }
    }
    p.cycles_baseline = cycles[0];
    p.cycles_dr = cycles[1];
  }
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
  p.wall_seconds = elapsed.count() / exp.repetitions;
  p.speedup = static_cast<double>(p.cycles_baseline) / static_cast<double>(p.cycles_dr);
  return p;
}

}  // namespace

void check(const Experiment& exp) {
  check_threads(exp.threads);
  if (exp.repetitions < 1) throw Error(ErrorCode::InvalidArgument, "repetitions must be >= 1");
  if (!fs::exists(exp.dfg)) throw Error(ErrorCode::Io, "dfg file not found: " + exp.dfg.string());
  if (exp.grid && !fs::exists(*exp.grid)) throw Error(ErrorCode::Io, "grid file not found: " + exp.grid->string());
}

Experiment parse_experiment(std::string_view json_text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::Syntax, std::string("experiment: ") + e.what());
  }
  Experiment exp;
  try {
    exp.dfg = base_dir / j.at("dfg").get<std::string>();
    if (j.contains("grid") && !j["grid"].is_null()) exp.grid = base_dir / j["grid"].get<std::string>();
    if (j.contains("threads")) exp.threads = j["threads"].get<std::vector<int>>();
    if (j.contains("params")) {
      const json& p = j["params"];
      exp.mem_latency = p.value("mem_latency", exp.mem_latency);
      exp.spill_latency = p.value("spill_latency", exp.spill_latency);
      if (p.contains("mem_max_outstanding") && !p["mem_max_outstanding"].is_null()) {
        exp.mem_max_outstanding = p["mem_max_outstanding"].get<int>();
      }
    }
    exp.repetitions = j.value("repetitions", 1);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Syntax, std::string("experiment: ") + e.what());
  }
  check(exp);
  return exp;
}

Experiment load_experiment(const fs::path& path) {
  return parse_experiment(read_file(path), path.parent_path());
}

sim::MachineParams machine_params(const Experiment& exp, sim::Mode mode, int threads) {
  sim::MachineParams p;
  p.mode = mode;
  p.n_threads = threads;
  p.mem_latency = exp.mem_latency;
  p.spill_latency = exp.spill_latency;
  p.mem_max_outstanding = exp.mem_max_outstanding;
  return p;
}

SpeedupCurve sweep(const ir::DataflowGraph& g, const grid::GridSpec& spec, const Experiment& exp, bool parallel) {
  check_threads(exp.threads);
  const grid::GridConfig cfg = grid::map_graph(g, spec);
  if (!parallel) {
    SpeedupCurve curve;
    for (int t : exp.threads) curve.push_back(run_point(g, cfg, exp, t));
    return curve;
  }
  std::vector<std::future<SweepPoint>> jobs;
  for (int t : exp.threads) {
    jobs.push_back(std::async(std::launch::async, [&, t] { return run_point(g, cfg, exp, t); }));
  }
  SpeedupCurve curve;
  for (auto& j : jobs) curve.push_back(j.get());
  return curve;
}

SpeedupCurve sweep(const Experiment& exp, bool parallel) {
  check(exp);
  const auto g = ir::load_dfg(exp.dfg);
  const auto spec = exp.grid ? grid::load_grid(*exp.grid) : grid::default_grid();
  return sweep(g, spec, exp, parallel);
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  std::string s = buf;
  if (s.find('.') != std::string::npos) {
    while (s.back() == '0') s.pop_back();
    if (s.back() == '.') s.pop_back();
  }
  return s;
}

std::string to_csv(const SpeedupCurve& curve) {
  std::ostringstream os;
  os << "threads,cycles_baseline,cycles_dr,speedup\n";
  for (const auto& p : curve) {
    os << p.threads << ',' << p.cycles_baseline << ',' << p.cycles_dr << ',' << format_number(p.speedup) << '\n';
  }
  return os.str();
}

double combine_speedups(const std::vector<double>& speedups, const std::vector<double>& weights) {
  if (speedups.size() != weights.size() || speedups.empty()) {
    throw Error(ErrorCode::InvalidArgument, "speedups and weights must be non-empty and of equal length");
  }
  double w_sum = 0.0, time = 0.0;
  for (std::size_t i = 0; i < speedups.size(); ++i) {
    if (speedups[i] <= 0.0) throw Error(ErrorCode::InvalidArgument, "speedups must be positive");
    if (weights[i] < 0.0) throw Error(ErrorCode::InvalidArgument, "weights must be non-negative");
    w_sum += weights[i];
    time += weights[i] / speedups[i];
  }
  if (w_sum <= 0.0) throw Error(ErrorCode::InvalidArgument, "weights sum to zero");
  return w_sum / time;
}

SuiteReport suite(const fs::path& dir, const SuiteOptions& opts) {
  check_threads(opts.threads);
  if (!fs::is_directory(dir)) throw Error(ErrorCode::Io, "not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".dfg") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error(ErrorCode::InvalidArgument, "no .dfg fixtures in " + dir.string());

  SuiteReport report;
  report.threads = opts.threads;

  std::map<std::string, double> weights;
  const fs::path weight_file = dir / "weights.csv";
  const bool have_weights = fs::exists(weight_file);
  if (have_weights) {
    std::istringstream in(read_file(weight_file));
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::string t = trim(line);
      if (t.empty() || t[0] == '#' || t == "fixture,weight") continue;
      const auto comma = t.find(',');
      double w = 0.0;
      try {
        if (comma == std::string::npos) throw std::invalid_argument("missing comma");
        std::size_t used = 0;
        const std::string num = trim(t.substr(comma + 1));
        w = std::stod(num, &used);
        if (used != num.size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw ParseError(ErrorCode::Syntax, line_no, 1, "weights.csv: expected 'fixture,weight'");
      }
      if (!(w >= 0.0)) throw ParseError(ErrorCode::Syntax, line_no, 1, "weights.csv: negative weight");
      std::string name = trim(t.substr(0, comma));
      if (fs::path(name).extension() == ".dfg") name = fs::path(name).stem().string();
      weights[name] = w;
    }
  } else {
    report.warnings.push_back("no weights.csv in " + dir.string() + "; using uniform weights");
  }

  Experiment exp;
  exp.threads = opts.threads;
  exp.mem_latency = opts.mem_latency;
  exp.spill_latency = opts.spill_latency;
  exp.mem_max_outstanding = opts.mem_max_outstanding;
  const auto spec = opts.grid ? grid::load_grid(*opts.grid) : grid::default_grid();

  for (const auto& f : files) {
    SuiteEntry e;
    e.name = f.stem().string();
    if (have_weights) {
      auto it = weights.find(e.name);
      if (it == weights.end()) throw Error(ErrorCode::InvalidArgument, "weights.csv has no entry for " + e.name);
      e.weight = it->second;
    }
    try {
      e.curve = sweep(ir::load_dfg(f), spec, exp);
    } catch (const Error& err) {
      throw Error(err.code(), e.name + ": " + err.detail());
    }
    report.entries.push_back(std::move(e));
  }
  for (std::size_t i = 0; i < opts.threads.size(); ++i) {
    std::vector<double> s, w;
    for (const auto& e : report.entries) {
      s.push_back(e.curve[i].speedup);
      w.push_back(e.weight);
    }
    report.combined.push_back(combine_speedups(s, w));
  }
  return report;
}

std::string to_csv(const SuiteReport& report) {
  std::ostringstream os;
  os << "# combined speedup = sum(w) / sum(w / speedup) (time-weighted harmonic mean)\n";
  os << "fixture,weight,threads,cycles_baseline,cycles_dr,speedup\n";
  for (const auto& e : report.entries) {
    for (const auto& p : e.curve) {
      os << e.name << ',' << format_number(e.weight) << ',' << p.threads << ',' << p.cycles_baseline << ','
         << p.cycles_dr << ',' << format_number(p.speedup) << '\n';
    }
  }
  double w_sum = 0.0;
  for (const auto& e : report.entries) w_sum += e.weight;
  for (std::size_t i = 0; i < report.threads.size(); ++i) {
    os << "combined," << format_number(w_sum) << ',' << report.threads[i] << ",,," << format_number(report.combined[i])
       << '\n';
  }
  return os.str();
}

}  // namespace drcgra::bench
