#include "drcgra/trace.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "drcgra/error.hpp"
#include "json.hpp"

namespace drcgra::trace {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    out.push_back(trim(s.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

[[noreturn]] void malformed(int line, const std::string& msg) {
  throw ParseError(ErrorCode::MalformedTrace, line, 1, msg);
}

std::int64_t parse_count(std::string_view s, int line, const char* what) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    malformed(line, std::string(what) + " is not an integer: '" + std::string(s) + "'");
  }
  if (v < 1) malformed(line, std::string(what) + " must be >= 1");
  return v;
}

std::string_view name_field(std::string_view s, int line, const char* what) {
  if (s.empty()) malformed(line, std::string("empty ") + what);
  if (s.find_first_of(" \t") != std::string_view::npos) malformed(line, std::string(what) + " contains whitespace");
  return s;
}

// Instruction counts must agree wherever a block declares one.
void set_instructions(BasicBlock& b, std::optional<std::int64_t>& declared, std::int64_t v, int line,
                      const std::string& id) {
  if (declared && *declared != v) {
    malformed(line, "block " + id + " declared with " + std::to_string(*declared) + " and " + std::to_string(v) +
                        " instructions");
  }
  declared = v;
  b.instructions = v;
}

void check_successors(TraceData& data) {
  for (const auto& [name, g] : data.routines) {
    std::map<BlockId, int> out;
    for (const auto& [edge, count] : g.edges) ++out[edge.first];
    for (const auto& [bb, n] : out) {
      if (n > 2) {
        data.warnings.push_back("routine " + name + ": block " + bb + " has " + std::to_string(n) +
                                " successors (expected at most 2)");
      }
    }
  }
}

}  // namespace

std::int64_t RoutineGraph::instructions() const {
  std::int64_t total = 0;
  for (const auto& [id, b] : blocks) total += b.executions * b.instructions;
  return total;
}

TraceData ingest(std::istream& in) {
  TraceData data;
  std::string raw;
  int line = 0;
  std::optional<bool> aggregated;
  std::map<std::pair<std::string, BlockId>, std::optional<std::int64_t>> declared;
  std::map<std::string, BlockId> last_block;  // streaming: previous block per routine
  std::set<std::pair<std::string, BlockId>> explicit_exec;

  auto block = [&](const std::string& routine, const BlockId& id) -> BasicBlock& {
    auto& g = data.routines[routine];
    g.name = routine;
    return g.blocks[id];
  };

  while (std::getline(in, raw)) {
    ++line;
    const std::string_view text = trim(raw);
    if (text.empty()) continue;
    if (text == "#aggregated") {
      if (aggregated) {
        throw ParseError(ErrorCode::MixedTraceFormats, line, 1, "'#aggregated' header after trace content");
      }
      aggregated = true;
      continue;
    }
    if (text.rfind("#bb", 0) == 0) {
      if (!aggregated.value_or(false)) {
        throw ParseError(ErrorCode::MixedTraceFormats, line, 1, "'#bb' declaration in a streaming trace");
      }
      const auto f = split(text.substr(3));
      if (f.size() != 3 && f.size() != 4) malformed(line, "expected '#bb <routine>,<bb>,<instr>[,<exec>]'");
      const std::string routine(name_field(f[0], line, "routine"));
      const BlockId id(name_field(f[1], line, "block id"));
      auto key = std::make_pair(routine, id);
      if (declared.count(key) && declared[key]) malformed(line, "block " + id + " declared twice");
      BasicBlock& b = block(routine, id);
      set_instructions(b, declared[key], parse_count(f[2], line, "instruction count"), line, id);
      if (f.size() == 4) {
        b.executions = parse_count(f[3], line, "execution count");
        explicit_exec.insert(key);
      }
      continue;
    }
    if (text[0] == '#') continue;

    const auto f = split(text);
    if (!aggregated) aggregated = false;
    if (*aggregated) {
      if (f.size() != 4) {
        if (f.size() == 2 || f.size() == 3) {
          throw ParseError(ErrorCode::MixedTraceFormats, line, 1, "streaming event in an aggregated trace");
        }
        malformed(line, "expected '<routine>,<src>,<dst>,<count>'");
      }
      const std::string routine(name_field(f[0], line, "routine"));
      const BlockId src(name_field(f[1], line, "block id"));
      const BlockId dst(name_field(f[2], line, "block id"));
      const std::int64_t count = parse_count(f[3], line, "edge count");
      block(routine, src);
      block(routine, dst);
      auto& edges = data.routines[routine].edges;
      if (!edges.emplace(std::make_pair(src, dst), count).second) {
        malformed(line, "duplicate edge " + src + "->" + dst + " in routine " + routine);
      }
    } else {
      if (f.size() == 4) {
        throw ParseError(ErrorCode::MixedTraceFormats, line, 1, "aggregated edge in a streaming trace");
      }
      if (f.size() != 2 && f.size() != 3) malformed(line, "expected '<routine>,<bb>[,<instr>]'");
      const std::string routine(name_field(f[0], line, "routine"));
      const BlockId id(name_field(f[1], line, "block id"));
      BasicBlock& b = block(routine, id);
      if (f.size() == 3) {
        set_instructions(b, declared[{routine, id}], parse_count(f[2], line, "instruction count"), line, id);
      }
      ++b.executions;
      auto prev = last_block.find(routine);
      if (prev != last_block.end()) ++data.routines[routine].edges[{prev->second, id}];
      last_block[routine] = id;
    }
  }

  if (aggregated.value_or(false)) {
    for (auto& [name, g] : data.routines) {
      std::map<BlockId, std::int64_t> in_count, out_count;
      for (const auto& [edge, count] : g.edges) {
        out_count[edge.first] += count;
        in_count[edge.second] += count;
      }
      for (auto& [id, b] : g.blocks) {
        if (explicit_exec.count({name, id})) continue;
        b.executions = std::max<std::int64_t>({in_count[id], out_count[id], 1});
      }
    }
  }
  check_successors(data);
  return data;
}

TraceData ingest_text(const std::string& text) {
  std::istringstream in(text);
  return ingest(in);
}

TraceData load_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  return ingest(in);
}

LoopEnumeration enumerate_loops(const RoutineGraph& g, int max_len, int max_routes) {
  LoopEnumeration result;
  std::vector<BlockId> ids;
  for (const auto& [id, b] : g.blocks) ids.push_back(id);
  std::map<BlockId, int> index;
  for (std::size_t i = 0; i < ids.size(); ++i) index[ids[i]] = static_cast<int>(i);

  struct Arc {
    int to;
    std::int64_t count;
  };
  std::vector<std::vector<Arc>> succ(ids.size());
  for (const auto& [edge, count] : g.edges) {
    succ[static_cast<std::size_t>(index.at(edge.first))].push_back({index.at(edge.second), count});
  }

  // Each cycle is found once, from its smallest block, visiting only larger
  // blocks on the way.
  std::vector<int> path;
  std::vector<std::int64_t> counts;
  std::vector<bool> on_path(ids.size(), false);
  bool stop = false;
  auto record = [&](std::int64_t closing) {
    if (static_cast<int>(result.routes.size()) >= max_routes) {
      result.truncated = true;
      stop = true;
      return;
    }
    LoopRoute r;
    r.iterations = closing;
    for (std::int64_t c : counts) r.iterations = std::min(r.iterations, c);
    for (int n : path) {
      r.blocks.push_back(ids[static_cast<std::size_t>(n)]);
      r.instructions_per_iteration += g.blocks.at(ids[static_cast<std::size_t>(n)]).instructions;
    }
    result.routes.push_back(std::move(r));
  };
  auto dfs = [&](auto&& self, int start, int node) -> void {
    for (const Arc& a : succ[static_cast<std::size_t>(node)]) {
      if (stop) return;
      if (a.to == start) {
        record(a.count);
      } else if (a.to > start && !on_path[static_cast<std::size_t>(a.to)] &&
                 static_cast<int>(path.size()) < max_len) {
        on_path[static_cast<std::size_t>(a.to)] = true;
        path.push_back(a.to);
        counts.push_back(a.count);
        self(self, start, a.to);
        path.pop_back();
        counts.pop_back();
        on_path[static_cast<std::size_t>(a.to)] = false;
      }
    }
  };
  if (max_len >= 1 && max_routes >= 0) {
    for (int s = 0; s < static_cast<int>(ids.size()) && !stop; ++s) {
      path = {s};
      counts.clear();
      on_path[static_cast<std::size_t>(s)] = true;
      dfs(dfs, s, s);
      on_path[static_cast<std::size_t>(s)] = false;
    }
  }
  std::sort(result.routes.begin(), result.routes.end(), [](const LoopRoute& a, const LoopRoute& b) {
    if (a.iterations != b.iterations) return a.iterations > b.iterations;
    return a.blocks < b.blocks;
  });
  return result;
}

PrevalenceReport prevalence_report(const TraceData& data, double min_routine_frac, int max_len, int max_routes) {
  PrevalenceReport r;
  r.min_routine_frac = min_routine_frac;
  r.warnings = data.warnings;
  for (const auto& [name, g] : data.routines) r.total_instructions += g.instructions();

  std::int64_t included_instr = 0, included_loop = 0;
  for (const auto& [name, g] : data.routines) {
    RoutineStats s;
    s.name = name;
    s.instructions = g.instructions();
    s.run_fraction = r.total_instructions > 0
                         ? static_cast<double>(s.instructions) / static_cast<double>(r.total_instructions)
                         : 0.0;
    s.included = s.run_fraction > min_routine_frac;
    auto loops = enumerate_loops(g, max_len, max_routes);
    s.routes = std::move(loops.routes);
    s.truncated = loops.truncated;
    if (s.truncated) r.warnings.push_back("routine " + name + ": loop enumeration truncated");
    for (const auto& route : s.routes) s.loop_instructions += route.iterations * route.instructions_per_iteration;
    if (s.loop_instructions > s.instructions) {
      // Bottleneck counts over-attribute when routes share blocks.
      s.scaled = true;
      s.loop_instructions = s.instructions;
      r.warnings.push_back("routine " + name + ": route time exceeds routine time; scaled to 100%");
    }
    s.loop_fraction =
        s.instructions > 0 ? static_cast<double>(s.loop_instructions) / static_cast<double>(s.instructions) : 0.0;
    if (s.included) {
      included_instr += s.instructions;
      included_loop += s.loop_instructions;
    } else {
      r.filtered.push_back(name);
    }
    r.routines.push_back(std::move(s));
  }
  r.loop_fraction =
      included_instr > 0 ? static_cast<double>(included_loop) / static_cast<double>(included_instr) : 0.0;
  return r;
}

Coverage coverage(std::vector<std::int64_t> iterations, double p) {
  if (!(p > 0.0 && p <= 1.0)) throw Error(ErrorCode::InvalidArgument, "coverage fraction must be in (0, 1]");
  Coverage c;
  c.p = p;
  c.total_routes = iterations.size();
  if (iterations.empty()) {
    c.warning = "no loop routes; coverage is 0";
    return c;
  }
  std::sort(iterations.begin(), iterations.end(), std::greater<>());
  long double total = 0;
  for (auto v : iterations) total += v;
  const long double target = static_cast<long double>(p) * total * (1 - 1e-12L);
  long double sum = 0;
  for (auto v : iterations) {
    sum += v;
    ++c.k;
    if (sum >= target) break;
  }
  c.fraction = static_cast<double>(c.k) / static_cast<double>(c.total_routes);
  return c;
}

Coverage coverage(const PrevalenceReport& report, double p) {
  std::vector<std::int64_t> counts;
  for (const auto& s : report.routines) {
    if (!s.included) continue;
    for (const auto& route : s.routes) counts.push_back(route.iterations);
  }
  return coverage(std::move(counts), p);
}

std::string percent(double fraction, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f%%", decimals, fraction * 100.0);
  return buf;
}

std::string to_json(const PrevalenceReport& report, const std::vector<Coverage>& coverages) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["route_iterations"] = "bottleneck (minimum) edge traversal count along the cycle";
  j["run_time_proxy"] = "dynamic instruction count";
  j["min_routine_frac"] = report.min_routine_frac;
  j["total_instructions"] = report.total_instructions;
  j["loop_fraction"] = report.loop_fraction;
  j["loop_fraction_pct"] = percent(report.loop_fraction, 1);
  ordered_json routines = ordered_json::array();
  for (const auto& s : report.routines) {
    ordered_json r;
    r["name"] = s.name;
    r["instructions"] = s.instructions;
    r["run_fraction"] = s.run_fraction;
    r["included"] = s.included;
    r["loop_instructions"] = s.loop_instructions;
    r["loop_fraction"] = s.loop_fraction;
    r["loop_fraction_pct"] = percent(s.loop_fraction, 1);
    r["scaled"] = s.scaled;
    r["truncated"] = s.truncated;
    ordered_json routes = ordered_json::array();
    for (const auto& route : s.routes) {
      ordered_json o;
      o["blocks"] = route.blocks;
      o["size"] = route.blocks.size();
      o["iterations"] = route.iterations;
      o["instructions_per_iteration"] = route.instructions_per_iteration;
      routes.push_back(std::move(o));
    }
    r["routes"] = std::move(routes);
    routines.push_back(std::move(r));
  }
  j["routines"] = std::move(routines);
  j["filtered"] = report.filtered;
  ordered_json cov = ordered_json::array();
  for (const auto& c : coverages) {
    ordered_json o;
    o["p"] = c.p;
    o["k"] = c.k;
    o["total_routes"] = c.total_routes;
    o["fraction"] = c.fraction;
    o["fraction_pct"] = percent(c.fraction, 2);
    if (c.warning) o["warning"] = *c.warning;
    cov.push_back(std::move(o));
  }
  j["coverage"] = std::move(cov);
  j["warnings"] = report.warnings;
  return j.dump(2) + "\n";
}

}  // namespace drcgra::trace
