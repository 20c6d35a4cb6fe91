#include "drcgra/grid.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "drcgra/error.hpp"
#include "json.hpp"

namespace drcgra::grid {

using nlohmann::json;

int manhattan(Cell a, Cell b) { return std::abs(a.row - b.row) + std::abs(a.col - b.col); }

std::string to_string(Cell c) { return "r" + std::to_string(c.row) + "c" + std::to_string(c.col); }

GridSpec default_grid() {
  GridSpec spec;
  spec.unit_map.reserve(64);
  for (int r = 0; r < spec.rows; ++r) {
    for (int c = 0; c < spec.cols; ++c) {
      UnitClass u = UnitClass::Compute;
      if (c <= 1) {
        u = UnitClass::LdSt;
      } else if (c == 2) {
        u = (r % 2 == 0) ? UnitClass::Control : UnitClass::Sju;
      }
      spec.unit_map.push_back(u);
    }
  }
  return spec;
}

void check(const GridSpec& spec) {
  auto bad = [](const std::string& m) { throw Error(ErrorCode::InvalidArgument, "grid spec: " + m); };
  if (spec.rows < 1 || spec.cols < 1) bad("rows and cols must be >= 1");
  if (spec.unit_map.size() != static_cast<std::size_t>(spec.rows) * static_cast<std::size_t>(spec.cols)) {
    bad("unit_map must have rows*cols entries");
  }
  const auto& l = spec.latencies;
  if (std::min({l.alu, l.fpu, l.load, l.store, l.control, l.sju}) < 1) bad("latencies must be >= 1");
  if (spec.hop_latency < 0) bad("hop_latency must be >= 0");
  if (spec.token_buffer_depth < 1) bad("token_buffer_depth must be >= 1");
}

namespace {

char unit_char(UnitClass u) {
  switch (u) {
    case UnitClass::Compute: return 'C';
    case UnitClass::LdSt: return 'L';
    case UnitClass::Control: return 'K';
    case UnitClass::Sju: return 'S';
  }
  return '?';
}

}  // namespace

GridSpec parse_grid_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& ex) {
    throw Error(ErrorCode::Syntax, std::string("grid spec: ") + ex.what());
  }
  GridSpec spec = default_grid();
  try {
    const bool resized = doc.contains("rows") || doc.contains("cols");
    spec.rows = doc.value("rows", spec.rows);
    spec.cols = doc.value("cols", spec.cols);
    if (doc.contains("unit_map")) {
      spec.unit_map.clear();
      for (const auto& row : doc.at("unit_map")) {
        for (char ch : row.get<std::string>()) {
          switch (ch) {
            case 'C': spec.unit_map.push_back(UnitClass::Compute); break;
            case 'L': spec.unit_map.push_back(UnitClass::LdSt); break;
            case 'K': spec.unit_map.push_back(UnitClass::Control); break;
            case 'S': spec.unit_map.push_back(UnitClass::Sju); break;
            default:
              throw Error(ErrorCode::Syntax, std::string("grid spec: unknown unit class '") + ch + "'");
          }
        }
      }
    } else if (resized) {
      spec.unit_map.assign(static_cast<std::size_t>(spec.rows * spec.cols), UnitClass::Compute);
    }
    if (doc.contains("latencies")) {
      const auto& jl = doc.at("latencies");
      auto& l = spec.latencies;
      l.alu = jl.value("alu", l.alu);
      l.fpu = jl.value("fpu", l.fpu);
      l.load = jl.value("load", l.load);
      l.store = jl.value("store", l.store);
      l.control = jl.value("control", l.control);
      l.sju = jl.value("sju", l.sju);
    }
    spec.hop_latency = doc.value("hop_latency", spec.hop_latency);
    spec.token_buffer_depth = doc.value("token_buffer_depth", spec.token_buffer_depth);
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::Syntax, std::string("grid spec: ") + ex.what());
  }
  check(spec);
  return spec;
}

GridSpec load_grid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_grid_json(ss.str());
}

std::string to_json(const GridSpec& spec) {
  json doc;
  doc["rows"] = spec.rows;
  doc["cols"] = spec.cols;
  doc["unit_map"] = json::array();
  for (int r = 0; r < spec.rows; ++r) {
    std::string row;
    for (int c = 0; c < spec.cols; ++c) row += unit_char(spec.unit_at({r, c}));
    doc["unit_map"].push_back(row);
  }
  const auto& l = spec.latencies;
  doc["latencies"] = {{"alu", l.alu}, {"fpu", l.fpu}, {"load", l.load},
                      {"store", l.store}, {"control", l.control}, {"sju", l.sju}};
  doc["hop_latency"] = spec.hop_latency;
  doc["token_buffer_depth"] = spec.token_buffer_depth;
  return doc.dump(2) + "\n";
}

Route xy_route(Cell from, Cell to, int hop_latency) {
  Route r;
  Cell at = from;
  r.path.push_back(at);
  while (at.row != to.row) {
    at.row += (to.row > at.row) ? 1 : -1;
    r.path.push_back(at);
  }
  while (at.col != to.col) {
    at.col += (to.col > at.col) ? 1 : -1;
    r.path.push_back(at);
  }
  r.latency = manhattan(from, to) * hop_latency;
  return r;
}

namespace {

class CellPool {
 public:
  explicit CellPool(const GridSpec& spec) : spec_(spec), used_(spec.unit_map.size(), false) {}

  std::size_t free_count(UnitClass u) const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < used_.size(); ++i) {
      if (!used_[i] && spec_.unit_map[i] == u) ++n;
    }
    return n;
  }

  /// Free cell of class u minimizing summed distance to `anchors`; row-major
  /// scan makes the lowest (row, col) win ties.
  std::optional<Cell> best(UnitClass u, std::span<const Cell> anchors) const {
    std::optional<Cell> pick;
    long best_cost = std::numeric_limits<long>::max();
    for (int r = 0; r < spec_.rows; ++r) {
      for (int c = 0; c < spec_.cols; ++c) {
        const auto i = static_cast<std::size_t>(r * spec_.cols + c);
        if (used_[i] || spec_.unit_map[i] != u) continue;
        long cost = 0;
        for (Cell a : anchors) cost += manhattan({r, c}, a);
        if (cost < best_cost) {
          best_cost = cost;
          pick = Cell{r, c};
        }
      }
    }
    return pick;
  }

  void take(Cell c) { used_[static_cast<std::size_t>(c.row * spec_.cols + c.col)] = true; }

 private:
  const GridSpec& spec_;
  std::vector<bool> used_;
};

std::optional<Cell> nearest_ldst(const GridSpec& spec, Cell from) {
  std::optional<Cell> pick;
  int best = std::numeric_limits<int>::max();
  for (int r = 0; r < spec.rows; ++r) {
    for (int c = 0; c < spec.cols; ++c) {
      if (spec.unit_at({r, c}) != UnitClass::LdSt) continue;
      const int d = manhattan(from, {r, c});
      if (d < best) {
        best = d;
        pick = Cell{r, c};
      }
    }
  }
  return pick;
}

Route spill_route(const GridSpec& spec, Cell producer, Cell consumer) {
  const auto port = nearest_ldst(spec, producer);
  if (!port) return xy_route(producer, consumer, spec.hop_latency);
  Route out = xy_route(producer, *port, spec.hop_latency);
  const Route back = xy_route(*port, consumer, spec.hop_latency);
  out.path.insert(out.path.end(), back.path.begin() + 1, back.path.end());
  out.latency += back.latency;
  return out;
}

}  // namespace

Placement place(const ir::DataflowGraph& g, const GridSpec& spec) {
  check(spec);
  CellPool pool(spec);
  std::map<UnitClass, std::size_t> demand;
  for (const auto& n : g.nodes) ++demand[ir::unit_class(n.op)];
  for (const auto& [u, need] : demand) {
    if (pool.free_count(u) < need) {
      throw Error(ErrorCode::CapacityExceeded,
                  std::string(ir::unit_class_name(u)) + ": graph needs " + std::to_string(need) +
                      " cells, grid has " + std::to_string(pool.free_count(u)));
    }
  }

  std::vector<std::vector<NodeId>> preds(g.size());
  std::vector<int> indeg(g.size(), 0);
  for (const auto& e : g.edges) {
    if (e.is_back()) continue;
    preds[static_cast<std::size_t>(e.dst)].push_back(e.src);
    ++indeg[static_cast<std::size_t>(e.dst)];
  }
  const auto succ = ir::intra_successors(g);

  // BFS discovery order from the sources (in id order).
  std::vector<NodeId> order;
  std::vector<bool> seen(g.size(), false);
  std::deque<NodeId> queue;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (indeg[i] == 0) {
      queue.push_back(static_cast<NodeId>(i));
      seen[i] = true;
    }
  }
  while (!queue.empty()) {
    const NodeId n = queue.front();
    queue.pop_front();
    order.push_back(n);
    for (std::size_t e : succ[static_cast<std::size_t>(n)]) {
      const auto d = static_cast<std::size_t>(g.edges[e].dst);
      if (!seen[d]) {
        seen[d] = true;
        queue.push_back(g.edges[e].dst);
      }
    }
  }

  Placement placement(g.size());
  std::vector<bool> placed(g.size(), false);
  for (NodeId n : order) {
    std::vector<Cell> anchors;
    for (NodeId p : preds[static_cast<std::size_t>(n)]) {
      if (placed[static_cast<std::size_t>(p)]) anchors.push_back(placement[static_cast<std::size_t>(p)]);
    }
    const auto cell = pool.best(ir::unit_class(g.node(n).op), anchors);
    placement[static_cast<std::size_t>(n)] = *cell;  // capacity checked above
    pool.take(*cell);
    placed[static_cast<std::size_t>(n)] = true;
  }
  return placement;
}

std::vector<Route> route(const Placement& placement, const ir::DataflowGraph& g, const GridSpec& spec) {
  std::vector<Route> routes;
  routes.reserve(g.edges.size());
  for (const auto& e : g.edges) {
    const Cell src = placement.at(static_cast<std::size_t>(e.src));
    const Cell dst = placement.at(static_cast<std::size_t>(e.dst));
    routes.push_back(e.is_back() ? spill_route(spec, src, dst) : xy_route(src, dst, spec.hop_latency));
  }
  return routes;
}

IldrAttachment attach_ildr(const ir::DataflowGraph& g, std::span<const deps::LoopCarriedDep> dep_list,
                           const Placement& placement, const GridSpec& spec) {
  std::map<NodeId, int> dependent_inputs;
  for (const auto& d : dep_list) {
    if (++dependent_inputs[d.consumer] > 1) {
      throw Error(ErrorCode::UnsupportedDualDependency,
                  "node " + std::to_string(d.consumer) + " has two loop-carried inputs");
    }
  }

  CellPool pool(spec);
  for (const Cell c : placement) pool.take(c);

  IldrAttachment out;
  for (const auto& d : dep_list) {
    const auto cls = deps::classify(g, d, dep_list);
    if (cls.pattern == deps::Pattern::Consecutive) {
      out.baseline_edges.push_back(d.back_edge);
      continue;
    }
    IldrEdge edge;
    edge.back_edge = d.back_edge;
    edge.producer = d.producer;
    edge.consumer = d.consumer;
    edge.slot = d.consumer_slot;
    edge.diff = d.diff;
    edge.selector_init = d.diff;
    if (d.producer == d.consumer) {
      edge.realization = Realization::SelfFeedback;
    } else {
      const Cell pc = placement.at(static_cast<std::size_t>(d.producer));
      const Cell cc = placement.at(static_cast<std::size_t>(d.consumer));
      const Cell anchors[] = {pc};
      const auto cell = pool.best(UnitClass::Compute, anchors);
      if (!cell) {
        throw Error(ErrorCode::CapacityExceeded,
                    "COMPUTE: no free cell for the end-of-route update of node " + std::to_string(d.producer));
      }
      pool.take(*cell);
      EorUpdate eor;
      eor.producer = d.producer;
      eor.consumer = d.consumer;
      eor.cell = *cell;
      eor.in_route = xy_route(pc, *cell, spec.hop_latency);
      eor.out_route = xy_route(*cell, cc, spec.hop_latency);
      edge.realization = Realization::EndOfRoute;
      edge.eor = out.eor_updates.size();
      out.eor_updates.push_back(std::move(eor));
    }
    out.ildr_edges.push_back(edge);
  }
  return out;
}

GridConfig map_graph(const ir::DataflowGraph& g, const GridSpec& spec) {
  GridConfig cfg;
  cfg.spec = spec;
  cfg.placement = place(g, spec);
  cfg.routes = route(cfg.placement, g, spec);
  const auto dep_list = deps::find_deps(g, spec.latencies);
  auto att = attach_ildr(g, dep_list, cfg.placement, spec);
  cfg.ildr_edges = std::move(att.ildr_edges);
  cfg.eor_updates = std::move(att.eor_updates);
  cfg.baseline_edges = std::move(att.baseline_edges);
  return cfg;
}

std::string to_json(const GridConfig& cfg, const ir::DataflowGraph& g) {
  auto cell_json = [](Cell c) { return json::array({c.row, c.col}); };
  auto route_json = [&](const Route& r) {
    json cells = json::array();
    for (Cell c : r.path) cells.push_back(cell_json(c));
    return cells;
  };
  json doc;
  doc["grid"] = {{"rows", cfg.spec.rows}, {"cols", cfg.spec.cols},
                 {"hop_latency", cfg.spec.hop_latency},
                 {"token_buffer_depth", cfg.spec.token_buffer_depth}};
  doc["placement"] = json::array();
  for (std::size_t i = 0; i < cfg.placement.size(); ++i) {
    const auto& n = g.nodes[i];
    doc["placement"].push_back({{"node", n.id},
                                {"kind", ir::op_name(n.op)},
                                {"unit", ir::unit_class_name(ir::unit_class(n.op))},
                                {"cell", cell_json(cfg.placement[i])}});
  }
  doc["routes"] = json::array();
  for (std::size_t i = 0; i < cfg.routes.size(); ++i) {
    const auto& e = g.edges[i];
    doc["routes"].push_back({{"edge", i},
                             {"kind", e.is_back() ? "spill" : "intra"},
                             {"src", e.src},
                             {"dst", e.dst},
                             {"slot", e.slot},
                             {"latency", cfg.routes[i].latency},
                             {"cells", route_json(cfg.routes[i])}});
  }
  doc["ildr"] = json::array();
  for (const auto& il : cfg.ildr_edges) {
    json j{{"edge", il.back_edge},
           {"producer", il.producer},
           {"consumer", il.consumer},
           {"slot", il.slot},
           {"diff", il.diff},
           {"selector_init", il.selector_init},
           {"realization", il.realization == Realization::SelfFeedback ? "self-feedback" : "end-of-route"}};
    if (il.eor) j["eor"] = *il.eor;
    doc["ildr"].push_back(j);
  }
  doc["eor_updates"] = json::array();
  for (std::size_t i = 0; i < cfg.eor_updates.size(); ++i) {
    const auto& e = cfg.eor_updates[i];
    doc["eor_updates"].push_back({{"index", i},
                                  {"producer", e.producer},
                                  {"consumer", e.consumer},
                                  {"cell", cell_json(e.cell)},
                                  {"in_latency", e.in_route.latency},
                                  {"out_latency", e.out_route.latency}});
  }
  doc["baseline_edges"] = cfg.baseline_edges;
  return doc.dump(2) + "\n";
}

}  // namespace drcgra::grid
