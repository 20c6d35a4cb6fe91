#include "drcgra/sim.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "drcgra/deps.hpp"
#include "drcgra/error.hpp"

namespace drcgra::sim {

std::string_view to_string(Mode m) { return m == Mode::Dr ? "dr" : "baseline"; }

std::optional<Mode> parse_mode(std::string_view s) {
  if (s == "dr") return Mode::Dr;
  if (s == "baseline") return Mode::Baseline;
  return std::nullopt;
}

void check(const MachineParams& p) {
  auto bad = [](const std::string& m) { throw Error(ErrorCode::InvalidArgument, m); };
  if (p.n_threads < 1) bad("n_threads must be >= 1");
  if (p.mem_latency < 1) bad("mem_latency must be >= 1");
  if (p.spill_latency < 0) bad("spill_latency must be >= 0");
  if (p.mem_max_outstanding && *p.mem_max_outstanding < 1) bad("mem_max_outstanding must be >= 1");
}

std::string_view to_string(EventKind e) {
  switch (e) {
    case EventKind::Fire: return "fire";
    case EventKind::Complete: return "complete";
    case EventKind::Retag: return "retag";
    case EventKind::Drop: return "drop";
    case EventKind::Stall: return "stall";
  }
  return "?";
}

std::string format(const TraceEvent& e) {
  std::ostringstream os;
  os << "cycle=" << e.cycle << " unit=" << grid::to_string(e.cell) << " event=" << to_string(e.kind)
     << " thread=" << e.thread << " value=" << e.value;
  return os.str();
}

namespace {

int unit_latency(ir::Op op, const grid::GridSpec& spec, const MachineParams& p) {
  if (op == ir::Op::Load) return p.mem_latency;
  return spec.latencies.cycles(ir::latency_class(op));
}

// How one back edge is realized under the given mode.
struct BackEdgePlan {
  enum Kind { Spill, SelfFeedback, EndOfRoute } kind = Spill;
  std::optional<std::size_t> eor;
};

BackEdgePlan plan_back_edge(const grid::GridConfig& cfg, std::size_t edge, Mode mode) {
  if (mode == Mode::Baseline) return {};
  if (std::find(cfg.baseline_edges.begin(), cfg.baseline_edges.end(), edge) != cfg.baseline_edges.end()) {
    return {};
  }
  for (const auto& il : cfg.ildr_edges) {
    if (il.back_edge != edge) continue;
    if (il.realization == grid::Realization::SelfFeedback) return {BackEdgePlan::SelfFeedback, std::nullopt};
    return {BackEdgePlan::EndOfRoute, il.eor};
  }
  throw Error(ErrorCode::InvalidArgument,
              "grid config does not realize back edge " + std::to_string(edge) + " in dr mode");
}

}  // namespace

Simulator::Simulator(const grid::GridConfig& cfg, const ir::DataflowGraph& g, const MachineParams& params,
                     TraceSink trace)
    : graph_(g), params_(params), depth_(cfg.spec.token_buffer_depth), trace_(std::move(trace)) {
  check(params_);
  const auto violations = ir::validate(g);
  if (ir::has_errors(violations)) throw Error(ErrorCode::InvalidGraph, violations.front().message);
  if (cfg.placement.size() != g.size() || cfg.routes.size() != g.edges.size()) {
    throw Error(ErrorCode::InvalidArgument, "grid config does not match the graph");
  }
  memory_ = g.memory;
  const ThreadId n = params_.n_threads;

  units_.resize(g.size() + cfg.eor_updates.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    Unit& u = units_[i];
    u.node = static_cast<NodeId>(i);
    u.op = g.nodes[i].op;
    u.latency = unit_latency(u.op, cfg.spec, params_);
    u.n_inputs = ir::arity(u.op);
    u.stats.name = "n" + std::to_string(i);
    u.stats.cell = cfg.placement[i];
  }
  for (std::size_t i = 0; i < cfg.eor_updates.size(); ++i) {
    Unit& u = units_[g.size() + i];
    u.identity = true;
    u.op = ir::Op::SplitJoin;
    u.latency = cfg.spec.latencies.alu;
    u.n_inputs = 1;
    u.stats.name = "eor" + std::to_string(i);
    u.stats.cell = cfg.eor_updates[i].cell;
  }

  std::int64_t longest_route = 0;
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const ir::Edge& edge = g.edges[e];
    Unit& src = units_[static_cast<std::size_t>(edge.src)];
    const int route_latency = cfg.routes[e].latency;
    longest_route = std::max<std::int64_t>(longest_route, route_latency);
    if (!edge.is_back()) {
      src.dests.push_back({edge.dst, edge.slot, route_latency, 0, false});
      continue;
    }
    Slot& dep = units_[static_cast<std::size_t>(edge.dst)].slots[edge.slot];
    dep.dependent = true;
    dep.diff = edge.diff;
    const auto plan = plan_back_edge(cfg, e, params_.mode);
    switch (plan.kind) {
      case BackEdgePlan::Spill:
        src.dests.push_back({edge.dst, edge.slot, route_latency + params_.spill_latency, edge.diff, false});
        break;
      case BackEdgePlan::SelfFeedback:
        src.dests.push_back({edge.dst, edge.slot, 1, edge.diff, true});
        break;
      case BackEdgePlan::EndOfRoute: {
        const auto& eor = cfg.eor_updates.at(*plan.eor);
        const int eor_unit = static_cast<int>(g.size() + *plan.eor);
        src.dests.push_back({eor_unit, 0, eor.in_route.latency, 0, false});
        units_[static_cast<std::size_t>(eor_unit)].dests.push_back(
            {edge.dst, edge.slot, eor.out_route.latency, edge.diff, true});
        longest_route = std::max<std::int64_t>(longest_route, eor.in_route.latency + eor.out_route.latency);
        break;
      }
    }
  }

  for (const auto& li : g.live_ins) {
    Feeder f;
    f.unit = li.node;
    f.slot = li.slot;
    f.values = li.values;
    const Slot& s = units_[static_cast<std::size_t>(li.node)].slots[li.slot];
    f.dependent = s.dependent;
    f.diff = s.diff;
    f.end = s.dependent ? std::min<ThreadId>(n, static_cast<ThreadId>(li.values.size())) : n;
    if (s.dependent && f.end < std::min<ThreadId>(n, s.diff)) {
      throw Error(ErrorCode::MissingLiveIn, "live-in '" + li.name + "' has " + std::to_string(li.values.size()) +
                                                " values but diff is " + std::to_string(s.diff));
    }
    feeders_.push_back(std::move(f));
  }
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (int s = 0; s < units_[i].n_inputs; ++s) {
      const Slot& slot = units_[i].slots[s];
      if (!slot.dependent) continue;
      const bool seeded = std::any_of(feeders_.begin(), feeders_.end(), [&](const Feeder& f) {
        return f.unit == static_cast<int>(i) && f.slot == s;
      });
      if (!seeded) {
        throw Error(ErrorCode::MissingLiveIn,
                    "node " + std::to_string(i) + " slot " + std::to_string(s) + " has no initial values");
      }
    }
  }

  live_out_.resize(static_cast<std::size_t>(n));
  std::set<NodeId> outs(g.live_outs.begin(), g.live_outs.end());
  for (NodeId id : outs) units_[static_cast<std::size_t>(id)].live_out = true;
  live_out_remaining_ = static_cast<std::int64_t>(outs.size()) * n;

  reference_unit_ = 0;
  const auto back = std::find_if(g.edges.begin(), g.edges.end(), [](const ir::Edge& e) { return e.is_back(); });
  if (back != g.edges.end()) {
    reference_unit_ = back->dst;
  } else if (!g.live_outs.empty()) {
    reference_unit_ = g.live_outs.front();
  }
  reference_issue_.assign(static_cast<std::size_t>(n), -1);

  int max_latency = 1;
  for (const auto& u : units_) max_latency = std::max(max_latency, u.latency);
  deadlock_window_ = max_latency + longest_route + params_.spill_latency + 2;
}

bool Simulator::has_credit(const Slot& s) const {
  return static_cast<int>(s.tokens.size()) + s.reserved < depth_;
}

void Simulator::emit_trace(const Unit& u, EventKind kind, ThreadId thread, Value value) {
  if (trace_) trace_(TraceEvent{cycle_, u.stats.cell, kind, thread, value});
}

void Simulator::deliver(int unit, int slot, Token t) {
  Slot& s = units_[static_cast<std::size_t>(unit)].slots[slot];
  auto [it, inserted] = s.tokens.emplace(t.thread, t.value);
  if (!inserted) {
    max_tokens_per_tag_ = std::max(max_tokens_per_tag_, 2);
    throw std::logic_error("token uniqueness violated at unit " + std::to_string(unit) + " slot " +
                           std::to_string(slot) + " thread " + std::to_string(t.thread));
  }
  max_tokens_per_tag_ = std::max(max_tokens_per_tag_, 1);
}

bool Simulator::try_emit(Unit& u) {
  const InFlight& head = u.pipe.front();
  const ThreadId n = params_.n_threads;
  // Check every live destination first; emission is all-or-nothing.
  for (const Dest& d : u.dests) {
    if (head.thread + d.retag >= n) continue;
    if (!has_credit(units_[static_cast<std::size_t>(d.unit)].slots[d.slot])) return false;
  }
  emit_trace(u, EventKind::Complete, head.thread, head.value);
  for (const Dest& d : u.dests) {
    const Token out = d.retag != 0 ? ildr_retag({head.thread, head.value}, d.retag) : Token{head.thread, head.value};
    if (out.thread >= n) {
      if (d.ildr) {
        ++dropped_retag_;
        emit_trace(u, EventKind::Drop, out.thread, out.value);
      }
      continue;
    }
    if (d.ildr) emit_trace(u, EventKind::Retag, out.thread, out.value);
    ++units_[static_cast<std::size_t>(d.unit)].slots[d.slot].reserved;
    arrivals_.push(Arrival{cycle_ + d.latency, seq_++, d.unit, d.slot, out});
  }
  if (u.live_out) {
    live_out_[static_cast<std::size_t>(head.thread)][u.node] = head.value;
    --live_out_remaining_;
    last_live_out_cycle_ = cycle_;
  }
  u.pipe.pop_front();
  return true;
}

std::int64_t Simulator::loads_in_flight() const {
  std::int64_t n = 0;
  for (const auto& u : units_) {
    if (u.op != ir::Op::Load || u.identity) continue;
    for (const auto& f : u.pipe) {
      if (f.done > cycle_) ++n;
    }
  }
  return n;
}

bool Simulator::quiescent() const {
  if (!arrivals_.empty()) return false;
  for (const auto& f : feeders_) {
    if (f.next < f.end) return false;
  }
  for (const auto& u : units_) {
    if (!u.pipe.empty()) return false;
    if (u.op == ir::Op::Const && !u.identity && u.next_const < params_.n_threads) return false;
  }
  return true;
}

void Simulator::step() {
  if (done_) return;
  progressed_ = false;
  const ThreadId n = params_.n_threads;

  // 1. Completed results leave the pipelines (held on backpressure).
  for (auto& u : units_) {
    while (!u.pipe.empty() && u.pipe.front().done <= cycle_) {
      if (!try_emit(u)) break;
      progressed_ = true;
    }
  }

  // 2. Routed tokens land; host-side live-ins fill free buffer entries.
  while (!arrivals_.empty() && arrivals_.top().cycle <= cycle_) {
    const Arrival a = arrivals_.top();
    arrivals_.pop();
    --units_[static_cast<std::size_t>(a.unit)].slots[a.slot].reserved;
    deliver(a.unit, a.slot, a.token);
    progressed_ = true;
  }
  for (auto& f : feeders_) {
    Unit& u = units_[static_cast<std::size_t>(f.unit)];
    Slot& s = u.slots[f.slot];
    while (f.next < f.end) {
      const Value v = f.values[static_cast<std::size_t>(f.next % static_cast<ThreadId>(f.values.size()))];
      if (f.dependent && f.next >= f.diff) {
        // Selector: past the first diff threads the dependent slot only
        // accepts the fed-back value.
        ++selector_discards_;
        emit_trace(u, EventKind::Drop, f.next, v);
        ++f.next;
        progressed_ = true;
        continue;
      }
      if (!has_credit(s)) break;
      deliver(f.unit, f.slot, {f.next, v});
      ++f.next;
      progressed_ = true;
    }
  }

  // 3. Tag matching and issue. Stores are applied after every unit has
  //    issued so loads in this cycle see the memory of the previous one.
  std::vector<std::pair<Value, Value>> stores;
  std::int64_t outstanding = loads_in_flight();
  for (std::size_t idx = 0; idx < units_.size(); ++idx) {
    Unit& u = units_[idx];
    const bool held = !u.pipe.empty() && u.pipe.front().done <= cycle_;
    std::optional<ThreadId> match;
    bool waiting = false;
    if (u.op == ir::Op::Const && !u.identity) {
      if (u.next_const < n) {
        match = u.next_const;
        waiting = true;
      }
    } else {
      const auto& first = u.slots[0].tokens;
      waiting = !first.empty() || (u.n_inputs > 1 && !u.slots[1].tokens.empty());
      for (const auto& [t, v] : first) {
        if (u.n_inputs < 2 || u.slots[1].tokens.count(t)) {
          match = t;
          break;
        }
      }
    }
    const bool mem_blocked = u.op == ir::Op::Load && !u.identity && params_.mem_max_outstanding &&
                             outstanding >= *params_.mem_max_outstanding;
    if (!match || held || mem_blocked) {
      if (waiting || held) {
        ++u.stats.stalls;
        ThreadId t = -1;
        if (held) {
          t = u.pipe.front().thread;
        } else if (match) {
          t = *match;
        } else {
          // Oldest thread holding a token in either slot.
          for (int s = 0; s < u.n_inputs; ++s) {
            if (!u.slots[s].tokens.empty() && (t < 0 || u.slots[s].tokens.begin()->first < t)) {
              t = u.slots[s].tokens.begin()->first;
            }
          }
        }
        emit_trace(u, EventKind::Stall, t, 0);
      }
      continue;
    }

    const ThreadId t = *match;
    Value in[2] = {0, 0};
    if (u.op == ir::Op::Const && !u.identity) {
      ++u.next_const;
    } else {
      for (int s = 0; s < u.n_inputs; ++s) {
        auto it = u.slots[s].tokens.find(t);
        in[s] = it->second;
        u.slots[s].tokens.erase(it);
      }
    }
    Value result = 0;
    if (u.identity) {
      result = in[0];
    } else if (u.op == ir::Op::Load || u.op == ir::Op::Store) {
      auto it = memory_.find(in[0]);
      if (it == memory_.end()) {
        throw Error(ErrorCode::MemoryOutOfRange, "thread " + std::to_string(t) + " node " +
                                                     std::to_string(u.node) + " address " + std::to_string(in[0]));
      }
      if (u.op == ir::Op::Load) {
        result = it->second;
        ++outstanding;
      } else {
        stores.emplace_back(in[0], in[1]);
        result = in[1];
      }
    } else {
      result = ir::evaluate(graph_.node(u.node), std::span<const Value>(in, static_cast<std::size_t>(u.n_inputs)));
    }
    u.pipe.push_back({t, result, cycle_ + u.latency});
    ++u.stats.fires;
    emit_trace(u, EventKind::Fire, t, result);
    if (static_cast<int>(idx) == reference_unit_) reference_issue_[static_cast<std::size_t>(t)] = cycle_;
    progressed_ = true;
  }
  for (const auto& [addr, v] : stores) memory_[addr] = v;

  // Run until drained so trailing stores and boundary retags are not cut off.
  if (live_out_remaining_ == 0 && quiescent()) {
    done_ = true;
    if (last_live_out_cycle_ < 0) last_live_out_cycle_ = cycle_;
    ++cycle_;
    return;
  }

  idle_cycles_ = progressed_ ? 0 : idle_cycles_ + 1;
  if (idle_cycles_ > deadlock_window_) {
    std::ostringstream os;
    os << "no progress for " << idle_cycles_ << " cycles at cycle " << cycle_ << "; "
       << live_out_remaining_ << " live-out values outstanding; waiting units:";
    for (const auto& u : units_) {
      const auto buffered = u.slots[0].tokens.size() + u.slots[1].tokens.size();
      if (buffered > 0 || !u.pipe.empty()) {
        os << ' ' << u.stats.name << "@" << grid::to_string(u.stats.cell) << "(buffered=" << buffered
           << ",pipe=" << u.pipe.size() << ")";
      }
    }
    throw Error(ErrorCode::Deadlock, os.str());
  }
  ++cycle_;
}

SimReport Simulator::report() const {
  SimReport r;
  r.total_cycles = last_live_out_cycle_ + 1;
  for (const auto& u : units_) r.units.push_back(u.stats);
  r.dropped_retag = dropped_retag_;
  r.selector_discards = selector_discards_;
  r.live_out = live_out_;
  r.reference_unit = reference_unit_;
  r.reference_issue_cycles = reference_issue_;
  const auto count = static_cast<std::int64_t>(reference_issue_.size());
  if (count >= 2) {
    const std::int64_t first = count >= 4 ? count / 2 : 0;
    const std::int64_t a = reference_issue_[static_cast<std::size_t>(first)];
    const std::int64_t b = reference_issue_[static_cast<std::size_t>(count - 1)];
    if (a >= 0 && b >= 0) r.measured_ii = static_cast<double>(b - a) / static_cast<double>(count - 1 - first);
  }
  return r;
}

SimReport simulate(const grid::GridConfig& config, const ir::DataflowGraph& g, const MachineParams& params,
                   TraceSink trace) {
  Simulator s(config, g, params, std::move(trace));
  while (!s.done()) s.step();
  return s.report();
}

namespace {

struct ArcW {
  int from;
  int to;
  double latency;
  int distance;
};

// Max cycle ratio by bisection: a ratio r is feasible iff the graph with
// weights latency - r * distance has a positive cycle.
double max_cycle_ratio(int n_nodes, const std::vector<ArcW>& arcs) {
  auto positive_cycle = [&](double r) {
    std::vector<double> dist(static_cast<std::size_t>(n_nodes), 0.0);
    for (int iter = 0; iter <= n_nodes; ++iter) {
      bool relaxed = false;
      for (const auto& a : arcs) {
        const double w = a.latency - r * a.distance;
        if (dist[static_cast<std::size_t>(a.from)] + w > dist[static_cast<std::size_t>(a.to)] + 1e-9) {
          dist[static_cast<std::size_t>(a.to)] = dist[static_cast<std::size_t>(a.from)] + w;
          relaxed = true;
        }
      }
      if (!relaxed) return false;
    }
    return true;
  };
  double hi = 1.0;
  for (const auto& a : arcs) hi += a.latency;
  double lo = 0.0;
  if (!positive_cycle(lo)) return 0.0;
  for (int i = 0; i < 100; ++i) {
    const double mid = 0.5 * (lo + hi);
    (positive_cycle(mid) ? lo : hi) = mid;
  }
  return std::round(hi * 1e6) / 1e6;
}

}  // namespace

double recurrence_ii(const grid::GridConfig& cfg, const ir::DataflowGraph& g, const MachineParams& params) {
  check(params);
  const int n_graph = static_cast<int>(g.size());
  const int n_nodes = n_graph + static_cast<int>(cfg.eor_updates.size());
  auto lat = [&](NodeId id) { return unit_latency(g.node(id).op, cfg.spec, params); };
  std::vector<ArcW> arcs;
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const ir::Edge& edge = g.edges[e];
    const double base = lat(edge.src);
    if (!edge.is_back()) {
      arcs.push_back({edge.src, edge.dst, base + cfg.routes[e].latency, 0});
      continue;
    }
    const auto plan = plan_back_edge(cfg, e, params.mode);
    switch (plan.kind) {
      case BackEdgePlan::Spill:
        arcs.push_back({edge.src, edge.dst, base + cfg.routes[e].latency + params.spill_latency, edge.diff});
        break;
      case BackEdgePlan::SelfFeedback:
        arcs.push_back({edge.src, edge.dst, base + 1, edge.diff});
        break;
      case BackEdgePlan::EndOfRoute: {
        const auto& eor = cfg.eor_updates.at(*plan.eor);
        const int eor_node = n_graph + static_cast<int>(*plan.eor);
        arcs.push_back({edge.src, eor_node, base + eor.in_route.latency, 0});
        arcs.push_back({eor_node, edge.dst, static_cast<double>(cfg.spec.latencies.alu + eor.out_route.latency),
                        edge.diff});
        break;
      }
    }
  }
  double ii = std::max(1.0, max_cycle_ratio(n_nodes, arcs));
  if (params.mem_max_outstanding) {
    const auto loads = std::count_if(g.nodes.begin(), g.nodes.end(), [](const ir::Node& n) { return n.op == ir::Op::Load; });
    ii = std::max(ii, static_cast<double>(loads) * params.mem_latency / *params.mem_max_outstanding);
  }
  return ii;
}

double steady_state_ii(const grid::GridConfig& cfg, const ir::DataflowGraph& g, const MachineParams& params) {
  const auto dep_list = deps::find_deps(g, cfg.spec.latencies);
  if (dep_list.size() != 1) {
    throw Error(ErrorCode::UnsupportedPattern,
                "closed-form II needs exactly one loop-carried dependency, found " + std::to_string(dep_list.size()));
  }
  const auto cls = deps::classify(g, dep_list.front(), dep_list);
  if (cls.pattern != deps::Pattern::SinglePath && cls.pattern != deps::Pattern::DivergingAfter) {
    throw Error(ErrorCode::UnsupportedPattern,
                "closed-form II does not cover " + std::string(deps::to_string(cls.pattern)));
  }
  return recurrence_ii(cfg, g, params);
}

}  // namespace drcgra::sim
