#include "drcgra/ir.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <queue>
#include <sstream>

#include "drcgra/error.hpp"

namespace drcgra::ir {

namespace {

struct OpInfo {
  Op op;
  std::string_view name;
  int arity;
  LatencyClass latency;
  UnitClass unit;
};

constexpr std::array<OpInfo, 16> kOps{{
    {Op::Add, "add", 2, LatencyClass::Alu, UnitClass::Compute},
    {Op::Sub, "sub", 2, LatencyClass::Alu, UnitClass::Compute},
    {Op::Mul, "mul", 2, LatencyClass::Alu, UnitClass::Compute},
    {Op::Cmp, "cmp", 2, LatencyClass::Alu, UnitClass::Compute},
    {Op::And, "and", 2, LatencyClass::Alu, UnitClass::Compute},
    {Op::Or, "or", 2, LatencyClass::Alu, UnitClass::Compute},
    {Op::Shift, "shift", 2, LatencyClass::Alu, UnitClass::Compute},
    {Op::FAdd, "fadd", 2, LatencyClass::Fpu, UnitClass::Compute},
    {Op::FMul, "fmul", 2, LatencyClass::Fpu, UnitClass::Compute},
    {Op::FDiv, "fdiv", 2, LatencyClass::Fpu, UnitClass::Compute},
    {Op::Load, "load", 1, LatencyClass::Load, UnitClass::LdSt},
    {Op::Store, "store", 2, LatencyClass::Store, UnitClass::LdSt},
    {Op::Control, "control", 2, LatencyClass::Control, UnitClass::Control},
    {Op::SplitJoin, "splitjoin", 2, LatencyClass::Sju, UnitClass::Sju},
    {Op::Const, "const", 0, LatencyClass::Alu, UnitClass::Compute},
    {Op::Sink, "sink", 1, LatencyClass::Alu, UnitClass::Compute},
}};

const OpInfo& info(Op op) { return kOps[static_cast<std::size_t>(op)]; }

std::string describe_slot(NodeId node, int slot) {
  return "node " + std::to_string(node) + " slot " + std::to_string(slot);
}

}  // namespace

int arity(Op op) { return info(op).arity; }
bool has_output(Op op) { return op != Op::Sink; }
LatencyClass latency_class(Op op) { return info(op).latency; }
UnitClass unit_class(Op op) { return info(op).unit; }
bool is_memory(Op op) { return op == Op::Load || op == Op::Store; }
std::string_view op_name(Op op) { return info(op).name; }

std::optional<Op> parse_op(std::string_view name) {
  for (const auto& o : kOps) {
    if (o.name == name) return o.op;
  }
  return std::nullopt;
}

std::string_view unit_class_name(UnitClass c) {
  switch (c) {
    case UnitClass::Compute: return "COMPUTE";
    case UnitClass::LdSt: return "LDST";
    case UnitClass::Control: return "CONTROL";
    case UnitClass::Sju: return "SJU";
  }
  return "?";
}

int LatencyTable::cycles(LatencyClass c) const {
  switch (c) {
    case LatencyClass::Alu: return alu;
    case LatencyClass::Fpu: return fpu;
    case LatencyClass::Load: return load;
    case LatencyClass::Store: return store;
    case LatencyClass::Control: return control;
    case LatencyClass::Sju: return sju;
  }
  return 1;
}

std::string_view to_string(ViolationCode code) {
  switch (code) {
    case ViolationCode::NonDenseIds: return "non-dense-ids";
    case ViolationCode::DanglingReference: return "dangling-reference";
    case ViolationCode::SlotOutOfRange: return "slot-out-of-range";
    case ViolationCode::SourceHasNoOutput: return "source-has-no-output";
    case ViolationCode::InvalidDiff: return "invalid-diff";
    case ViolationCode::UnfedSlot: return "unfed-slot";
    case ViolationCode::DuplicateSlotBinding: return "duplicate-slot-binding";
    case ViolationCode::IntraCycle: return "intra-cycle";
    case ViolationCode::MissingLiveOut: return "missing-live-out";
    case ViolationCode::EmptyLiveIn: return "empty-live-in";
    case ViolationCode::MultiDependentInput: return "multi-dependent-input";
  }
  return "?";
}

bool has_errors(std::span<const Violation> violations) {
  return std::any_of(violations.begin(), violations.end(),
                     [](const Violation& v) { return v.severity == Severity::Error; });
}

std::vector<Violation> validate(const DataflowGraph& g) {
  std::vector<Violation> out;
  auto error = [&](ViolationCode c, std::string msg) {
    out.push_back({Severity::Error, c, std::move(msg)});
  };

  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    if (g.nodes[i].id != static_cast<NodeId>(i)) {
      error(ViolationCode::NonDenseIds, "node at position " + std::to_string(i) + " has id " +
                                            std::to_string(g.nodes[i].id));
    }
  }

  // Per-slot feeder counts; only well-formed references are counted.
  struct Count {
    int intra = 0, back = 0, live_in = 0;
  };
  std::vector<std::vector<Count>> counts(g.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    counts[i].resize(static_cast<std::size_t>(g.nodes[i].n_inputs()));
  }
  auto slot_ok = [&](NodeId node, int slot, const std::string& what) {
    if (!g.contains(node)) {
      error(ViolationCode::DanglingReference, what + " references undefined node " +
                                                  std::to_string(node));
      return false;
    }
    if (slot < 0 || slot >= g.node(node).n_inputs()) {
      error(ViolationCode::SlotOutOfRange,
            what + " targets " + describe_slot(node, slot) + " but " +
                std::string(op_name(g.node(node).op)) + " has " +
                std::to_string(g.node(node).n_inputs()) + " inputs");
      return false;
    }
    return true;
  };

  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const Edge& edge = g.edges[e];
    const std::string what = "edge " + std::to_string(e);
    if (!g.contains(edge.src)) {
      error(ViolationCode::DanglingReference,
            what + " references undefined node " + std::to_string(edge.src));
      continue;
    }
    if (!has_output(g.node(edge.src).op)) {
      error(ViolationCode::SourceHasNoOutput,
            what + " leaves node " + std::to_string(edge.src) + " which has no output");
    }
    if (edge.is_back() ? edge.diff < 1 : edge.diff != 0) {
      error(ViolationCode::InvalidDiff, what + " has diff " + std::to_string(edge.diff));
    }
    if (!slot_ok(edge.dst, edge.slot, what)) continue;
    auto& c = counts[static_cast<std::size_t>(edge.dst)][static_cast<std::size_t>(edge.slot)];
    (edge.is_back() ? c.back : c.intra)++;
  }
  for (const auto& li : g.live_ins) {
    if (li.values.empty()) {
      error(ViolationCode::EmptyLiveIn, "live-in '" + li.name + "' has no values");
    }
    if (!slot_ok(li.node, li.slot, "live-in '" + li.name + "'")) continue;
    counts[static_cast<std::size_t>(li.node)][static_cast<std::size_t>(li.slot)].live_in++;
  }

  for (std::size_t n = 0; n < counts.size(); ++n) {
    int dependent_slots = 0;
    for (std::size_t s = 0; s < counts[n].size(); ++s) {
      const Count& c = counts[n][s];
      const auto where = describe_slot(static_cast<NodeId>(n), static_cast<int>(s));
      if (c.back > 0) ++dependent_slots;
      if (c.intra + c.back > 1 || c.live_in > 1 || (c.intra > 0 && c.live_in > 0)) {
        error(ViolationCode::DuplicateSlotBinding, where + " is bound more than once");
      } else if (c.intra + c.back + c.live_in == 0) {
        error(ViolationCode::UnfedSlot, where + " has no feeding edge or live-in");
      }
    }
    if (dependent_slots > 1) {
      out.push_back({Severity::Warning, ViolationCode::MultiDependentInput,
                     "node " + std::to_string(n) +
                         " has more than one loop-carried input; the ILDR resolves one"});
    }
  }

  for (NodeId id : g.live_outs) {
    if (!g.contains(id)) {
      error(ViolationCode::MissingLiveOut, "live-out node " + std::to_string(id) + " does not exist");
    }
  }

  // DAG check over intra edges (Kahn); skipped when references are broken.
  bool refs_ok = std::none_of(out.begin(), out.end(), [](const Violation& v) {
    return v.code == ViolationCode::DanglingReference || v.code == ViolationCode::NonDenseIds;
  });
  if (refs_ok) {
    std::vector<int> indeg(g.nodes.size(), 0);
    for (const auto& e : g.edges) {
      if (!e.is_back()) ++indeg[static_cast<std::size_t>(e.dst)];
    }
    const auto succ = intra_successors(g);
    std::vector<std::size_t> ready;
    for (std::size_t i = 0; i < indeg.size(); ++i) {
      if (indeg[i] == 0) ready.push_back(i);
    }
    std::size_t seen = 0;
    while (!ready.empty()) {
      const std::size_t n = ready.back();
      ready.pop_back();
      ++seen;
      for (std::size_t e : succ[n]) {
        const auto d = static_cast<std::size_t>(g.edges[e].dst);
        if (--indeg[d] == 0) ready.push_back(d);
      }
    }
    if (seen != g.nodes.size()) {
      error(ViolationCode::IntraCycle, "intra-iteration edges contain a cycle; only back edges may close loops");
    }
  }
  return out;
}

std::vector<std::vector<SlotFeed>> slot_feeds(const DataflowGraph& g) {
  std::vector<std::vector<SlotFeed>> feeds(g.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    feeds[i].resize(static_cast<std::size_t>(g.nodes[i].n_inputs()));
  }
  auto at = [&](NodeId n, int s) -> SlotFeed& {
    return feeds.at(static_cast<std::size_t>(n)).at(static_cast<std::size_t>(s));
  };
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const Edge& edge = g.edges[e];
    (edge.is_back() ? at(edge.dst, edge.slot).back_edge : at(edge.dst, edge.slot).intra_edge) = e;
  }
  for (std::size_t i = 0; i < g.live_ins.size(); ++i) {
    at(g.live_ins[i].node, g.live_ins[i].slot).live_in = i;
  }
  return feeds;
}

std::vector<std::vector<std::size_t>> intra_successors(const DataflowGraph& g) {
  std::vector<std::vector<std::size_t>> succ(g.nodes.size());
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    if (!g.edges[e].is_back()) succ[static_cast<std::size_t>(g.edges[e].src)].push_back(e);
  }
  return succ;
}

std::vector<NodeId> topo_order(const DataflowGraph& g) {
  std::vector<int> indeg(g.nodes.size(), 0);
  for (const auto& e : g.edges) {
    if (!e.is_back()) ++indeg[static_cast<std::size_t>(e.dst)];
  }
  const auto succ = intra_successors(g);
  std::priority_queue<NodeId, std::vector<NodeId>, std::greater<>> ready;
  for (std::size_t i = 0; i < indeg.size(); ++i) {
    if (indeg[i] == 0) ready.push(static_cast<NodeId>(i));
  }
  std::vector<NodeId> order;
  order.reserve(g.nodes.size());
  while (!ready.empty()) {
    const NodeId n = ready.top();
    ready.pop();
    order.push_back(n);
    for (std::size_t e : succ[static_cast<std::size_t>(n)]) {
      if (--indeg[static_cast<std::size_t>(g.edges[e].dst)] == 0) ready.push(g.edges[e].dst);
    }
  }
  if (order.size() != g.nodes.size()) {
    throw Error(ErrorCode::InvalidGraph, "intra-iteration edges contain a cycle");
  }
  return order;
}

double as_double(Value v) { return std::bit_cast<double>(v); }
Value from_double(double d) { return std::bit_cast<Value>(d); }

Value evaluate(const Node& n, std::span<const Value> in) {
  // Integer arithmetic wraps (two's complement) instead of overflowing.
  auto u = [](Value v) { return static_cast<std::uint64_t>(v); };
  auto s = [](std::uint64_t v) { return static_cast<Value>(v); };
  switch (n.op) {
    case Op::Add: return s(u(in[0]) + u(in[1]));
    case Op::Sub: return s(u(in[0]) - u(in[1]));
    case Op::Mul: return s(u(in[0]) * u(in[1]));
    case Op::Cmp: return in[0] < in[1] ? 1 : 0;
    case Op::And: return in[0] & in[1];
    case Op::Or: return in[0] | in[1];
    case Op::Shift: return s(u(in[0]) << (u(in[1]) & 63U));
    case Op::FAdd: return from_double(as_double(in[0]) + as_double(in[1]));
    case Op::FMul: return from_double(as_double(in[0]) * as_double(in[1]));
    case Op::FDiv: return from_double(as_double(in[0]) / as_double(in[1]));
    case Op::Control: return in[0] != 0 ? in[1] : 0;
    case Op::SplitJoin: return in[0];
    case Op::Const: return n.const_value;
    case Op::Sink: return in[0];
    case Op::Load:
    case Op::Store: break;
  }
  throw Error(ErrorCode::InvalidArgument, "evaluate() does not handle memory op " +
                                              std::string(op_name(n.op)));
}

ThreadOutputs reference_execute(const DataflowGraph& g, int n_threads) {
  if (n_threads < 1) throw Error(ErrorCode::InvalidArgument, "n_threads must be >= 1");
  const auto violations = validate(g);
  if (has_errors(violations)) {
    throw Error(ErrorCode::InvalidGraph, violations.front().message);
  }
  const auto order = topo_order(g);
  const auto feeds = slot_feeds(g);
  std::map<Value, Value> memory = g.memory;

  std::vector<std::vector<Value>> history;  // history[t][node]
  history.reserve(static_cast<std::size_t>(n_threads));
  ThreadOutputs outputs(static_cast<std::size_t>(n_threads));

  for (ThreadId t = 0; t < n_threads; ++t) {
    std::vector<Value> vals(g.nodes.size(), 0);
    for (NodeId id : order) {
      const Node& node = g.node(id);
      std::array<Value, 2> in{};
      for (int s = 0; s < node.n_inputs(); ++s) {
        const SlotFeed& f = feeds[static_cast<std::size_t>(id)][static_cast<std::size_t>(s)];
        Value v = 0;
        if (f.intra_edge) {
          v = vals[static_cast<std::size_t>(g.edges[*f.intra_edge].src)];
        } else if (f.back_edge) {
          const Edge& be = g.edges[*f.back_edge];
          if (t >= be.diff) {
            v = history[static_cast<std::size_t>(t - be.diff)][static_cast<std::size_t>(be.src)];
          } else {
            const LiveIn* li = f.live_in ? &g.live_ins[*f.live_in] : nullptr;
            if (li == nullptr || static_cast<ThreadId>(li->values.size()) <= t) {
              throw Error(ErrorCode::MissingLiveIn,
                          "no initial value for thread " + std::to_string(t) + " at " +
                              describe_slot(id, s));
            }
            v = li->values[static_cast<std::size_t>(t)];
          }
        } else {
          const auto& values = g.live_ins[*f.live_in].values;
          v = values[static_cast<std::size_t>(t) % values.size()];
        }
        in[static_cast<std::size_t>(s)] = v;
      }
      Value result = 0;
      if (node.op == Op::Load || node.op == Op::Store) {
        auto it = memory.find(in[0]);
        if (it == memory.end()) {
          throw Error(ErrorCode::MemoryOutOfRange, "thread " + std::to_string(t) + " node " +
                                                       std::to_string(id) + " address " +
                                                       std::to_string(in[0]));
        }
        if (node.op == Op::Load) {
          result = it->second;
        } else {
          it->second = in[1];
          result = in[1];
        }
      } else {
        result = evaluate(node, std::span<const Value>(in.data(), static_cast<std::size_t>(node.n_inputs())));
      }
      vals[static_cast<std::size_t>(id)] = result;
    }
    for (NodeId out : g.live_outs) {
      outputs[static_cast<std::size_t>(t)][out] = vals[static_cast<std::size_t>(out)];
    }
    history.push_back(std::move(vals));
  }
  return outputs;
}

}  // namespace drcgra::ir
