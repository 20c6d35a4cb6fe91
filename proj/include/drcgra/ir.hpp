#pragma once

// Loop dataflow IR: one loop body as a graph whose executions are the
// iterations (threads) of the loop. Intra edges carry values within one
// iteration; back edges carry a value from iteration t to iteration t + diff.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace drcgra::ir {

using NodeId = std::int32_t;
using Value = std::int64_t;  // 64-bit datum; FPU ops reinterpret the bits as double
using ThreadId = std::int64_t;

enum class Op {
  Add,
  Sub,
  Mul,
  Cmp,
  And,
  Or,
  Shift,
  FAdd,
  FMul,
  FDiv,
  Load,
  Store,
  Control,
  SplitJoin,
  Const,
  Sink,
};

enum class LatencyClass { Alu, Fpu, Load, Store, Control, Sju };

/// Grid unit classes a node can be placed on.
enum class UnitClass { Compute, LdSt, Control, Sju };

int arity(Op op);
bool has_output(Op op);
LatencyClass latency_class(Op op);
UnitClass unit_class(Op op);
bool is_memory(Op op);

std::string_view op_name(Op op);
std::optional<Op> parse_op(std::string_view name);
std::string_view unit_class_name(UnitClass c);

/// Cycles per unit latency class.
struct LatencyTable {
  int alu = 1;
  int fpu = 4;
  int load = 20;
  int store = 1;
  int control = 1;
  int sju = 1;

  int cycles(LatencyClass c) const;
  bool operator==(const LatencyTable&) const = default;
};

struct Node {
  NodeId id = 0;
  Op op = Op::Add;
  Value const_value = 0;     // CONST only
  bool const_is_float = false;  // print hint for CONST literals

  int n_inputs() const { return arity(op); }
  LatencyClass latency() const { return latency_class(op); }
  bool operator==(const Node&) const = default;
};

enum class EdgeKind { Intra, Back };

struct Edge {
  NodeId src = 0;
  NodeId dst = 0;
  int slot = 0;
  EdgeKind kind = EdgeKind::Intra;
  int diff = 0;  // >= 1 for back edges, 0 otherwise

  bool is_back() const { return kind == EdgeKind::Back; }
  bool operator==(const Edge&) const = default;
};

/// Initial / external values bound to one input slot. On a slot fed by a back
/// edge, values[t] seeds thread t < diff. On any other slot thread t reads
/// values[t % values.size()].
struct LiveIn {
  std::string name;
  NodeId node = 0;
  int slot = 0;
  std::vector<Value> values;

  bool operator==(const LiveIn&) const = default;
};

struct DataflowGraph {
  std::vector<Node> nodes;
  std::vector<Edge> edges;  // declaration order, intra and back interleaved
  std::vector<LiveIn> live_ins;
  std::vector<NodeId> live_outs;
  std::map<Value, Value> memory;  // address -> initial value

  std::size_t size() const { return nodes.size(); }
  const Node& node(NodeId id) const { return nodes.at(static_cast<std::size_t>(id)); }
  bool contains(NodeId id) const { return id >= 0 && static_cast<std::size_t>(id) < nodes.size(); }

  bool operator==(const DataflowGraph&) const = default;
};

enum class Severity { Warning, Error };

enum class ViolationCode {
  NonDenseIds,
  DanglingReference,
  SlotOutOfRange,
  SourceHasNoOutput,
  InvalidDiff,
  UnfedSlot,
  DuplicateSlotBinding,
  IntraCycle,
  MissingLiveOut,
  EmptyLiveIn,
  MultiDependentInput,
};

std::string_view to_string(ViolationCode code);

struct Violation {
  Severity severity = Severity::Error;
  ViolationCode code = ViolationCode::UnfedSlot;
  std::string message;
};

/// Checks every structural invariant of the IR. An empty result means the
/// graph is valid; warnings do not make it invalid.
std::vector<Violation> validate(const DataflowGraph& g);
bool has_errors(std::span<const Violation> violations);

/// Which source feeds a given (node, slot).
struct SlotFeed {
  std::optional<std::size_t> intra_edge;
  std::optional<std::size_t> back_edge;
  std::optional<std::size_t> live_in;

  bool dependent() const { return back_edge.has_value(); }
};

/// feeds[node][slot]; assumes a graph without dangling references.
std::vector<std::vector<SlotFeed>> slot_feeds(const DataflowGraph& g);

/// Outgoing intra edges per node, as edge indices in declaration order.
std::vector<std::vector<std::size_t>> intra_successors(const DataflowGraph& g);

/// Topological order of the intra-edge DAG (smallest ready id first).
/// Throws InvalidGraph if intra edges contain a cycle.
std::vector<NodeId> topo_order(const DataflowGraph& g);

/// Value semantics of every non-memory op. `in` has arity(op) entries.
Value evaluate(const Node& n, std::span<const Value> in);

double as_double(Value v);
Value from_double(double d);

using ThreadOutputs = std::vector<std::map<NodeId, Value>>;

/// Sequential functional oracle: runs iterations 0..n_threads-1 in order on a
/// single flat memory and returns the live-out values of each thread.
ThreadOutputs reference_execute(const DataflowGraph& g, int n_threads);

// Text and JSON encodings ---------------------------------------------------

DataflowGraph parse_dfg(std::string_view text);
DataflowGraph parse_dfg_json(std::string_view text);
std::string print_dfg(const DataflowGraph& g);
std::string to_json(const DataflowGraph& g);

/// Reads a graph file; `.json` selects the JSON encoding.
DataflowGraph load_dfg(const std::filesystem::path& path);

/// Parses one value literal: decimal integer, or a float literal stored as
/// the bits of a double. Returns nullopt on malformed input.
std::optional<Value> parse_value(std::string_view token, bool* is_float = nullptr);
std::string format_float(double d);

}  // namespace drcgra::ir
