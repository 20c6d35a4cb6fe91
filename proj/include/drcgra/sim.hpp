#pragma once

// Cycle-level simulation of a mapped loop on the multithreaded tagged-token
// grid, in baseline (spill and stall) or dependency-resolved (ILDR) mode.

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "drcgra/grid.hpp"
#include "drcgra/ir.hpp"

namespace drcgra::sim {

using ir::NodeId;
using ir::ThreadId;
using ir::Value;

enum class Mode { Baseline, Dr };

std::string_view to_string(Mode m);
std::optional<Mode> parse_mode(std::string_view s);

struct MachineParams {
  Mode mode = Mode::Dr;
  int n_threads = 1;
  int mem_latency = 20;
  std::optional<int> mem_max_outstanding;  // nullopt = unbounded
  int spill_latency = 8;

  bool operator==(const MachineParams&) const = default;
};

/// Throws InvalidArgument if an invariant does not hold.
void check(const MachineParams& p);

struct Token {
  ThreadId thread = 0;
  Value value = 0;

  bool operator==(const Token&) const = default;
};

/// Tag update performed by the ILDR adder. The caller drops tokens whose new
/// thread id falls outside the thread group.
constexpr Token ildr_retag(Token t, int diff) { return {t.thread + diff, t.value}; }

enum class EventKind { Fire, Complete, Retag, Drop, Stall };

std::string_view to_string(EventKind e);

struct TraceEvent {
  std::int64_t cycle = 0;
  grid::Cell cell;
  EventKind kind = EventKind::Fire;
  ThreadId thread = 0;
  Value value = 0;
};

/// "cycle=<c> unit=<cell> event=<kind> thread=<t> value=<v>"
std::string format(const TraceEvent& e);

using TraceSink = std::function<void(const TraceEvent&)>;

struct UnitStats {
  std::string name;  // "n<id>" for graph nodes, "eor<i>" for end-of-route units
  grid::Cell cell;
  std::int64_t fires = 0;
  std::int64_t stalls = 0;

  bool operator==(const UnitStats&) const = default;
};

struct SimReport {
  std::int64_t total_cycles = 0;
  std::vector<UnitStats> units;
  std::int64_t dropped_retag = 0;
  std::int64_t selector_discards = 0;
  ir::ThreadOutputs live_out;
  /// Mean issue spacing over the second half of the threads at the
  /// reference unit (consumer of the first back edge, else first live-out).
  double measured_ii = 0.0;
  NodeId reference_unit = 0;
  std::vector<std::int64_t> reference_issue_cycles;

  bool operator==(const SimReport&) const = default;
};

class Simulator {
 public:
  Simulator(const grid::GridConfig& config, const ir::DataflowGraph& g, const MachineParams& params,
            TraceSink trace = {});

  /// Advances one global cycle. Throws Deadlock when the machine makes no
  /// progress for longer than any in-flight operation could take.
  void step();
  bool done() const { return done_; }
  std::int64_t cycle() const { return cycle_; }
  SimReport report() const;

  /// Largest number of tokens observed for one (slot, thread) pair; the
  /// token-uniqueness invariant requires this to stay at 1.
  int max_tokens_per_tag() const { return max_tokens_per_tag_; }

 private:
  struct Dest {
    int unit = 0;
    int slot = 0;
    int latency = 0;
    int retag = 0;       // added to the thread id on delivery
    bool ildr = false;   // out-of-range retags are counted as drops
  };
  struct Slot {
    std::map<ThreadId, Value> tokens;
    int reserved = 0;  // tokens in flight towards this slot
    bool dependent = false;
    int diff = 0;
  };
  struct InFlight {
    ThreadId thread;
    Value value;
    std::int64_t done;
  };
  struct Unit {
    UnitStats stats;
    ir::Op op = ir::Op::Add;
    bool identity = false;  // end-of-route update
    NodeId node = -1;
    int latency = 1;
    int n_inputs = 0;
    Slot slots[2];
    std::deque<InFlight> pipe;
    std::vector<Dest> dests;
    ThreadId next_const = 0;
    bool live_out = false;
  };
  struct Arrival {
    std::int64_t cycle;
    std::uint64_t seq;
    int unit;
    int slot;
    Token token;
    bool operator>(const Arrival& o) const { return cycle != o.cycle ? cycle > o.cycle : seq > o.seq; }
  };
  struct Feeder {
    int unit;
    int slot;
    std::vector<Value> values;
    ThreadId next = 0;
    ThreadId end = 0;
    bool dependent = false;
    int diff = 0;
  };

  bool has_credit(const Slot& s) const;
  bool try_emit(Unit& u);
  void deliver(int unit, int slot, Token t);
  void emit_trace(const Unit& u, EventKind kind, ThreadId thread, Value value);
  std::int64_t loads_in_flight() const;
  bool quiescent() const;

  const ir::DataflowGraph& graph_;
  MachineParams params_;
  int depth_;
  TraceSink trace_;
  std::vector<Unit> units_;
  std::vector<Feeder> feeders_;
  std::priority_queue<Arrival, std::vector<Arrival>, std::greater<>> arrivals_;
  std::uint64_t seq_ = 0;
  std::map<Value, Value> memory_;
  std::int64_t cycle_ = 0;
  bool done_ = false;
  bool progressed_ = false;
  std::int64_t idle_cycles_ = 0;
  std::int64_t deadlock_window_ = 0;
  std::int64_t last_live_out_cycle_ = -1;
  std::int64_t live_out_remaining_ = 0;
  std::int64_t dropped_retag_ = 0;
  std::int64_t selector_discards_ = 0;
  int max_tokens_per_tag_ = 0;
  int reference_unit_ = 0;
  std::vector<std::int64_t> reference_issue_;
  ir::ThreadOutputs live_out_;
};

SimReport simulate(const grid::GridConfig& config, const ir::DataflowGraph& g, const MachineParams& params,
                   TraceSink trace = {});

/// Recurrence-constrained initiation interval of a mapped loop: the maximum
/// over unit-graph cycles of (summed latency / summed diff), at least 1 and
/// at least the memory-bandwidth bound when in-flight loads are capped.
double recurrence_ii(const grid::GridConfig& config, const ir::DataflowGraph& g, const MachineParams& params);

/// Closed-form II for a loop with exactly one SinglePath or DivergingAfter
/// dependency: dr = consumer latency + 1, baseline = path unit and route
/// latencies + spill route + spill_latency. Throws UnsupportedPattern.
double steady_state_ii(const grid::GridConfig& config, const ir::DataflowGraph& g, const MachineParams& params);

}  // namespace drcgra::sim
