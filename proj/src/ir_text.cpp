#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "drcgra/error.hpp"
#include "drcgra/ir.hpp"
#include "json.hpp"

namespace drcgra::ir {

namespace {

struct Token {
  std::string_view text;
  int column = 1;
};

std::vector<Token> tokenize(std::string_view line) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    if (line[i] == '#') break;
    if (line[i] == ' ' || line[i] == '\t' || line[i] == '\r') {
      ++i;
      continue;
    }
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r' && line[i] != '#') {
      ++i;
    }
    out.push_back({line.substr(start, i - start), static_cast<int>(start) + 1});
  }
  return out;
}

template <typename Int>
std::optional<Int> parse_int(std::string_view s) {
  Int v{};
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

// A declared reference whose existence is checked once all nodes are known.
struct NodeRef {
  NodeId id;
  int line;
  int column;
};

struct SlotBinding {
  NodeId node;
  int slot;
  bool from_back_edge;
  bool from_live_in;
};

void check_graph(const DataflowGraph& g) {
  const auto violations = validate(g);
  if (!has_errors(violations)) return;
  std::string msg;
  for (const auto& v : violations) {
    if (v.severity != Severity::Error) continue;
    if (!msg.empty()) msg += "; ";
    msg += std::string(to_string(v.code)) + ": " + v.message;
  }
  throw Error(ErrorCode::InvalidGraph, msg);
}

void sort_nodes(DataflowGraph& g) {
  std::stable_sort(g.nodes.begin(), g.nodes.end(),
                   [](const Node& a, const Node& b) { return a.id < b.id; });
}

}  // namespace

std::optional<Value> parse_value(std::string_view token, bool* is_float) {
  if (is_float != nullptr) *is_float = false;
  if (auto i = parse_int<Value>(token)) return *i;
  const bool looks_float = token.find_first_of(".eE") != std::string_view::npos ||
                           token == "inf" || token == "-inf" || token == "nan";
  if (!looks_float) return std::nullopt;
  double d{};
  const auto* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, d);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  if (is_float != nullptr) *is_float = true;
  return from_double(d);
}

std::string format_float(double d) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), d);
  std::string s(buf, ptr);
  // Keep a float marker so the literal parses back as a float.
  if (std::isfinite(d) && s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

DataflowGraph parse_dfg(std::string_view text) {
  DataflowGraph g;
  std::vector<NodeRef> refs;
  std::set<NodeId> node_ids;
  std::set<std::string> live_in_names;
  std::map<std::pair<NodeId, int>, SlotBinding> bindings;

  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string_view line =
        text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;

    const auto toks = tokenize(line);
    if (toks.empty()) continue;
    const int eol_col = static_cast<int>(line.size()) + 1;

    auto fail = [&](int col, const std::string& msg) -> void {
      throw ParseError(ErrorCode::Syntax, line_no, col, msg);
    };
    auto arg_count = [&](std::size_t min, std::size_t max) {
      if (toks.size() < min + 1) fail(eol_col, "'" + std::string(toks[0].text) + "' expects more arguments");
      if (toks.size() > max + 1) fail(toks[max + 1].column, "unexpected token '" + std::string(toks[max + 1].text) + "'");
    };
    auto integer = [&](const Token& t, const char* what) -> std::int64_t {
      auto v = parse_int<std::int64_t>(t.text);
      if (!v) fail(t.column, std::string("expected integer ") + what + ", got '" + std::string(t.text) + "'");
      return *v;
    };
    auto value = [&](const Token& t, bool* is_float = nullptr) -> Value {
      auto v = parse_value(t.text, is_float);
      if (!v) fail(t.column, "expected value literal, got '" + std::string(t.text) + "'");
      return *v;
    };
    auto node_ref = [&](const Token& t) -> NodeId {
      const auto id = integer(t, "node id");
      refs.push_back({static_cast<NodeId>(id), line_no, t.column});
      return static_cast<NodeId>(id);
    };
    auto bind = [&](NodeId node, int slot, bool back, bool live_in, const Token& at) {
      auto [it, inserted] = bindings.try_emplace({node, slot}, SlotBinding{node, slot, back, live_in});
      if (inserted) return;
      SlotBinding& b = it->second;
      // A back edge and its initial-value live-in may share a slot.
      const bool compatible = (b.from_back_edge && live_in && !b.from_live_in) ||
                              (b.from_live_in && back && !b.from_back_edge);
      if (!compatible) {
        throw ParseError(ErrorCode::DuplicateSlotBinding, line_no, at.column,
                         "node " + std::to_string(node) + " slot " + std::to_string(slot) +
                             " is already bound");
      }
      b.from_back_edge = b.from_back_edge || back;
      b.from_live_in = b.from_live_in || live_in;
    };

    const std::string_view kw = toks[0].text;
    if (kw == "node") {
      if (toks.size() < 3) fail(eol_col, "'node' expects an id and a kind");
      const auto id = integer(toks[1], "node id");
      const auto op = parse_op(toks[2].text);
      if (!op) fail(toks[2].column, "unknown node kind '" + std::string(toks[2].text) + "'");
      if (!node_ids.insert(static_cast<NodeId>(id)).second) {
        fail(toks[1].column, "duplicate node id " + std::to_string(id));
      }
      Node n{static_cast<NodeId>(id), *op, 0, false};
      if (*op == Op::Const) {
        arg_count(3, 3);
        n.const_value = value(toks[3], &n.const_is_float);
      } else {
        arg_count(2, 2);
      }
      g.nodes.push_back(n);
    } else if (kw == "edge" || kw == "back") {
      const bool back = kw == "back";
      arg_count(back ? 4 : 3, back ? 4 : 3);
      Edge e;
      e.src = node_ref(toks[1]);
      e.dst = node_ref(toks[2]);
      e.slot = static_cast<int>(integer(toks[3], "slot"));
      e.kind = back ? EdgeKind::Back : EdgeKind::Intra;
      e.diff = back ? static_cast<int>(integer(toks[4], "diff")) : 0;
      if (back && e.diff < 1) fail(toks[4].column, "diff must be >= 1");
      bind(e.dst, e.slot, back, false, toks[3]);
      g.edges.push_back(e);
    } else if (kw == "livein") {
      arg_count(4, std::numeric_limits<std::size_t>::max() - 1);
      LiveIn li;
      li.name = std::string(toks[1].text);
      if (!live_in_names.insert(li.name).second) fail(toks[1].column, "duplicate live-in '" + li.name + "'");
      li.node = node_ref(toks[2]);
      li.slot = static_cast<int>(integer(toks[3], "slot"));
      for (std::size_t i = 4; i < toks.size(); ++i) li.values.push_back(value(toks[i]));
      bind(li.node, li.slot, false, true, toks[3]);
      g.live_ins.push_back(std::move(li));
    } else if (kw == "liveout") {
      arg_count(1, 1);
      g.live_outs.push_back(node_ref(toks[1]));
    } else if (kw == "mem") {
      arg_count(2, 2);
      const Value addr = value(toks[1]);
      if (!g.memory.emplace(addr, value(toks[2])).second) {
        fail(toks[1].column, "duplicate memory address " + std::to_string(addr));
      }
    } else {
      fail(toks[0].column, "unknown declaration '" + std::string(kw) + "'");
    }
  }

  for (const auto& r : refs) {
    if (!node_ids.count(r.id)) {
      throw ParseError(ErrorCode::DanglingReference, r.line, r.column,
                       "reference to undefined node " + std::to_string(r.id));
    }
  }
  sort_nodes(g);
  check_graph(g);
  return g;
}

std::string print_dfg(const DataflowGraph& g) {
  std::ostringstream os;
  for (const auto& n : g.nodes) {
    os << "node " << n.id << ' ' << op_name(n.op);
    if (n.op == Op::Const) {
      os << ' ';
      if (n.const_is_float) {
        os << format_float(as_double(n.const_value));
      } else {
        os << n.const_value;
      }
    }
    os << '\n';
  }
  for (const auto& e : g.edges) {
    if (e.is_back()) {
      os << "back " << e.src << ' ' << e.dst << ' ' << e.slot << ' ' << e.diff << '\n';
    } else {
      os << "edge " << e.src << ' ' << e.dst << ' ' << e.slot << '\n';
    }
  }
  for (const auto& li : g.live_ins) {
    os << "livein " << li.name << ' ' << li.node << ' ' << li.slot;
    for (Value v : li.values) os << ' ' << v;
    os << '\n';
  }
  for (NodeId id : g.live_outs) os << "liveout " << id << '\n';
  for (const auto& [addr, v] : g.memory) os << "mem " << addr << ' ' << v << '\n';
  return os.str();
}

namespace {

using nlohmann::json;

Value json_value(const json& j, bool* is_float = nullptr) {
  if (is_float != nullptr) *is_float = false;
  if (j.is_number_integer()) return j.get<Value>();
  if (j.is_number_float()) {
    if (is_float != nullptr) *is_float = true;
    return from_double(j.get<double>());
  }
  if (j.is_string()) {
    if (auto v = parse_value(j.get<std::string>(), is_float)) return *v;
  }
  throw Error(ErrorCode::Syntax, "expected a value literal, got " + j.dump());
}

template <typename T>
T field(const json& obj, const char* key) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw Error(ErrorCode::Syntax, std::string("missing field '") + key + "' in " + obj.dump());
  }
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::Syntax, std::string("field '") + key + "': " + ex.what());
  }
}

const json& array_or_empty(const json& doc, const char* key) {
  static const json empty = json::array();
  if (!doc.contains(key)) return empty;
  if (!doc.at(key).is_array()) throw Error(ErrorCode::Syntax, std::string("'") + key + "' must be an array");
  return doc.at(key);
}

}  // namespace

DataflowGraph parse_dfg_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& ex) {
    // Map the byte offset onto line/column.
    const std::size_t off = std::min<std::size_t>(ex.byte, text.size());
    int line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < off; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ParseError(ErrorCode::Syntax, line, col, ex.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::Syntax, "top-level JSON value must be an object");

  DataflowGraph g;
  std::set<NodeId> ids;
  for (const auto& jn : array_or_empty(doc, "node")) {
    Node n;
    n.id = field<NodeId>(jn, "id");
    const auto kind = field<std::string>(jn, "kind");
    const auto op = parse_op(kind);
    if (!op) throw Error(ErrorCode::Syntax, "unknown node kind '" + kind + "'");
    n.op = *op;
    if (n.op == Op::Const) {
      if (!jn.contains("value")) throw Error(ErrorCode::Syntax, "const node " + std::to_string(n.id) + " needs a value");
      n.const_value = json_value(jn.at("value"), &n.const_is_float);
    }
    if (!ids.insert(n.id).second) throw Error(ErrorCode::Syntax, "duplicate node id " + std::to_string(n.id));
    g.nodes.push_back(n);
  }
  auto check_ref = [&](NodeId id) {
    if (!ids.count(id)) {
      throw Error(ErrorCode::DanglingReference, "reference to undefined node " + std::to_string(id));
    }
  };
  // Edges are read before live-ins, so a live-in may only join a back edge.
  std::map<std::pair<NodeId, int>, int> edge_bound;
  std::set<std::pair<NodeId, int>> back_slots, live_in_slots;
  auto bind = [&](NodeId node, int slot, bool back, bool live_in) {
    const std::pair<NodeId, int> key{node, slot};
    const bool dup = live_in ? (live_in_slots.count(key) || (edge_bound[key] > 0 && !back_slots.count(key)))
                             : edge_bound[key] > 0;
    if (dup) {
      throw Error(ErrorCode::DuplicateSlotBinding,
                  "node " + std::to_string(node) + " slot " + std::to_string(slot) + " is already bound");
    }
    if (live_in) {
      live_in_slots.insert(key);
    } else {
      ++edge_bound[key];
      if (back) back_slots.insert(key);
    }
  };
  for (const char* key : {"edge", "back"}) {
    const bool back = std::string_view(key) == "back";
    for (const auto& je : array_or_empty(doc, key)) {
      Edge e;
      e.src = field<NodeId>(je, "src");
      e.dst = field<NodeId>(je, "dst");
      e.slot = field<int>(je, "slot");
      e.kind = back ? EdgeKind::Back : EdgeKind::Intra;
      e.diff = back ? field<int>(je, "diff") : 0;
      check_ref(e.src);
      check_ref(e.dst);
      bind(e.dst, e.slot, back, false);
      g.edges.push_back(e);
    }
  }
  for (const auto& jl : array_or_empty(doc, "livein")) {
    LiveIn li;
    li.name = field<std::string>(jl, "name");
    li.node = field<NodeId>(jl, "node");
    li.slot = field<int>(jl, "slot");
    check_ref(li.node);
    if (!jl.contains("values") || !jl.at("values").is_array()) {
      throw Error(ErrorCode::Syntax, "live-in '" + li.name + "' needs a values array");
    }
    for (const auto& v : jl.at("values")) li.values.push_back(json_value(v));
    bind(li.node, li.slot, false, true);
    g.live_ins.push_back(std::move(li));
  }
  for (const auto& jo : array_or_empty(doc, "liveout")) {
    const auto id = jo.is_object() ? field<NodeId>(jo, "node") : jo.get<NodeId>();
    check_ref(id);
    g.live_outs.push_back(id);
  }
  for (const auto& jm : array_or_empty(doc, "mem")) {
    const Value addr = json_value(jm.at("addr"));
    if (!g.memory.emplace(addr, json_value(jm.at("value"))).second) {
      throw Error(ErrorCode::Syntax, "duplicate memory address " + std::to_string(addr));
    }
  }
  sort_nodes(g);
  check_graph(g);
  return g;
}

std::string to_json(const DataflowGraph& g) {
  json doc;
  doc["node"] = json::array();
  for (const auto& n : g.nodes) {
    json jn{{"id", n.id}, {"kind", op_name(n.op)}};
    if (n.op == Op::Const) {
      if (n.const_is_float) {
        jn["value"] = as_double(n.const_value);
      } else {
        jn["value"] = n.const_value;
      }
    }
    doc["node"].push_back(jn);
  }
  doc["edge"] = json::array();
  doc["back"] = json::array();
  for (const auto& e : g.edges) {
    if (e.is_back()) {
      doc["back"].push_back({{"src", e.src}, {"dst", e.dst}, {"slot", e.slot}, {"diff", e.diff}});
    } else {
      doc["edge"].push_back({{"src", e.src}, {"dst", e.dst}, {"slot", e.slot}});
    }
  }
  doc["livein"] = json::array();
  for (const auto& li : g.live_ins) {
    doc["livein"].push_back({{"name", li.name}, {"node", li.node}, {"slot", li.slot}, {"values", li.values}});
  }
  doc["liveout"] = g.live_outs;
  doc["mem"] = json::array();
  for (const auto& [addr, v] : g.memory) doc["mem"].push_back({{"addr", addr}, {"value", v}});
  return doc.dump(2) + "\n";
}

DataflowGraph load_dfg(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  return path.extension() == ".json" ? parse_dfg_json(text) : parse_dfg(text);
}

}  // namespace drcgra::ir
