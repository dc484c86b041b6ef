#include <cstdio>
#include <sstream>

#include "nsm/plnn.hpp"

namespace nsm {

namespace {

std::string fmt4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string to_dot(const PlnnGraph& graph, const InferenceResult& result) {
  std::ostringstream os;
  os << "digraph plnn {\n  rankdir=BT;\n  node [fontname=\"Helvetica\"];\n";
  for (auto i : graph.order()) {
    const auto& n = graph.nodes()[i];
    const auto it = result.nodes.find(n.id);
    const NodeResult r = it != result.nodes.end() ? it->second : NodeResult{n.bounds};
    std::string label = n.id + " [" + fmt4(r.bounds.lower) + ", " + fmt4(r.bounds.upper) + "]";
    if (n.op) label += "\\n" + std::string(to_string(*n.op));
    if (r.arrested) label += "\\ncontradiction " + fmt4(r.extent);
    os << "  " << quoted(n.id) << " [label=" << quoted(label);
    os << (n.op ? ", shape=box" : ", shape=ellipse");
    if (n.hidden) os << ", style=dashed";
    if (r.arrested) os << ", style=filled, fillcolor=\"#f4a6a6\", color=red";
    os << "];\n";
  }
  for (auto i : graph.order()) {
    const auto& n = graph.nodes()[i];
    for (auto o : n.operands)
      os << "  " << quoted(graph.nodes()[o].id) << " -> " << quoted(n.id) << ";\n";
    if (n.op == OpKind::Conditional)
      os << "  " << quoted(graph.nodes()[n.joint].id) << " -> " << quoted(n.id)
         << " [style=dashed];\n";
  }
  os << "}\n";
  return os.str();
}

std::string trace_to_text(const std::vector<TraceRecord>& trace) {
  std::ostringstream os;
  for (const auto& r : trace) {
    os << "trace iter=" << r.iteration << " node=" << r.node
       << " dir=" << (r.direction == Direction::Up ? "up" : "down") << " rule=" << r.rule
       << " before=" << fmt17(r.before.lower) << ',' << fmt17(r.before.upper)
       << " after=" << fmt17(r.after.lower) << ',' << fmt17(r.after.upper) << '\n';
  }
  return os.str();
}

}  // namespace nsm
