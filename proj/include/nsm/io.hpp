#pragma once

// Text formats for graphs, scenarios and rule weights. One record per line,
// `#` starts a comment, fields are whitespace separated and attributes are
// key=value. Errors carry "source:line:" prefixes.

#include <string>
#include <string_view>

#include "nsm/pipeline.hpp"
#include "nsm/plnn.hpp"
#include "nsm/rules.hpp"
#include "nsm/sim.hpp"

namespace nsm {

GraphSpec parse_graph(std::string_view text, const std::string& source = "<graph>");
std::string serialize_graph(const GraphSpec& spec);

ScenarioSpec parse_scenario(std::string_view text, const std::string& source = "<scenario>");
std::string serialize_scenario(const ScenarioSpec& spec);

// Rows are literals, columns are action classes.
RuleSet parse_weights(std::string_view text, const std::string& source = "<weights>");
std::string serialize_weights(const RuleSet& rs);

// A single `dynamic graph=FILE rules=FILE [query=] [tau=] [refresh=]
// [use_j=on|off]` record. Relative paths resolve against `base_dir`.
DynamicPolicyConfig parse_dynamic_config(std::string_view text, const std::string& source = "<dynamic>",
                                         const std::string& base_dir = ".");

std::string read_text_file(const std::string& path);  // throws ValidationError
void write_text_file(const std::string& path, const std::string& text);  // throws RuntimeError

GraphSpec load_graph(const std::string& path);
ScenarioSpec load_scenario(const std::string& path);
RuleSet load_weights(const std::string& path);
DynamicPolicyConfig load_dynamic_config(const std::string& path);

// Shortest text that reads back to the same double.
std::string format_double(double v);

}  // namespace nsm
