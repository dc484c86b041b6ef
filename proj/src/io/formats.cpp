#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "nsm/error.hpp"
#include "nsm/io.hpp"

namespace nsm {

namespace {

struct Record {
  std::size_t line = 0;
  std::vector<std::string> words;              // positional fields, keyword first
  std::map<std::string, std::string> attrs;    // key=value fields
};

class Reader {
 public:
  Reader(std::string_view text, std::string source) : source_(std::move(source)) {
    std::size_t line = 0, pos = 0;
    while (pos <= text.size()) {
      const auto end = std::min(text.find('\n', pos), text.size());
      ++line;
      std::string_view body = text.substr(pos, end - pos);
      if (auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
      Record r;
      r.line = line;
      std::istringstream in{std::string(body)};
      std::string tok;
      while (in >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) {
          if (!r.attrs.empty()) fail(r, "positional field '" + tok + "' after attributes");
          r.words.push_back(tok);
        } else {
          const std::string key = tok.substr(0, eq);
          if (key.empty()) fail(r, "attribute without a name");
          if (!r.attrs.emplace(key, tok.substr(eq + 1)).second) fail(r, "duplicate attribute '" + key + "'");
        }
      }
      if (!r.words.empty()) records_.push_back(std::move(r));
      else if (!r.attrs.empty()) fail(r, "record has no keyword");
      pos = end + 1;
    }
  }

  const std::vector<Record>& records() const { return records_; }

  [[noreturn]] void fail(const Record& r, const std::string& msg) const {
    throw ValidationError(source_ + ":" + std::to_string(r.line) + ": " + msg);
  }

  double number(const Record& r, const std::string& text, const std::string& what) const {
    double v = 0.0;
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    if (!text.empty() && *first == '+') ++first;
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last) fail(r, "bad number '" + text + "' for " + what);
    return v;
  }

  long integer(const Record& r, const std::string& text, const std::string& what) const {
    long v = 0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size())
      fail(r, "bad integer '" + text + "' for " + what);
    return v;
  }

  bool flag(const Record& r, const std::string& text, const std::string& what) const {
    if (text == "on" || text == "true" || text == "yes") return true;
    if (text == "off" || text == "false" || text == "no") return false;
    fail(r, "expected on/off for " + what + ", got '" + text + "'");
  }

  std::pair<double, double> pair(const Record& r, const std::string& text, const std::string& what) const {
    const auto comma = text.find(',');
    if (comma == std::string::npos || text.find(',', comma + 1) != std::string::npos)
      fail(r, what + " needs two comma-separated numbers");
    return {number(r, text.substr(0, comma), what), number(r, text.substr(comma + 1), what)};
  }

  std::vector<std::string> list(const std::string& text) const {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const auto end = std::min(text.find(',', pos), text.size());
      if (end > pos) out.push_back(text.substr(pos, end - pos));
      pos = end + 1;
    }
    return out;
  }

  // Rejects attributes outside `allowed`; keys with a trailing '.' match a prefix.
  void only(const Record& r, std::initializer_list<std::string_view> allowed) const {
    for (const auto& [k, v] : r.attrs) {
      const bool ok = std::any_of(allowed.begin(), allowed.end(), [&](std::string_view a) {
        return a.back() == '.' ? k.rfind(a, 0) == 0 && k.size() > a.size() : k == a;
      });
      if (!ok) fail(r, "unknown attribute '" + k + "' for " + r.words[0]);
    }
  }

 private:
  std::string source_;
  std::vector<Record> records_;
};

const std::string* attr(const Record& r, const std::string& key) {
  auto it = r.attrs.find(key);
  return it == r.attrs.end() ? nullptr : &it->second;
}

std::string bounds_text(const Bounds& b) { return format_double(b.lower) + "," + format_double(b.upper); }

std::string join(const std::vector<std::string>& v, char sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? std::string(1, sep) : "") + v[i];
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// ---- graph ----

GraphSpec parse_graph(std::string_view text, const std::string& source) {
  Reader in(text, source);
  GraphSpec g;
  std::set<std::string> seen;
  for (const auto& r : in.records()) {
    const auto& kw = r.words[0];
    NodeSpec n;
    if (kw == "prop") {
      if (r.words.size() != 2) in.fail(r, "prop needs exactly one id");
      in.only(r, {"bounds"});
    } else if (kw == "op") {
      if (r.words.size() < 4) in.fail(r, "op needs an id, an operator and operands");
      in.only(r, {"bounds", "j", "class"});
      try {
        n.op = op_kind_from_string(r.words[2]);
      } catch (const ValidationError& e) {
        in.fail(r, e.what());
      }
      n.operands.assign(r.words.begin() + 3, r.words.end());
    } else {
      in.fail(r, "unknown record '" + kw + "' (expected prop or op)");
    }
    n.id = r.words[1];
    if (!seen.insert(n.id).second) in.fail(r, "duplicate node '" + n.id + "'");
    if (auto* b = attr(r, "bounds")) {
      auto [l, u] = in.pair(r, *b, "bounds");
      n.bounds = Bounds{l, u};
    }
    if (auto* j = attr(r, "j")) {
      auto [l, u] = in.pair(r, *j, "j");
      n.j = JRange{l, u};
    }
    if (auto* c = attr(r, "class")) {
      try {
        n.correlation = correlation_from_string(*c);
      } catch (const ValidationError& e) {
        in.fail(r, e.what());
      }
      const auto j = correlation_to_j(*n.correlation);
      if (n.j && *n.j != j) in.fail(r, "j disagrees with class " + *c);
      n.j = j;
    }
    g.nodes.push_back(std::move(n));
  }
  for (std::size_t i = 0; i < g.nodes.size(); ++i)
    for (const auto& o : g.nodes[i].operands)
      if (!seen.count(o)) in.fail(in.records()[i], "unknown operand '" + o + "'");
  try {
    PlnnGraph::build(g);
  } catch (const ValidationError& e) {
    throw ValidationError(source + ": " + e.what());
  }
  return g;
}

std::string serialize_graph(const GraphSpec& spec) {
  std::string out;
  for (const auto& n : spec.nodes) {
    if (n.op) {
      out += "op " + n.id + " " + std::string(to_string(*n.op));
      for (const auto& o : n.operands) out += " " + o;
    } else {
      out += "prop " + n.id;
    }
    if (n.bounds) out += " bounds=" + bounds_text(*n.bounds);
    if (n.j) out += " j=" + format_double(n.j->lower) + "," + format_double(n.j->upper);
    if (n.correlation) out += " class=" + std::string(to_string(*n.correlation));
    out += "\n";
  }
  return out;
}

// ---- scenario ----

ScenarioSpec parse_scenario(std::string_view text, const std::string& source) {
  Reader in(text, source);
  ScenarioSpec s;
  bool header = false;
  for (const auto& r : in.records()) {
    const auto& kw = r.words[0];
    auto need = [&](std::size_t n) {
      if (r.words.size() != n) in.fail(r, kw + " takes " + std::to_string(n - 1) + " positional field(s)");
    };
    if (kw == "scenario") {
      if (header) in.fail(r, "second scenario record");
      header = true;
      need(2);
      in.only(r, {"load", "budget", "seed", "nominal_rate", "background_jobs", "background_tokens", "lookahead"});
      s.name = r.words[1];
      if (auto* v = attr(r, "load")) {
        try {
          s.load = load_level_from_string(*v);
        } catch (const ValidationError& e) {
          in.fail(r, e.what());
        }
      }
      if (auto* v = attr(r, "budget")) s.budget = static_cast<int>(in.integer(r, *v, "budget"));
      if (auto* v = attr(r, "seed")) s.seed = static_cast<std::uint64_t>(in.integer(r, *v, "seed"));
      if (auto* v = attr(r, "nominal_rate")) s.nominal_rate = in.number(r, *v, "nominal_rate");
      if (auto* v = attr(r, "background_jobs")) s.background_jobs = static_cast<int>(in.integer(r, *v, "background_jobs"));
      if (auto* v = attr(r, "background_tokens")) s.background_tokens = static_cast<int>(in.integer(r, *v, "background_tokens"));
      if (auto* v = attr(r, "lookahead")) s.full_lookahead = in.flag(r, *v, "lookahead");
    } else if (kw == "pe") {
      need(2);
      in.only(r, {"type", "rate", "rate."});
      PeSpec pe;
      pe.id = r.words[1];
      pe.type = attr(r, "type") ? *attr(r, "type") : pe.id;
      for (const auto& [k, v] : r.attrs) {
        if (k == "rate") pe.rates["default"] = in.number(r, v, "rate");
        else if (k.rfind("rate.", 0) == 0) pe.rates[k.substr(5)] = in.number(r, v, k);
      }
      if (pe.rates.empty()) in.fail(r, "pe '" + pe.id + "' has no rate");
      s.pes.push_back(std::move(pe));
    } else if (kw == "job") {
      need(2);
      in.only(r, {"arrival", "amax", "priority"});
      JobDag j;
      j.id = r.words[1];
      if (auto* v = attr(r, "arrival")) j.arrival = in.number(r, *v, "arrival");
      if (auto* v = attr(r, "amax")) j.amax = static_cast<int>(in.integer(r, *v, "amax"));
      if (auto* v = attr(r, "priority")) j.priority = in.flag(r, *v, "priority");
      s.jobs.push_back(std::move(j));
    } else if (kw == "task") {
      need(3);
      in.only(r, {"kind", "work", "subdeadline", "parents", "pe"});
      auto job = std::find_if(s.jobs.begin(), s.jobs.end(), [&](const JobDag& j) { return j.id == r.words[1]; });
      if (job == s.jobs.end()) in.fail(r, "task for unknown job '" + r.words[1] + "' (declare the job first)");
      TaskSpec t;
      t.id = r.words[2];
      if (auto* v = attr(r, "kind")) t.kind = *v;
      if (!attr(r, "work")) in.fail(r, "task '" + t.id + "' needs work=");
      t.work = in.number(r, *attr(r, "work"), "work");
      t.subdeadline = attr(r, "subdeadline") ? in.number(r, *attr(r, "subdeadline"), "subdeadline") : t.work;
      if (auto* v = attr(r, "parents")) t.parents = in.list(*v);
      if (auto* v = attr(r, "pe")) t.pe = *v;
      job->tasks.push_back(std::move(t));
    } else if (kw == "observe") {
      need(2);
      in.only(r, {"bounds", "agent", "staleness"});
      Emission e;
      e.node = r.words[1];
      if (!attr(r, "bounds")) in.fail(r, "observe needs bounds=");
      auto [l, u] = in.pair(r, *attr(r, "bounds"), "bounds");
      e.bounds = {l, u};
      if (auto* v = attr(r, "agent")) e.agent = *v;
      if (auto* v = attr(r, "staleness")) e.staleness = in.number(r, *v, "staleness");
      s.observations.push_back(std::move(e));
    } else {
      in.fail(r, "unknown record '" + kw + "'");
    }
  }
  if (!header) throw ValidationError(source + ": missing scenario record");
  try {
    s.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(source + ": " + e.what());
  }
  return s;
}

std::string serialize_scenario(const ScenarioSpec& s) {
  std::string out = "scenario " + s.name + " load=" + std::string(to_string(s.load)) +
                    " budget=" + std::to_string(s.budget) + " seed=" + std::to_string(s.seed) +
                    " nominal_rate=" + format_double(s.nominal_rate);
  if (s.background_jobs) out += " background_jobs=" + std::to_string(*s.background_jobs);
  out += " background_tokens=" + std::to_string(s.background_tokens);
  out += std::string(" lookahead=") + (s.full_lookahead ? "on" : "off") + "\n";
  for (const auto& pe : s.pes) {
    out += "pe " + pe.id + " type=" + pe.type;
    for (const auto& [kind, rate] : pe.rates)
      out += (kind == "default" ? " rate=" : " rate." + kind + "=") + format_double(rate);
    out += "\n";
  }
  for (const auto& j : s.jobs) {
    out += "job " + j.id + " arrival=" + format_double(j.arrival) + " amax=" + std::to_string(j.amax) +
           " priority=" + (j.priority ? "on" : "off") + "\n";
    for (const auto& t : j.tasks) {
      out += "task " + j.id + " " + t.id + " kind=" + t.kind + " work=" + format_double(t.work) +
             " subdeadline=" + format_double(t.subdeadline);
      if (!t.parents.empty()) out += " parents=" + join(t.parents, ',');
      if (t.pe) out += " pe=" + *t.pe;
      out += "\n";
    }
  }
  for (const auto& e : s.observations) {
    out += "observe " + e.node + " bounds=" + bounds_text(e.bounds);
    if (e.agent) out += " agent=" + *e.agent;
    if (e.staleness != 0.0) out += " staleness=" + format_double(e.staleness);
    out += "\n";
  }
  return out;
}

// ---- weights ----

RuleSet parse_weights(std::string_view text, const std::string& source) {
  Reader in(text, source);
  RuleSet rs;
  std::vector<ActionClass> columns;
  std::set<std::size_t> rows;
  bool have_bins = false, have_bias = false;
  for (const auto& r : in.records()) {
    const auto& kw = r.words[0];
    if (!r.attrs.empty()) in.fail(r, "weights records take no attributes");
    if (kw == "weights") {
      if (!columns.empty()) in.fail(r, "second weights header");
      for (std::size_t i = 1; i < r.words.size(); ++i) {
        try {
          columns.push_back(action_class_from_string(r.words[i]));
        } catch (const ValidationError& e) {
          in.fail(r, e.what());
        }
      }
      std::set<ActionClass> uniq(columns.begin(), columns.end());
      if (columns.size() != kNumActionClasses || uniq.size() != kNumActionClasses)
        in.fail(r, "header must name each action class once");
      continue;
    }
    if (columns.empty()) in.fail(r, "weights header must come first");
    if (kw == "bins") {
      if (have_bins) in.fail(r, "second bins record");
      have_bins = true;
      rs.bins.clear();
      for (std::size_t i = 1; i < r.words.size(); ++i)
        rs.bins.push_back(static_cast<int>(in.integer(r, r.words[i], "bin")));
      continue;
    }
    if (r.words.size() != 1 + kNumActionClasses)
      in.fail(r, "row '" + kw + "' needs one value per action class");
    std::vector<double> vals;
    for (std::size_t i = 1; i < r.words.size(); ++i) vals.push_back(in.number(r, r.words[i], kw));
    if (kw == "bias") {
      if (have_bias) in.fail(r, "second bias row");
      have_bias = true;
      for (std::size_t c = 0; c < columns.size(); ++c) rs.at(columns[c]).bias = vals[c];
      continue;
    }
    const auto lit = literal_from_name(kw);
    if (!lit) in.fail(r, "unknown literal '" + kw + "'");
    if (!rows.insert(*lit).second) in.fail(r, "duplicate row '" + kw + "'");
    for (std::size_t c = 0; c < columns.size(); ++c) rs.at(columns[c]).weights[*lit] = vals[c];
  }
  if (columns.empty()) throw ValidationError(source + ": missing weights header");
  if (rows.size() != kNumLiterals) throw ValidationError(source + ": every literal needs a row");
  for (std::size_t c = 0; c < kNumActionClasses; ++c) rs.templates[c].action = static_cast<ActionClass>(c);
  try {
    rs.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(source + ": " + e.what());
  }
  return rs;
}

std::string serialize_weights(const RuleSet& rs) {
  // Columns padded by code point so the negation sign lines up.
  auto row = [](const std::string& head, const std::array<std::string, kNumActionClasses>& cells) {
    std::string line = head;
    std::size_t cps = 0;
    for (unsigned char ch : head) cps += (ch & 0xC0) != 0x80;
    line.append(24 - std::min<std::size_t>(cps, 23), ' ');
    for (std::size_t c = 0; c < cells.size(); ++c) {
      line += cells[c];
      if (c + 1 < cells.size()) line.append(24 - std::min<std::size_t>(cells[c].size(), 23), ' ');
    }
    return line + "\n";
  };
  std::array<std::string, kNumActionClasses> cells;
  for (std::size_t c = 0; c < kNumActionClasses; ++c) cells[c] = to_string(static_cast<ActionClass>(c));
  std::string out = row("weights", cells);
  for (std::size_t l = 0; l < kNumLiterals; ++l) {
    for (std::size_t c = 0; c < kNumActionClasses; ++c) cells[c] = format_double(rs.templates[c].weights[l]);
    out += row(literal_name(l), cells);
  }
  for (std::size_t c = 0; c < kNumActionClasses; ++c) cells[c] = format_double(rs.templates[c].bias);
  out += row("bias", cells);
  out += "bins";
  for (int b : rs.bins) out += " " + std::to_string(b);
  return out + "\n";
}

// ---- dynamic policy ----

DynamicPolicyConfig parse_dynamic_config(std::string_view text, const std::string& source,
                                         const std::string& base_dir) {
  Reader in(text, source);
  const auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return (path.is_absolute() ? path : std::filesystem::path(base_dir) / path).string();
  };
  std::optional<DynamicPolicyConfig> out;
  for (const auto& r : in.records()) {
    if (r.words[0] != "dynamic") in.fail(r, "unknown record '" + r.words[0] + "'");
    if (out) in.fail(r, "duplicate dynamic record");
    if (r.words.size() != 1) in.fail(r, "dynamic takes only attributes");
    in.only(r, {"graph", "rules", "query", "tau", "refresh", "use_j"});
    if (!attr(r, "graph") || !attr(r, "rules")) in.fail(r, "dynamic needs graph= and rules=");
    DynamicPolicyConfig c;
    c.graph = load_graph(resolve(*attr(r, "graph")));
    c.rules = load_weights(resolve(*attr(r, "rules")));
    if (auto* v = attr(r, "query")) c.gate.query = *v;
    if (auto* v = attr(r, "tau")) c.gate.tau = in.number(r, *v, "tau");
    if (auto* v = attr(r, "refresh")) c.refresh = static_cast<int>(in.integer(r, *v, "refresh"));
    if (auto* v = attr(r, "use_j")) c.gate.infer.use_j = in.flag(r, *v, "use_j");
    try {
      c.validate();
    } catch (const ValidationError& e) {
      in.fail(r, e.what());
    }
    out = std::move(c);
  }
  if (!out) throw ValidationError(source + ": no dynamic record");
  return *out;
}

// ---- files ----

std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError(path + ": cannot open");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw RuntimeError(path + ": cannot open for writing");
  f << text;
  if (!f) throw RuntimeError(path + ": write failed");
}

GraphSpec load_graph(const std::string& path) { return parse_graph(read_text_file(path), path); }
ScenarioSpec load_scenario(const std::string& path) { return parse_scenario(read_text_file(path), path); }
RuleSet load_weights(const std::string& path) { return parse_weights(read_text_file(path), path); }

DynamicPolicyConfig load_dynamic_config(const std::string& path) {
  return parse_dynamic_config(read_text_file(path), path, std::filesystem::path(path).parent_path().string());
}

}  // namespace nsm
