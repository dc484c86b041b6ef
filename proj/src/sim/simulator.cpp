#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>

#include "nsm/error.hpp"
#include "nsm/sim.hpp"

namespace nsm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTimeEps = 1e-9;

// Event times land on rational boundaries; rewards are summed over whole ticks.
double tick_ceil(double t) { return std::ceil(t - kTimeEps); }

}  // namespace

double PeSpec::rate_for(const std::string& kind) const {
  if (auto it = rates.find(kind); it != rates.end()) return it->second;
  if (auto it = rates.find("default"); it != rates.end()) return it->second;
  return 0.0;
}

std::string_view to_string(LoadLevel l) {
  switch (l) {
    case LoadLevel::Light: return "light";
    case LoadLevel::Medium: return "medium";
    case LoadLevel::Heavy: return "heavy";
  }
  return "?";
}

LoadLevel load_level_from_string(std::string_view name) {
  if (name == "light") return LoadLevel::Light;
  if (name == "medium") return LoadLevel::Medium;
  if (name == "heavy") return LoadLevel::Heavy;
  throw ValidationError("unknown load level '" + std::string(name) + "'");
}

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::JobArrived: return "JobArrived";
    case EventKind::TaskCompleted: return "TaskCompleted";
    case EventKind::JobCompleted: return "JobCompleted";
  }
  return "?";
}

int ScenarioSpec::effective_background_jobs() const {
  if (background_jobs) return *background_jobs;
  switch (load) {
    case LoadLevel::Heavy: return 2;
    case LoadLevel::Medium: return 1;
    case LoadLevel::Light: return 0;
  }
  return 0;
}

int ScenarioSpec::available_tokens() const {
  return std::max(0, budget - effective_background_jobs() * background_tokens);
}

void ScenarioSpec::validate() const {
  if (budget <= 0 || budget > 100) throw ValidationError("scenario budget must be in (0,100]");
  if (background_tokens < 0) throw ValidationError("background tokens must be nonnegative");
  if (effective_background_jobs() < 0) throw ValidationError("background jobs must be nonnegative");
  if (available_tokens() <= 0) throw ValidationError("background load leaves no tokens");
  if (!(nominal_rate > 0.0)) throw ValidationError("nominal rate must be positive");
  if (pes.empty()) throw ValidationError("scenario has no processing elements");
  std::set<std::string> pe_ids;
  for (const auto& pe : pes) {
    if (pe.id.empty()) throw ValidationError("PE without id");
    if (!pe_ids.insert(pe.id).second) throw ValidationError("duplicate PE '" + pe.id + "'");
    if (pe.rates.empty()) throw ValidationError("PE '" + pe.id + "' has no rates");
    for (const auto& [kind, r] : pe.rates)
      if (!(r > 0.0) || !std::isfinite(r))
        throw ValidationError("PE '" + pe.id + "' rate for '" + kind + "' must be positive");
  }
  if (jobs.empty()) throw ValidationError("scenario has no jobs");
  std::set<std::string> job_ids;
  for (const auto& job : jobs) {
    if (!job_ids.insert(job.id).second) throw ValidationError("duplicate job '" + job.id + "'");
    if (!(job.arrival >= 0.0)) throw ValidationError("job '" + job.id + "' arrival must be >= 0");
    if (job.amax < 10 || job.amax > 100)
      throw ValidationError("job '" + job.id + "' amax must be in [10,100]");
    if (job.tasks.empty()) throw ValidationError("job '" + job.id + "' has no tasks");
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < job.tasks.size(); ++i)
      if (!index.emplace(job.tasks[i].id, i).second)
        throw ValidationError("duplicate task '" + job.tasks[i].id + "' in job '" + job.id + "'");
    for (const auto& t : job.tasks) {
      const std::string where = "task '" + t.id + "' of job '" + job.id + "'";
      if (!(t.work > 0.0) || !std::isfinite(t.work)) throw ValidationError(where + ": work must be positive");
      if (!(t.subdeadline > 0.0)) throw ValidationError(where + ": sub-deadline must be positive");
      for (const auto& p : t.parents) {
        if (p == t.id) throw ValidationError(where + ": task is its own parent");
        if (!index.count(p)) throw ValidationError(where + ": unknown parent '" + p + "'");
      }
      if (t.pe) {
        auto it = std::find_if(pes.begin(), pes.end(), [&](const PeSpec& pe) { return pe.id == *t.pe; });
        if (it == pes.end()) throw ValidationError(where + ": unknown PE '" + *t.pe + "'");
        if (it->rate_for(t.kind) <= 0.0)
          throw ValidationError(where + ": PE '" + *t.pe + "' cannot run kind '" + t.kind + "'");
      } else if (std::none_of(pes.begin(), pes.end(),
                              [&](const PeSpec& pe) { return pe.rate_for(t.kind) > 0.0; })) {
        throw ValidationError(where + ": no PE runs kind '" + t.kind + "'");
      }
    }
    // Kahn's algorithm for acyclicity.
    std::vector<int> indeg(job.tasks.size(), 0);
    for (std::size_t i = 0; i < job.tasks.size(); ++i)
      indeg[i] = static_cast<int>(job.tasks[i].parents.size());
    std::vector<std::size_t> queue;
    for (std::size_t i = 0; i < indeg.size(); ++i)
      if (indeg[i] == 0) queue.push_back(i);
    if (queue.empty()) throw ValidationError("job '" + job.id + "' has no root task");
    std::size_t seen = 0;
    while (!queue.empty()) {
      const auto u = queue.back();
      queue.pop_back();
      ++seen;
      for (std::size_t v = 0; v < job.tasks.size(); ++v)
        for (const auto& p : job.tasks[v].parents)
          if (p == job.tasks[u].id && --indeg[v] == 0) queue.push_back(v);
    }
    if (seen != job.tasks.size()) throw ValidationError("job '" + job.id + "' has a cycle");
  }
  for (const auto& e : observations) {
    if (e.node.empty()) throw ValidationError("observation without node");
    if (!e.bounds.valid(0.0)) throw ValidationError("observation bounds for '" + e.node + "' malformed");
    if (!(e.staleness >= 0.0)) throw ValidationError("staleness must be nonnegative");
    if (e.agent && !pe_ids.count(*e.agent))
      throw ValidationError("observation for unknown agent '" + *e.agent + "'");
  }
}

Simulator::Simulator(ScenarioSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  for (std::size_t j = 0; j < spec_.jobs.size(); ++j) {
    const auto& job = spec_.jobs[j];
    job_first_.push_back(tasks_.size());
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < job.tasks.size(); ++i) index[job.tasks[i].id] = tasks_.size() + i;
    for (std::size_t i = 0; i < job.tasks.size(); ++i) {
      Task t;
      t.job = j;
      t.index = i;
      if (job.tasks[i].pe) t.pe = *agent_index(*job.tasks[i].pe);
      for (const auto& p : job.tasks[i].parents) t.parents.push_back(index.at(p));
      tasks_.push_back(std::move(t));
    }
  }
  // Ancestors and descendants: transitive closure over parent links.
  const std::size_t n = tasks_.size();
  std::vector<std::vector<char>> reach(n, std::vector<char>(n, 0));  // reach[a][b]: a is an ancestor of b
  for (std::size_t b = 0; b < n; ++b) {
    std::vector<std::size_t> stack(tasks_[b].parents.begin(), tasks_[b].parents.end());
    while (!stack.empty()) {
      const auto a = stack.back();
      stack.pop_back();
      if (reach[a][b]) continue;
      reach[a][b] = 1;
      for (auto p : tasks_[a].parents) stack.push_back(p);
    }
  }
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b)
      if (reach[a][b] || reach[b][a]) tasks_[a].relatives.push_back(b);

  const std::size_t m = spec_.pes.size();
  arrived_.assign(spec_.jobs.size(), false);
  job_done_.assign(spec_.jobs.size(), false);
  running_.assign(m, std::nullopt);
  requests_.assign(m, 0);
  effective_.assign(m, 0.0);
  fresh_dispatch_.assign(m, false);
  last_seen_.assign(m, 0.0);

  // Jobs arriving at the earliest arrival time start the episode.
  double first = kInf;
  for (const auto& job : spec_.jobs) first = std::min(first, job.arrival);
  clock_ = first;
  for (std::size_t j = 0; j < spec_.jobs.size(); ++j)
    if (spec_.jobs[j].arrival <= first) arrive(j);
  dispatch();
  std::fill(last_seen_.begin(), last_seen_.end(), clock_);
}

std::optional<std::size_t> Simulator::agent_index(const std::string& id) const {
  for (std::size_t i = 0; i < spec_.pes.size(); ++i)
    if (spec_.pes[i].id == id) return i;
  return std::nullopt;
}

bool Simulator::done() const {
  return std::all_of(job_done_.begin(), job_done_.end(), [](bool d) { return d; });
}

double Simulator::rate(std::size_t pe, const Task& t) const {
  return spec_.pes[pe].rate_for(spec_of(t).kind);
}

bool Simulator::parents_done(const Task& t) const {
  return std::all_of(t.parents.begin(), t.parents.end(),
                     [&](std::size_t p) { return tasks_[p].status == Status::Done; });
}

std::vector<std::size_t> Simulator::siblings(std::size_t task) const {
  std::vector<std::size_t> out;
  const auto& self = tasks_[task];
  for (std::size_t i = job_first_[self.job]; i < tasks_.size() && tasks_[i].job == self.job; ++i) {
    if (i == task || tasks_[i].status == Status::Done) continue;
    if (std::find(self.relatives.begin(), self.relatives.end(), i) != self.relatives.end()) continue;
    out.push_back(i);
  }
  return out;
}

std::optional<std::size_t> Simulator::current_task(std::size_t agent) const {
  if (running_[agent]) return running_[agent];
  for (std::size_t i = 0; i < tasks_.size(); ++i) {
    const auto& t = tasks_[i];
    if (t.pe == agent && arrived_[t.job] && t.status != Status::Done) return i;
  }
  return std::nullopt;
}

void Simulator::arrive(std::size_t job) {
  arrived_[job] = true;
  log_.push_back({clock_, EventKind::JobArrived, spec_.jobs[job].id, "", allocation_snapshot()});
}

void Simulator::dispatch() {
  // Newly ready tasks; unassigned ones go to the fastest idle PE, else to
  // the PE with the shortest queue.
  for (std::size_t i = 0; i < tasks_.size(); ++i) {
    auto& t = tasks_[i];
    if (!arrived_[t.job] || t.status != Status::Pending || !parents_done(t)) continue;
    t.status = Status::Ready;
    if (t.pe) continue;
    std::optional<std::size_t> best;
    auto key = [&](std::size_t p) {
      std::size_t queued = 0;
      for (const auto& o : tasks_)
        if (o.pe == p && (o.status == Status::Ready || o.status == Status::Running)) ++queued;
      return std::make_tuple(queued, -rate(p, t));
    };
    for (std::size_t p = 0; p < spec_.pes.size(); ++p) {
      if (rate(p, t) <= 0.0) continue;
      if (!best || key(p) < key(*best)) best = p;
    }
    t.pe = best;
  }
  for (std::size_t p = 0; p < spec_.pes.size(); ++p) {
    if (running_[p]) continue;
    for (std::size_t i = 0; i < tasks_.size(); ++i) {
      auto& t = tasks_[i];
      if (t.pe != p || t.status != Status::Ready) continue;
      t.status = Status::Running;
      t.start = clock_;
      running_[p] = i;
      fresh_dispatch_[p] = true;
      last_seen_[p] = clock_;
      break;
    }
  }
}

AgentObservation Simulator::observe(std::size_t agent) const {
  if (agent >= agent_count()) throw ValidationError("unknown agent");
  AgentObservation obs;
  obs.agent = agent;
  obs.agent_id = spec_.pes[agent].id;
  obs.time = clock_;
  obs.needs_decision = fresh_dispatch_[agent];
  obs.current_request = requests_[agent];

  const auto cur = current_task(agent);
  bool has_siblings = false;
  if (cur) {
    const auto& t = tasks_[*cur];
    const auto& ts = spec_of(t);
    obs.task = ts.id;
    obs.amax = spec_.jobs[t.job].amax;
    obs.guard.task_assigned = true;
    obs.guard.parents_completed = parents_done(t);
    obs.guard.task_active = t.status == Status::Running;
    obs.slack.self = {std::max(remaining(t), kTimeEps * ts.work), rate(agent, t), ts.subdeadline};
    for (auto s : siblings(*cur)) {
      const auto& st = tasks_[s];
      const auto& ss = spec_of(st);
      has_siblings = true;
      if (st.status == Status::Running) {
        obs.guard.sibling_active = true;
        ++obs.active_siblings;
      }
      obs.sibling_progress.emplace_back(ss.id, st.done_work / ss.work);
      // A sibling's PE is only known once it is ready, unless the scenario
      // grants full look-ahead.
      const bool known = st.pe && (st.status != Status::Pending || spec_.full_lookahead);
      const double r = known ? rate(*st.pe, st) : spec_.nominal_rate;
      // A sibling completing at this instant no longer competes for tokens.
      if (remaining(st) > kTimeEps * ss.work) obs.slack.siblings.push_back({remaining(st), r, ss.subdeadline});
    }
  }
  obs.valuation = PredicateValuation(obs.guard.task_assigned ? 1.0 : 0.0,
                                     obs.guard.parents_completed ? 1.0 : 0.0,
                                     has_siblings ? 1.0 : 0.0, 0.0);

  const double age = clock_ - last_seen_[agent];
  for (const auto& e : spec_.observations) {
    if (e.agent && *e.agent != obs.agent_id) continue;
    // An agent-specific record overrides the shared one.
    if (!e.agent && obs.env.count(e.node)) continue;
    const double widen = e.staleness * age;
    obs.env[e.node] = {std::max(0.0, e.bounds.lower - widen), std::min(1.0, e.bounds.upper + widen)};
  }
  return obs;
}

void Simulator::request(std::size_t agent, int tokens) {
  if (agent >= agent_count()) throw ValidationError("unknown agent");
  int amax = 100;
  if (const auto cur = current_task(agent)) amax = spec_.jobs[tasks_[*cur].job].amax;
  if (tokens < 0 || tokens > amax)
    throw ValidationError("request " + std::to_string(tokens) + " for " + spec_.pes[agent].id +
                          " outside [0," + std::to_string(amax) + "]");
  requests_[agent] = tokens;
}

void Simulator::apply_allocations() {
  double total = 0.0;
  for (std::size_t p = 0; p < agent_count(); ++p)
    if (running_[p]) total += requests_[p];
  const double budget = spec_.available_tokens();
  const double scale = total > budget ? budget / total : 1.0;
  for (std::size_t p = 0; p < agent_count(); ++p)
    effective_[p] = running_[p] ? requests_[p] * scale : 0.0;
}

double Simulator::effective_tokens(std::size_t agent) const { return effective_.at(agent); }

void Simulator::record_allocations() {
  const auto snap = allocation_snapshot();
  for (auto it = log_.rbegin(); it != log_.rend() && it->time == clock_; ++it) it->allocations = snap;
}

std::map<std::string, double> Simulator::allocation_snapshot() const {
  std::map<std::string, double> out;
  for (std::size_t p = 0; p < spec_.pes.size(); ++p) out[spec_.pes[p].id] = effective_[p];
  return out;
}

double sibling_reward_term(double h_self, double h_sibling) {
  const double sum = h_self + h_sibling;
  if (sum <= 0.0) return 0.25;
  return 0.25 - 0.25 * std::abs(h_self - h_sibling) / sum;
}

double solo_reward(double service_ticks, double fp) { return service_ticks * (fp - 0.99) * 0.25; }

double Simulator::per_step_reward(std::size_t agent) const {
  return per_step_reward_at(agent, tick_ceil(clock_));
}

double Simulator::per_step_reward_at(std::size_t agent, double tick) const {
  const auto cur = running_.at(agent);
  if (!cur) return 0.0;
  const auto& t = tasks_[*cur];
  // Fractional progress: share of the task's work done per tick.
  const double fp = rate(agent, t) * effective_[agent] / 100.0 / spec_of(t).work;
  const double h = spec_of(t).subdeadline * fp;
  bool any = false;
  double r = 0.0;
  for (auto s : siblings(*cur)) {
    const auto& st = tasks_[s];
    if (st.status != Status::Running) continue;
    any = true;
    const double fp_s = rate(*st.pe, st) * effective_[*st.pe] / 100.0 / spec_of(st).work;
    r += sibling_reward_term(h, spec_of(st).subdeadline * fp_s);
  }
  if (any) return r;
  return solo_reward(tick - tick_ceil(t.start), fp);
}

double Simulator::interval_reward(std::size_t agent, double until) const {
  double r = 0.0;
  for (double tick = tick_ceil(clock_) + 1; tick <= tick_ceil(until); tick += 1.0)
    r += per_step_reward_at(agent, tick);
  return r;
}

double Simulator::next_event_time() const {
  double when = kInf;
  for (std::size_t p = 0; p < agent_count(); ++p) {
    if (!running_[p]) continue;
    const auto& t = tasks_[*running_[p]];
    const double speed = rate(p, t) * effective_[p] / 100.0;
    if (speed > 0.0) when = std::min(when, clock_ + remaining(t) / speed);
  }
  for (std::size_t j = 0; j < spec_.jobs.size(); ++j)
    if (!arrived_[j]) when = std::min(when, spec_.jobs[j].arrival);
  return when;
}

SimEvent Simulator::step_to_next_event() {
  if (done()) throw RuntimeError("simulation already finished");
  std::optional<std::size_t> next;
  double when = kInf;
  for (std::size_t p = 0; p < agent_count(); ++p) {
    if (!running_[p]) continue;
    const auto& t = tasks_[*running_[p]];
    const double speed = rate(p, t) * effective_[p] / 100.0;
    if (speed <= 0.0) continue;
    const double at = clock_ + remaining(t) / speed;
    if (at < when || (at == when && spec_of(t).id < spec_of(tasks_[*next]).id)) {
      when = at;
      next = *running_[p];
    }
  }
  std::optional<std::size_t> arriving;
  for (std::size_t j = 0; j < spec_.jobs.size(); ++j)
    if (!arrived_[j] && spec_.jobs[j].arrival < when &&
        (!arriving || spec_.jobs[j].arrival < spec_.jobs[*arriving].arrival))
      arriving = j;
  if (!next && !arriving)
    throw RuntimeError("deadlock at t=" + std::to_string(clock_) +
                       ": no running task can progress and none is ready");
  const double target = arriving ? spec_.jobs[*arriving].arrival : when;
  const double dt = target - clock_;
  for (std::size_t p = 0; p < agent_count(); ++p) {
    if (!running_[p]) continue;
    auto& t = tasks_[*running_[p]];
    t.done_work = std::min(spec_of(t).work, t.done_work + rate(p, t) * effective_[p] / 100.0 * dt);
  }
  clock_ = target;
  std::fill(fresh_dispatch_.begin(), fresh_dispatch_.end(), false);

  SimEvent ev;
  if (arriving) {
    arrive(*arriving);
    ev = log_.back();
  } else {
    auto& t = tasks_[*next];
    t.done_work = spec_of(t).work;
    t.status = Status::Done;
    t.finish = clock_;
    running_[*t.pe] = std::nullopt;
    requests_[*t.pe] = 0;
    last_seen_[*t.pe] = clock_;
    ev = {clock_, EventKind::TaskCompleted, spec_.jobs[t.job].id, spec_of(t).id, {}};
    const std::size_t first = job_first_[t.job];
    const std::size_t count = spec_.jobs[t.job].tasks.size();
    bool complete = true;
    for (std::size_t i = first; i < first + count; ++i) complete &= tasks_[i].status == Status::Done;
    dispatch();
    apply_allocations();
    ev.allocations = allocation_snapshot();
    log_.push_back(ev);
    if (complete) {
      job_done_[t.job] = true;
      log_.push_back({clock_, EventKind::JobCompleted, ev.job, "", ev.allocations});
    }
    return ev;
  }
  dispatch();
  apply_allocations();
  log_.back().allocations = allocation_snapshot();
  ev.allocations = log_.back().allocations;
  return ev;
}

std::optional<double> Simulator::task_finish(const std::string& job, const std::string& task) const {
  for (const auto& t : tasks_)
    if (spec_.jobs[t.job].id == job && spec_of(t).id == task)
      return t.status == Status::Done ? std::optional<double>(t.finish) : std::nullopt;
  return std::nullopt;
}

double makespan(const JobDag& job, const std::vector<SimEvent>& log) {
  std::set<std::string> finished;
  double last = -kInf;
  for (const auto& e : log) {
    if (e.job != job.id || e.kind != EventKind::TaskCompleted) continue;
    finished.insert(e.task);
    last = std::max(last, e.time);
  }
  if (finished.size() != job.tasks.size())
    throw ValidationError("job '" + job.id + "' has not completed");
  return last - job.arrival;
}

int uniform_tokens(const AgentObservation& obs, const std::vector<int>& bins) {
  if (!obs.guard.task_active) return 0;
  if (obs.active_siblings == 0) return std::min(100, obs.amax);
  const int share = 100 / static_cast<int>(obs.active_siblings + 1);
  int best = 0;
  for (int b : bins) {
    if (b > obs.amax) continue;
    if (best == 0 || std::abs(b - share) < std::abs(best - share)) best = b;
  }
  return best == 0 ? std::min(share, obs.amax) : best;
}

EpisodeLog run_episode(const ScenarioSpec& spec, const PolicyFn& policy) {
  Simulator sim(spec);
  EpisodeLog out;
  out.steps.resize(sim.agent_count());
  while (!sim.done()) {
    std::vector<AgentStep> pending(sim.agent_count());
    for (std::size_t a = 0; a < sim.agent_count(); ++a) {
      auto& step = pending[a];
      step.obs = sim.observe(a);
      if (step.obs.needs_decision) {
        step.decision = policy(step.obs);
        step.decided = true;
        sim.request(a, step.decision.tokens);
      } else if (!step.obs.guard.task_active) {
        step.decision.tokens = 0;
        step.decision.action = 0;
        sim.request(a, 0);
      } else {
        step.decision.tokens = step.obs.current_request;
      }
    }
    sim.apply_allocations();
    sim.record_allocations();
    // Rewards accrue per tick under the allocations held through the interval.
    const auto next = sim.next_event_time();
    std::vector<double> accrued(sim.agent_count());
    for (std::size_t a = 0; a < sim.agent_count(); ++a) accrued[a] = sim.interval_reward(a, next);
    const auto ev = sim.step_to_next_event();
    for (std::size_t a = 0; a < sim.agent_count(); ++a) {
      auto& step = pending[a];
      step.time = ev.time;
      double r = accrued[a];
      if (ev.kind == EventKind::TaskCompleted && step.obs.task && *step.obs.task == ev.task &&
          step.obs.guard.task_active)
        r += 1.0;
      step.reward = r;
      out.steps[a].push_back(std::move(step));
    }
  }
  out.events = sim.events();
  for (const auto& job : spec.jobs) out.makespan[job.id] = makespan(job, out.events);
  return out;
}

std::string events_to_text(const std::vector<SimEvent>& log) {
  std::ostringstream os;
  char buf[40];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%.17g", e.time);
    os << "event time=" << buf << " kind=" << to_string(e.kind) << " job=" << e.job;
    if (!e.task.empty()) os << " task=" << e.task;
    os << " alloc=";
    bool first = true;
    for (const auto& [pe, tok] : e.allocations) {
      std::snprintf(buf, sizeof buf, "%.17g", tok);
      os << (first ? "" : ",") << pe << ':' << buf;
      first = false;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace nsm
