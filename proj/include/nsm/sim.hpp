#pragma once

// Event-driven simulator of job DAGs on heterogeneous processing elements
// that share a power-token budget. One agent per PE; agents request tokens
// when their task is dispatched and hold the request until it completes.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nsm/bounds.hpp"
#include "nsm/rules.hpp"

namespace nsm {

struct TaskSpec {
  std::string id;
  std::string kind = "default";
  double work = 0.0;
  double subdeadline = 0.0;
  std::vector<std::string> parents;
  std::optional<std::string> pe;  // empty: greedy assignment when ready
};

struct JobDag {
  std::string id;
  double arrival = 0.0;
  bool priority = false;
  int amax = 100;
  std::vector<TaskSpec> tasks;
};

struct PeSpec {
  std::string id;
  std::string type;
  std::map<std::string, double> rates;  // task kind -> work per tick at 100 tokens

  // Rate for a kind, falling back to the "default" entry; 0 if neither exists.
  double rate_for(const std::string& kind) const;
};

enum class LoadLevel { Light, Medium, Heavy };

std::string_view to_string(LoadLevel l);
LoadLevel load_level_from_string(std::string_view name);

// Emission bounds for one environment predicate. Without an agent the record
// applies to every agent. Bounds widen by `staleness` per tick since the
// agent last took part in an event.
struct Emission {
  std::string node;
  Bounds bounds;
  std::optional<std::string> agent;
  double staleness = 0.0;
};

struct ScenarioSpec {
  std::string name = "scenario";
  LoadLevel load = LoadLevel::Medium;
  int budget = 100;
  std::optional<int> background_jobs;  // default from the load level: 2/1/0
  int background_tokens = 20;          // per background job
  std::uint64_t seed = 1;
  // Rate assumed for a sibling whose PE is not known yet.
  double nominal_rate = 1.0;
  // When set, agents see the PE of every task up front.
  bool full_lookahead = false;
  std::vector<PeSpec> pes;
  std::vector<JobDag> jobs;
  std::vector<Emission> observations;

  int effective_background_jobs() const;
  int available_tokens() const;  // budget left after background load
  void validate() const;         // throws ValidationError
};

enum class EventKind { JobArrived, TaskCompleted, JobCompleted };

std::string_view to_string(EventKind k);

struct SimEvent {
  double time = 0.0;
  EventKind kind = EventKind::TaskCompleted;
  std::string job;
  std::string task;  // empty for job events
  std::map<std::string, double> allocations;  // PE -> effective tokens after the event
};

struct AgentObservation {
  std::size_t agent = 0;
  std::string agent_id;
  double time = 0.0;
  std::optional<std::string> task;  // the agent's current task
  GuardObservation guard;
  PredicateValuation valuation;  // Slack is 0 here; x-bins score their own slack
  SlackContext slack;            // self and siblings
  std::size_t active_siblings = 0;
  std::vector<std::pair<std::string, double>> sibling_progress;  // task, fraction done
  bool needs_decision = false;  // a task was just dispatched on this PE
  int current_request = 0;
  int amax = 100;
  std::map<std::string, Bounds> env;  // observed environment predicates
};

class Simulator {
 public:
  explicit Simulator(ScenarioSpec spec);

  const ScenarioSpec& spec() const { return spec_; }
  double clock() const { return clock_; }
  bool done() const;

  std::size_t agent_count() const { return spec_.pes.size(); }
  const std::string& agent_id(std::size_t a) const { return spec_.pes[a].id; }
  std::optional<std::size_t> agent_index(const std::string& id) const;

  AgentObservation observe(std::size_t agent) const;

  // Sets an agent's request; must be within [0, amax] of its job.
  void request(std::size_t agent, int tokens);
  // Installs effective tokens: requests scaled down proportionally when
  // they exceed the available budget. Idle agents get 0.
  void apply_allocations();
  double effective_tokens(std::size_t agent) const;
  // Stamps the current allocations onto the events logged at the current
  // time, once the agents have answered them.
  void record_allocations();

  // Advances to the earliest completion (ties by task id) and dispatches
  // whatever became ready. Throws RuntimeError on deadlock.
  SimEvent step_to_next_event();

  // Time of the next event under current allocations; infinity on deadlock.
  double next_event_time() const;

  // Per-tick reward for an agent under current allocations, at the current
  // tick or a later one (the solo term grows with service time).
  double per_step_reward(std::size_t agent) const;
  double per_step_reward_at(std::size_t agent, double tick) const;
  // Sum of per-tick rewards over the ticks in (now, until].
  double interval_reward(std::size_t agent, double until) const;

  const std::vector<SimEvent>& events() const { return log_; }
  std::optional<double> task_finish(const std::string& job, const std::string& task) const;

 private:
  enum class Status { Pending, Ready, Running, Done };
  struct Task {
    std::size_t job = 0;
    std::size_t index = 0;
    std::optional<std::size_t> pe;
    Status status = Status::Pending;
    double done_work = 0.0;
    double start = 0.0;
    double finish = 0.0;
    std::vector<std::size_t> parents;   // global task indices
    std::vector<std::size_t> relatives;  // ancestors and descendants
  };

  const TaskSpec& spec_of(const Task& t) const { return spec_.jobs[t.job].tasks[t.index]; }
  double rate(std::size_t pe, const Task& t) const;
  double remaining(const Task& t) const { return spec_of(t).work - t.done_work; }
  bool parents_done(const Task& t) const;
  std::vector<std::size_t> siblings(std::size_t task) const;
  std::optional<std::size_t> current_task(std::size_t agent) const;
  void arrive(std::size_t job);
  void dispatch();
  std::map<std::string, double> allocation_snapshot() const;

  ScenarioSpec spec_;
  std::vector<Task> tasks_;
  std::vector<std::size_t> job_first_;  // index of each job's first task in tasks_
  std::vector<bool> arrived_;
  std::vector<bool> job_done_;
  std::vector<std::optional<std::size_t>> running_;  // per PE
  std::vector<int> requests_;
  std::vector<double> effective_;
  std::vector<bool> fresh_dispatch_;
  std::vector<double> last_seen_;  // per agent, for staleness
  double clock_ = 0.0;
  std::vector<SimEvent> log_;
};

// What a policy returns for one agent. `action` indexes the rule action
// space when the decision came from rules; uniform control leaves it empty.
struct Decision {
  int tokens = 0;
  std::optional<std::size_t> action;
  std::vector<double> distribution;  // over the action space, when sampled from rules
};

using PolicyFn = std::function<Decision(const AgentObservation&)>;

// One agent's view of one event interval: what it saw and did at the start
// of the interval and the reward collected up to the closing event.
struct AgentStep {
  AgentObservation obs;
  Decision decision;
  bool decided = false;  // false: forced hold of an earlier request
  double reward = 0.0;
  double time = 0.0;  // closing event time
};

struct EpisodeLog {
  std::vector<SimEvent> events;
  std::vector<std::vector<AgentStep>> steps;  // per agent, one per event
  std::map<std::string, double> makespan;     // per job
};

// Runs the event loop to completion. `policy` is consulted whenever an agent
// has a freshly dispatched task; idle and waiting agents request 0 and busy
// agents hold.
EpisodeLog run_episode(const ScenarioSpec& spec, const PolicyFn& policy);

// Reward terms, exposed for direct testing.
double sibling_reward_term(double h_self, double h_sibling);
double solo_reward(double service_ticks, double fp);

// Makespan of one job from an event log: last task completion minus arrival.
double makespan(const JobDag& job, const std::vector<SimEvent>& log);

// Equal split among the active siblings and self, snapped to the nearest bin.
int uniform_tokens(const AgentObservation& obs, const std::vector<int>& bins);

std::string events_to_text(const std::vector<SimEvent>& log);

}  // namespace nsm
