#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "nsm/error.hpp"
#include "nsm/random.hpp"
#include "nsm/sim.hpp"

using namespace nsm;

namespace {

PeSpec pe(const std::string& id, double rate) { return {id, "CPU", {{"default", rate}}}; }

TaskSpec task(const std::string& id, double work, const std::string& on,
              std::vector<std::string> parents = {}, double std_ = 0.0) {
  TaskSpec t;
  t.id = id;
  t.work = work;
  t.subdeadline = std_ > 0 ? std_ : work;
  t.parents = std::move(parents);
  t.pe = on;
  return t;
}

ScenarioSpec scenario(std::vector<PeSpec> pes, std::vector<TaskSpec> tasks) {
  ScenarioSpec s;
  s.load = LoadLevel::Light;
  s.pes = std::move(pes);
  JobDag job;
  job.id = "J";
  job.tasks = std::move(tasks);
  s.jobs.push_back(std::move(job));
  return s;
}

PolicyFn fixed(std::map<std::string, int> tokens) {
  return [tokens](const AgentObservation& o) {
    Decision d;
    d.tokens = tokens.at(o.agent_id);
    return d;
  };
}

// Fully random DAG scenario with explicit or greedy assignments.
ScenarioSpec random_scenario(Rng& rng) {
  ScenarioSpec s;
  s.load = static_cast<LoadLevel>(rng.next() % 3);
  const int n_pe = 1 + static_cast<int>(rng.next() % 4);
  for (int p = 0; p < n_pe; ++p) s.pes.push_back(pe("P" + std::to_string(p), rng.uniform(0.5, 4)));
  JobDag job;
  job.id = "J";
  const int n = 1 + static_cast<int>(rng.next() % 8);
  for (int i = 0; i < n; ++i) {
    TaskSpec t;
    t.id = "T" + std::to_string(i);
    t.work = rng.uniform(1, 200);
    t.subdeadline = rng.uniform(1, 200);
    for (int j = 0; j < i; ++j)
      if (rng.uniform() < 0.3) t.parents.push_back("T" + std::to_string(j));
    if (rng.uniform() < 0.7) t.pe = "P" + std::to_string(rng.next() % n_pe);
    job.tasks.push_back(t);
  }
  s.jobs.push_back(job);
  return s;
}

double critical_path(const ScenarioSpec& s) {
  // Longest path at full tokens on the fastest eligible PE.
  const auto& tasks = s.jobs[0].tasks;
  std::map<std::string, double> finish;
  for (const auto& t : tasks) {
    double start = 0;
    for (const auto& p : t.parents) start = std::max(start, finish.at(p));
    double r = 0;
    if (t.pe) {
      for (const auto& p : s.pes)
        if (p.id == *t.pe) r = p.rate_for(t.kind);
    } else {
      for (const auto& p : s.pes) r = std::max(r, p.rate_for(t.kind));
    }
    finish[t.id] = start + t.work / r;
  }
  double m = 0;
  for (const auto& [_, f] : finish) m = std::max(m, f);
  return m;
}

}  // namespace

TEST_CASE("linear speed model completion times") {
  for (auto [tokens, expected] : {std::pair{100, 100.0}, std::pair{50, 200.0}}) {
    auto log = run_episode(scenario({pe("A", 1)}, {task("T", 100, "A")}), fixed({{"A", tokens}}));
    CHECK(log.makespan.at("J") == doctest::Approx(expected));
  }
}

TEST_CASE("first event is the faster of two equal tasks") {
  Simulator sim(scenario({pe("A", 1), pe("B", 1)}, {task("T1", 100, "A"), task("T2", 100, "B")}));
  sim.request(0, 60);
  sim.request(1, 40);
  sim.apply_allocations();
  const auto ev = sim.step_to_next_event();
  CHECK(ev.kind == EventKind::TaskCompleted);
  CHECK(ev.task == "T1");
  CHECK(ev.time == doctest::Approx(100 / 0.6));
}

TEST_CASE("ties complete in task id order") {
  Simulator sim(scenario({pe("A", 1), pe("B", 1)}, {task("Tb", 100, "A"), task("Ta", 100, "B")}));
  sim.request(0, 50);
  sim.request(1, 50);
  sim.apply_allocations();
  CHECK(sim.step_to_next_event().task == "Ta");
  CHECK(sim.step_to_next_event().task == "Tb");
  CHECK(sim.done());
}

TEST_CASE("proportional rescale on over-subscription") {
  Simulator sim(scenario({pe("A", 1), pe("B", 1)}, {task("T1", 100, "A"), task("T2", 100, "B")}));
  sim.request(0, 60);
  sim.request(1, 60);
  sim.apply_allocations();
  CHECK(sim.effective_tokens(0) == doctest::Approx(50));
  CHECK(sim.effective_tokens(1) == doctest::Approx(50));

  Simulator alone(scenario({pe("A", 1)}, {task("T", 100, "A")}));
  alone.request(0, 100);
  alone.apply_allocations();
  CHECK(alone.effective_tokens(0) == 100);
}

TEST_CASE("background load shrinks the budget") {
  auto s = scenario({pe("A", 1)}, {task("T", 100, "A")});
  s.load = LoadLevel::Heavy;
  CHECK(s.available_tokens() == 60);
  s.load = LoadLevel::Medium;
  CHECK(s.available_tokens() == 80);
  auto log = run_episode(s, fixed({{"A", 100}}));
  CHECK(log.makespan.at("J") == doctest::Approx(125));
}

TEST_CASE("requests outside [0, amax] are rejected") {
  auto s = scenario({pe("A", 1)}, {task("T", 100, "A")});
  s.jobs[0].amax = 80;
  Simulator sim(s);
  CHECK_THROWS_AS(sim.request(0, 90), ValidationError);
  CHECK_THROWS_AS(sim.request(0, -1), ValidationError);
  CHECK_NOTHROW(sim.request(0, 80));
}

TEST_CASE("deadlock is a runtime error") {
  Simulator sim(scenario({pe("A", 1)}, {task("T", 100, "A")}));
  sim.request(0, 0);
  sim.apply_allocations();
  CHECK(std::isinf(sim.next_event_time()));
  CHECK_THROWS_AS(sim.step_to_next_event(), RuntimeError);
}

TEST_CASE("scenario validation") {
  CHECK_THROWS_AS(Simulator(scenario({pe("A", 1)}, {task("T", 0, "A")})), ValidationError);
  CHECK_THROWS_AS(Simulator(scenario({pe("A", 1)}, {task("T", 1, "A", {"T"})})), ValidationError);
  CHECK_THROWS_AS(Simulator(scenario({pe("A", 1)}, {task("T", 1, "A", {"U"})})), ValidationError);
  CHECK_THROWS_AS(Simulator(scenario({pe("A", 1)}, {task("T", 1, "A", {"U"}), task("U", 1, "A", {"T"})})),
                  ValidationError);
  CHECK_THROWS_AS(Simulator(scenario({pe("A", 1)}, {task("T", 1, "B")})), ValidationError);
  CHECK_THROWS_AS(Simulator(scenario({pe("A", -1)}, {task("T", 1, "A")})), ValidationError);
  CHECK_THROWS_AS(Simulator(scenario({pe("A", 1), pe("A", 2)}, {task("T", 1, "A")})), ValidationError);
}

TEST_CASE("observations: idle, waiting, siblings") {
  // R -> {S1, S2}; W waits on S1.
  auto s = scenario({pe("A", 1), pe("B", 1), pe("C", 1), pe("D", 1)},
                    {task("R", 10, "A"), task("S1", 100, "B", {"R"}), task("S2", 100, "C", {"R"}),
                     task("W", 10, "D", {"S1"})});
  Simulator sim(s);
  const auto d = sim.observe(3);
  CHECK(d.guard.task_assigned);
  CHECK_FALSE(d.guard.parents_completed);
  CHECK(d.valuation.get(Predicate::ParentTasksCompleted) == 0);
  CHECK(guard_rail_mask(RuleSet{}, d.guard) == ActionMask{1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0});

  sim.request(0, 100);
  sim.apply_allocations();
  sim.step_to_next_event();  // R done at 10; S1 and S2 dispatched
  const auto a = sim.observe(0);
  CHECK_FALSE(a.guard.task_assigned);
  CHECK(a.valuation.get(Predicate::TaskAssigned) == 0);
  CHECK(guard_rail_mask(RuleSet{}, a.guard)[0] == 1);

  const auto b = sim.observe(1);
  CHECK(b.needs_decision);
  CHECK(b.guard.task_active);
  CHECK(b.guard.sibling_active);
  CHECK(b.valuation.get(Predicate::SiblingTasks) == 1);
  REQUIRE(b.sibling_progress.size() == 1);
  CHECK(b.sibling_progress[0].first == "S2");
  CHECK(b.sibling_progress[0].second == 0.0);

  sim.request(1, 50);
  sim.request(2, 25);
  sim.apply_allocations();
  const auto ev = sim.step_to_next_event();
  CHECK(ev.task == "S1");
  const auto c = sim.observe(2);
  REQUIRE(c.sibling_progress.size() == 1);
  CHECK(c.sibling_progress[0].first == "W");  // W is now running and not related to S2
  CHECK(c.active_siblings == 1);
  const auto w = sim.observe(3);
  REQUIRE(w.sibling_progress.size() == 1);
  CHECK(w.sibling_progress[0].first == "S2");
  CHECK(w.sibling_progress[0].second == doctest::Approx(0.5));  // 200 ticks at 25 tokens
}

TEST_CASE("pending siblings use the nominal rate unless look-ahead is granted") {
  auto s = scenario({pe("A", 1), pe("B", 1), pe("F", 4)},
                    {task("R", 10, "A"), task("X", 50, "B"), task("Y", 30, "F", {"R"})});
  s.nominal_rate = 1.5;
  {
    Simulator sim(s);
    const auto o = sim.observe(1);  // X sees R (running) and Y (pending)
    REQUIRE(o.slack.siblings.size() == 2);
    CHECK(o.slack.siblings[0].rate == 1);
    CHECK(o.slack.siblings[1].rate == 1.5);
  }
  s.full_lookahead = true;
  Simulator sim(s);
  CHECK(sim.observe(1).slack.siblings[1].rate == 4);
}

TEST_CASE("environment observations widen with staleness") {
  auto s = scenario({pe("A", 1), pe("B", 1)}, {task("T1", 10, "A"), task("T2", 100, "B")});
  s.observations.push_back({"LL", {0.5, 0.6}, std::nullopt, 0.01});
  s.observations.push_back({"EC", {0.9, 1.0}, std::string("B"), 0.0});
  Simulator sim(s);
  CHECK(sim.observe(0).env.at("LL") == Bounds{0.5, 0.6});
  CHECK_FALSE(sim.observe(0).env.count("EC"));
  CHECK(sim.observe(1).env.at("EC") == Bounds{0.9, 1.0});
  sim.request(0, 100);
  sim.request(1, 100);
  sim.apply_allocations();
  sim.step_to_next_event();  // rescaled to 50/50: t = 20; A just completed, B last seen at 0
  CHECK(sim.observe(0).env.at("LL").lower == doctest::Approx(0.5));
  CHECK(sim.observe(1).env.at("LL").lower == doctest::Approx(0.3));
  CHECK(sim.observe(1).env.at("LL").upper == doctest::Approx(0.8));
}

TEST_CASE("reward terms") {
  CHECK(sibling_reward_term(2, 2) == 0.25);
  CHECK(sibling_reward_term(3, 1) == doctest::Approx(0.125));
  CHECK(sibling_reward_term(0, 0) == 0.25);
  CHECK(solo_reward(7, 0.99) == doctest::Approx(0.0));
  CHECK(solo_reward(4, 1.0) == doctest::Approx(4 * 0.01 * 0.25));
}

TEST_CASE("event reward: balanced siblings over four ticks") {
  auto s = scenario({pe("A", 1), pe("B", 1)}, {task("T1", 2, "A"), task("T2", 2, "B")});
  const auto log = run_episode(s, fixed({{"A", 50}, {"B", 50}}));
  REQUIRE(log.steps[0].size() == 2);
  CHECK(log.steps[0][0].time == doctest::Approx(4));
  CHECK(log.steps[0][0].reward == doctest::Approx(1 + 4 * 0.25));
  CHECK(log.steps[1][0].reward == doctest::Approx(4 * 0.25));
  // Second event is the simultaneous completion of T2: zero ticks, indicator only.
  CHECK(log.steps[1][1].reward == doctest::Approx(1));
  CHECK(log.steps[0][1].reward == 0);
}

TEST_CASE("event reward: solo task sums the service-time term per tick") {
  auto s = scenario({pe("A", 1), pe("B", 1)}, {task("T", 3, "A"), task("U", 6, "B", {"T"})});
  const auto log = run_episode(s, fixed({{"A", 100}, {"B", 100}}));
  // Ticks 1..3 with cst 1..3; a third of the task per tick.
  CHECK(log.steps[0][0].reward == doctest::Approx(1 + (1 + 2 + 3) * (1.0 / 3 - 0.99) * 0.25));
  CHECK(log.steps[1][0].reward == 0);  // idle throughout the first interval
  CHECK(log.steps[1][1].reward == doctest::Approx(1 + 21 * (1.0 / 6 - 0.99) * 0.25));
}

TEST_CASE("makespan examples") {
  auto single = scenario({pe("A", 2)}, {task("T", 100, "A")});
  CHECK(run_episode(single, fixed({{"A", 100}})).makespan.at("J") == doctest::Approx(50));

  auto chain = scenario({pe("A", 1), pe("B", 2)}, {task("T1", 30, "A"), task("T2", 40, "B", {"T1"})});
  CHECK(run_episode(chain, fixed({{"A", 100}, {"B", 100}})).makespan.at("J") == doctest::Approx(50));

  auto pair = scenario({pe("A", 1), pe("B", 1)}, {task("T1", 100, "A"), task("T2", 100, "B")});
  double best = 1e300;
  int best_split = -1;
  for (int a = 10; a <= 90; a += 10) {
    const double m = run_episode(pair, fixed({{"A", a}, {"B", 100 - a}})).makespan.at("J");
    if (m < best - 1e-9) best = m, best_split = a;
  }
  CHECK(best_split == 50);
  CHECK(best == doctest::Approx(200));

  Simulator sim(pair);
  CHECK_THROWS_AS(makespan(pair.jobs[0], sim.events()), ValidationError);
}

TEST_CASE("uniform tokens") {
  const std::vector<int> bins{10, 20, 30, 40, 50, 60, 70, 80, 90};
  AgentObservation o;
  CHECK(uniform_tokens(o, bins) == 0);
  o.guard = {true, true, true, false};
  CHECK(uniform_tokens(o, bins) == 100);
  o.guard.sibling_active = true;
  o.active_siblings = 1;
  CHECK(uniform_tokens(o, bins) == 50);
  o.active_siblings = 2;
  CHECK(uniform_tokens(o, bins) == 30);
  o.active_siblings = 3;
  CHECK(uniform_tokens(o, bins) == 20);  // 25 ties between 20 and 30; lower bin wins
  o.active_siblings = 0;
  o.amax = 70;
  CHECK(uniform_tokens(o, bins) == 70);
}

TEST_CASE("greedy assignment picks the fastest idle PE") {
  auto s = scenario({pe("A", 1), pe("B", 3)}, {task("T", 30, "A")});
  s.jobs[0].tasks[0].pe.reset();
  const auto log = run_episode(s, fixed({{"A", 100}, {"B", 100}}));
  CHECK(log.makespan.at("J") == doctest::Approx(10));
}

TEST_CASE("simulator invariants on random scenarios") {
  Rng rng(2024);
  const std::vector<int> bins{10, 20, 30, 40, 50, 60, 70, 80, 90};
  for (int trial = 0; trial < 300; ++trial) {
    const auto s = random_scenario(rng);
    const std::uint64_t pol_seed = rng.next();
    auto run = [&](std::vector<double>* token_sums) {
      Rng prng(pol_seed);
      Simulator sim(s);
      while (!sim.done()) {
        for (std::size_t a = 0; a < sim.agent_count(); ++a) {
          const auto o = sim.observe(a);
          if (o.needs_decision) {
            const int t = prng.uniform() < 0.3 ? 100 : bins[prng.next() % bins.size()];
            sim.request(a, t);
          } else if (!o.guard.task_active) {
            sim.request(a, 0);
          }
        }
        sim.apply_allocations();
        double sum = 0;
        for (std::size_t a = 0; a < sim.agent_count(); ++a) sum += sim.effective_tokens(a);
        if (token_sums) token_sums->push_back(sum);
        sim.step_to_next_event();
      }
      return sim.events();
    };
    std::vector<double> sums;
    const auto log = run(&sums);
    for (double x : sums) CHECK(x <= s.available_tokens() + 1e-9);
    std::multiset<std::string> done;
    for (std::size_t i = 0; i < log.size(); ++i) {
      if (i) CHECK(log[i].time >= log[i - 1].time);
      if (log[i].kind == EventKind::TaskCompleted) done.insert(log[i].task);
    }
    CHECK(done.size() == s.jobs[0].tasks.size());
    for (const auto& t : s.jobs[0].tasks) CHECK(done.count(t.id) == 1);
    CHECK(makespan(s.jobs[0], log) >= critical_path(s) - 1e-9);

    const auto again = run(nullptr);
    REQUIRE(again.size() == log.size());
    for (std::size_t i = 0; i < log.size(); ++i) {
      CHECK(again[i].time == log[i].time);
      CHECK(again[i].task == log[i].task);
      CHECK(again[i].allocations == log[i].allocations);
    }
  }
}

TEST_CASE("trajectory length equals the number of completed tasks") {
  auto s = scenario({pe("A", 1), pe("B", 1), pe("C", 2)},
                    {task("T0", 10, "A"), task("T1", 20, "B", {"T0"}), task("T2", 20, "C", {"T0"}),
                     task("T3", 5, "A", {"T1"}), task("T4", 5, "C", {"T2", "T3"})});
  const auto log = run_episode(s, [](const AgentObservation& o) {
    Decision d;
    d.tokens = uniform_tokens(o, {10, 20, 30, 40, 50, 60, 70, 80, 90});
    return d;
  });
  for (const auto& steps : log.steps) CHECK(steps.size() == 5);
}

TEST_CASE("event log text") {
  auto s = scenario({pe("A", 1)}, {task("T", 100, "A")});
  const auto text = events_to_text(run_episode(s, fixed({{"A", 100}})).events);
  CHECK(text ==
        "event time=0 kind=JobArrived job=J alloc=A:100\n"
        "event time=100 kind=TaskCompleted job=J task=T alloc=A:0\n"
        "event time=100 kind=JobCompleted job=J alloc=A:0\n");
}
