#pragma once

// Belief filtering, rollouts and REINFORCE training of rule weights.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nsm/rules.hpp"
#include "nsm/sim.hpp"

namespace nsm {

// ---- belief state over a discrete environment-state space ----

struct BeliefState {
  std::vector<double> p;
};

using Matrix = std::vector<std::vector<double>>;

// Per action: transition rows s -> s' and observation rows s' -> o. Every
// row must be a probability distribution.
struct BeliefModel {
  std::vector<Matrix> transition;
  std::vector<Matrix> observation;

  std::size_t states() const { return transition.empty() ? 0 : transition[0].size(); }
  void validate() const;  // throws ValidationError
};

struct BeliefUpdate {
  BeliefState belief;
  // The observation had zero likelihood; `belief` is then the predictive
  // distribution before the observation.
  bool impossible = false;
};

BeliefUpdate update_belief(const BeliefState& prior, std::size_t action, std::size_t observation,
                           const BeliefModel& model);

// ---- trajectories ----

struct StepRecord {
  PredicateValuation valuation;
  SlackContext slack;
  ActionMask mask;
  std::size_t action = 0;
  bool forced = false;  // singleton mask: the guard rails decided
  bool hold = false;    // busy agent keeping its earlier request; not a decision
  double reward = 0.0;
  double time = 0.0;    // closing event time
};

struct Trajectory {
  std::vector<StepRecord> steps;
};

struct RolloutResult {
  std::vector<Trajectory> agents;
  double makespan = 0.0;
  std::vector<SimEvent> events;
};

// One episode with actions sampled from the rules. `rules` holds either one
// shared rule set or one per agent.
RolloutResult rollout(const ScenarioSpec& scenario, std::span<const RuleSet> rules,
                      std::uint64_t seed);

// G_j = sum_{k>=j} gamma^(T_k - T_j) R_k with gamma per tick.
std::vector<double> returns(const Trajectory& traj, double gamma);

// ---- gradients and optimizer ----

using WeightGrad = std::array<std::array<double, kNumLiterals>, kNumActionClasses>;

enum class Likelihood {
  Categorical,  // log of the normalized score of the taken action
  // Each template's firing as a Bernoulli variable (BCE) plus the choice of
  // bin within the partial class; a surrogate that passes gradient through
  // the clamp.
  Bernoulli,
};

struct GradientConfig {
  double gamma = 0.995;
  Likelihood likelihood = Likelihood::Bernoulli;
  bool baseline = true;       // subtract the batch mean return at each event index
  bool reward_to_go = true;  // weight step j by G_j instead of the episode return
  bool normalize = true;      // divide the weights by their batch standard deviation
  // Bernoulli only: weight of the labels fixed by the guard rails (the
  // forced action, and every masked-out action as a non-firing).
  double guard_weight = 1.0;
};

// Ascent direction (1/K) sum_k sum_t grad log pi(a_kt) * weight_kt over the
// batch, one trajectory per entry. Holds are skipped. Throws RuntimeError on
// an action the rules give probability 0 (off-policy data).
WeightGrad policy_gradient(std::span<const Trajectory> batch, const RuleSet& rs,
                           const GradientConfig& config);

// Log-likelihood of a trajectory's actions, the quantity differentiated above.
double log_likelihood(const Trajectory& traj, const RuleSet& rs, Likelihood likelihood);

struct AdamaxConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-12;
};

struct AdamaxState {
  WeightGrad m{};
  WeightGrad u{};
  long step = 0;
};

// One ascent step; weights are projected back to >= 0.
void adamax_step(RuleSet& rs, const WeightGrad& grad, AdamaxState& state, const AdamaxConfig& config);

// ---- training loop ----

struct TrainerConfig {
  int episodes = 10000;
  int batch = 10;
  std::uint64_t seed = 1;
  double init_level = 0.05;
  double l1 = 0.00045;    // per-step shrinkage of every weight, applied after the update
  double lr_final = 0.1;  // learning rate decays linearly to lr * lr_final
  bool round_robin = true;
  bool shared = true;  // one rule set for every agent
  GradientConfig gradient;
  AdamaxConfig optimizer{.lr = 0.02};

  void validate() const;  // throws ValidationError
};

struct CurvePoint {
  int batch = 0;
  double mean_return = 0.0;
  double mean_makespan = 0.0;
};

struct TrainResult {
  std::vector<RuleSet> rules;  // one entry when shared
  std::vector<CurvePoint> curve;
};

// The rule sets training starts from: one when shared, else one per agent.
std::vector<RuleSet> initial_rules(std::size_t agents, const TrainerConfig& config);

TrainResult train(const ScenarioSpec& scenario, const TrainerConfig& config);

std::string curve_to_text(const std::vector<CurvePoint>& curve);

}  // namespace nsm
