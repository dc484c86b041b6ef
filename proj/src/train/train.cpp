#include "nsm/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>

#include "nsm/error.hpp"
#include "nsm/policy.hpp"
#include "nsm/random.hpp"

namespace nsm {

namespace {

constexpr double kRowTol = 1e-9;
constexpr double kProbFloor = 1e-3;

void check_rows(const Matrix& m, std::size_t rows, std::size_t cols, const char* what) {
  if (m.size() != rows) throw ValidationError(std::string(what) + ": wrong row count");
  for (const auto& row : m) {
    if (row.size() != cols) throw ValidationError(std::string(what) + ": wrong column count");
    double sum = 0.0;
    for (double v : row) {
      if (!(v >= 0.0)) throw ValidationError(std::string(what) + ": negative entry");
      sum += v;
    }
    if (std::abs(sum - 1.0) > kRowTol) throw ValidationError(std::string(what) + ": row does not sum to 1");
  }
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  // splitmix64 over the pair, so episode seeds are independent of each other.
  std::uint64_t z = a * 0x9E3779B97F4A7C15ull + b + 0x632BE59BD9B4E5B3ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

const RuleSet& rules_for(std::span<const RuleSet> rules, std::size_t agent) {
  return rules.size() == 1 ? rules[0] : rules[agent];
}

// Score of every action with the per-action valuation, plus d(score)/d(weight).
struct ActionTerms {
  std::vector<double> score;
  std::vector<std::array<double, kNumLiterals>> grad;
  // d(raw)/d(weight) ignoring the clamp: lets templates leave the flat
  // regions of the clamp under the Bernoulli surrogate.
  std::vector<std::array<double, kNumLiterals>> pass;
  std::vector<ActionClass> cls;
};

ActionTerms action_terms(const RuleSet& rs, const StepRecord& s) {
  const auto actions = action_space(rs);
  const SlackContext* ctx = s.slack.siblings.empty() ? nullptr : &s.slack;
  ActionTerms t;
  for (const auto& a : actions) {
    const auto v = valuation_for(s.valuation, a, ctx);
    const auto& tmpl = rs.at(a.action);
    t.score.push_back(eval_rule(tmpl, v));
    t.grad.push_back(rule_gradient(tmpl, v));
    auto& st = t.pass.emplace_back();
    for (std::size_t l = 0; l < kNumLiterals; ++l) st[l] = -(1.0 - v.literal(l));
    // Slack is only evaluated for partial requests; elsewhere it is a
    // constant and its weights would only act as a bias.
    if (a.action != ActionClass::Partial)
      st[literal_index(Predicate::Slack, false)] = st[literal_index(Predicate::Slack, true)] = 0.0;
    t.cls.push_back(a.action);
  }
  return t;
}

// Adds d log pi(step) / d weights into g, scaled by `scale` for the actions
// the agent chose among and by `guard` for the labels the guard rails fixed.
// Returns log pi(step).
double accumulate(const RuleSet& rs, const StepRecord& s, Likelihood lk, double scale, double guard,
                  WeightGrad* g) {
  const auto t = action_terms(rs, s);
  const std::size_t n = t.score.size();
  if (s.action >= n) throw ValidationError("trajectory action out of range");
  if (s.mask.size() != n) throw ValidationError("trajectory mask size mismatch");
  auto add = [&](std::size_t i, double coef) {
    if (!g || coef == 0.0) return;
    auto& row = (*g)[static_cast<std::size_t>(t.cls[i])];
    const auto& d = lk == Likelihood::Bernoulli ? t.pass[i] : t.grad[i];
    for (std::size_t l = 0; l < kNumLiterals; ++l) row[l] += coef * d[l];
  };
  std::size_t admissible = 0;
  for (char m : s.mask) admissible += m ? 1 : 0;
  const bool forced = admissible <= 1;

  if (lk == Likelihood::Categorical) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (s.mask[i]) total += t.score[i];
    if (forced) return 0.0;  // probability 1
    if (total <= 0.0) return -std::log(static_cast<double>(admissible));  // uniform fallback
    if (!s.mask[s.action] || t.score[s.action] <= 0.0)
      throw RuntimeError("trajectory action has probability 0 under the current rules");
    add(s.action, scale / t.score[s.action]);
    for (std::size_t i = 0; i < n; ++i)
      if (s.mask[i]) add(i, -scale / total);
    return std::log(t.score[s.action] / total);
  }

  // Class level: each template fires or not, represented by the taken action
  // or by its best-scoring action. Labels the guard rails fix (masked
  // classes, or the only admissible class) carry the guard weight; choices
  // between admissible classes carry the return weight.
  const ActionClass taken = t.cls[s.action];
  std::size_t open_classes = 0;
  for (std::size_t c = 0; c < kNumActionClasses; ++c)
    for (std::size_t i = 0; i < n; ++i)
      if (s.mask[i] && t.cls[i] == static_cast<ActionClass>(c)) {
        ++open_classes;
        break;
      }
  double ll = 0.0;
  for (std::size_t c = 0; c < kNumActionClasses; ++c) {
    const auto cls = static_cast<ActionClass>(c);
    std::optional<std::size_t> rep;
    bool admissible = false;
    for (std::size_t i = 0; i < n; ++i)
      if (t.cls[i] == cls && s.mask[i]) admissible = true;
    if (cls == taken) {
      rep = s.action;
    } else {
      for (std::size_t i = 0; i < n; ++i)
        if (t.cls[i] == cls && (s.mask[i] || !admissible) && (!rep || t.score[i] > t.score[*rep])) rep = i;
    }
    if (!rep) continue;
    const double p = std::clamp(t.score[*rep], kProbFloor, 1.0 - kProbFloor);
    const bool fires = cls == taken;
    const double w = (!admissible || open_classes <= 1) ? guard : scale;
    ll += fires ? std::log(p) : std::log(1.0 - p);
    add(*rep, fires ? w / p : -w / (1.0 - p));
  }
  // Within the taken class: which of its admissible actions.
  double total = 0.0;
  std::size_t choices = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (s.mask[i] && t.cls[i] == taken) total += t.score[i], ++choices;
  if (choices > 1 && total > 0.0 && t.score[s.action] > 0.0) {
    ll += std::log(t.score[s.action] / total);
    add(s.action, scale / t.score[s.action]);
    for (std::size_t i = 0; i < n; ++i)
      if (s.mask[i] && t.cls[i] == taken) add(i, -scale / total);
  }
  return ll;
}

}  // namespace

void BeliefModel::validate() const {
  if (transition.empty() || transition.size() != observation.size())
    throw ValidationError("belief model needs one transition and observation matrix per action");
  const std::size_t n = states();
  if (n == 0) throw ValidationError("belief model has no states");
  const std::size_t obs = observation[0].empty() ? 0 : observation[0][0].size();
  if (obs == 0) throw ValidationError("belief model has no observations");
  for (std::size_t a = 0; a < transition.size(); ++a) {
    check_rows(transition[a], n, n, "transition");
    check_rows(observation[a], n, obs, "observation");
  }
}

BeliefUpdate update_belief(const BeliefState& prior, std::size_t action, std::size_t observation,
                           const BeliefModel& model) {
  model.validate();
  const std::size_t n = model.states();
  if (prior.p.size() != n) throw ValidationError("belief size does not match the model");
  if (action >= model.transition.size()) throw ValidationError("unknown action");
  if (observation >= model.observation[action][0].size()) throw ValidationError("unknown observation");
  double mass = 0.0;
  for (double v : prior.p) {
    if (!(v >= 0.0)) throw ValidationError("belief entries must be nonnegative");
    mass += v;
  }
  if (std::abs(mass - 1.0) > kRowTol) throw ValidationError("belief must sum to 1");

  const auto& T = model.transition[action];
  const auto& O = model.observation[action];
  std::vector<double> predictive(n, 0.0);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t s2 = 0; s2 < n; ++s2) predictive[s2] += T[s][s2] * prior.p[s];

  BeliefUpdate out;
  std::vector<double> post(n);
  double z = 0.0;
  for (std::size_t s2 = 0; s2 < n; ++s2) z += post[s2] = O[s2][observation] * predictive[s2];
  if (!(z > 0.0)) {
    out.impossible = true;
    post = predictive;
    z = 0.0;
    for (double v : post) z += v;
  }
  for (auto& v : post) v /= z;
  out.belief.p = std::move(post);
  return out;
}

RolloutResult rollout(const ScenarioSpec& scenario, std::span<const RuleSet> rules, std::uint64_t seed) {
  if (rules.empty()) throw ValidationError("rollout needs at least one rule set");
  if (rules.size() != 1 && rules.size() != scenario.pes.size())
    throw ValidationError("rollout needs one rule set or one per agent");
  Rng rng(seed);
  auto log = run_episode(scenario, [&](const AgentObservation& obs) {
    return rules_decision(rules_for(rules, obs.agent), obs, &rng);
  });
  RolloutResult out;
  out.agents.resize(log.steps.size());
  for (std::size_t a = 0; a < log.steps.size(); ++a) {
    const auto& rs = rules_for(rules, a);
    for (const auto& st : log.steps[a]) {
      StepRecord r;
      r.valuation = st.obs.valuation;
      r.slack = st.obs.slack;
      r.mask = admissible_actions(rs, st.obs);
      r.hold = !st.decided && st.obs.guard.task_active;
      r.action = st.decision.action.value_or(0);
      r.forced = std::count(r.mask.begin(), r.mask.end(), 1) == 1;
      r.reward = st.reward;
      r.time = st.time;
      out.agents[a].steps.push_back(std::move(r));
    }
  }
  out.events = std::move(log.events);
  for (const auto& job : scenario.jobs) out.makespan = std::max(out.makespan, log.makespan.at(job.id));
  return out;
}

std::vector<double> returns(const Trajectory& traj, double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ValidationError("gamma must lie in [0,1)");
  const auto& s = traj.steps;
  std::vector<double> g(s.size(), 0.0);
  for (std::size_t j = s.size(); j-- > 0;) {
    g[j] = s[j].reward;
    if (j + 1 < s.size()) {
      g[j] += std::pow(gamma, s[j + 1].time - s[j].time) * g[j + 1];
    }
  }
  return g;
}

double log_likelihood(const Trajectory& traj, const RuleSet& rs, Likelihood likelihood) {
  double ll = 0.0;
  for (const auto& s : traj.steps)
    if (!s.hold) ll += accumulate(rs, s, likelihood, 0.0, 0.0, nullptr);
  return ll;
}

WeightGrad policy_gradient(std::span<const Trajectory> batch, const RuleSet& rs,
                           const GradientConfig& config) {
  WeightGrad g{};
  if (batch.empty()) return g;
  // Per-step weights: the return from step j on, or the whole-episode return
  // discounted from the first event. The baseline is the batch mean at the
  // same event index, so early and late steps are compared like for like.
  std::vector<std::vector<double>> weight(batch.size());
  std::vector<double> sum, count;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const auto G = returns(batch[k], config.gamma);
    if (config.reward_to_go) weight[k] = G;
    else weight[k].assign(G.size(), G.empty() ? 0.0 : G.front());
    if (sum.size() < G.size()) sum.resize(G.size(), 0.0), count.resize(G.size(), 0.0);
    for (std::size_t j = 0; j < G.size(); ++j)
      if (!batch[k].steps[j].hold) sum[j] += weight[k][j], count[j] += 1.0;
  }
  if (config.baseline && config.reward_to_go) {
    for (std::size_t k = 0; k < batch.size(); ++k)
      for (std::size_t j = 0; j < weight[k].size(); ++j)
        if (count[j] > 0.0) weight[k][j] -= sum[j] / count[j];
  } else if (config.baseline) {
    double total = 0.0;
    for (const auto& w : weight) total += w.empty() ? 0.0 : w.front();
    const double base = total / static_cast<double>(batch.size());
    for (auto& w : weight)
      for (auto& v : w) v -= base;
  }
  double scale = 1.0;
  if (config.normalize) {
    double var = 0.0, n = 0.0;
    for (std::size_t k = 0; k < batch.size(); ++k)
      for (std::size_t j = 0; j < weight[k].size(); ++j)
        if (config.reward_to_go ? !batch[k].steps[j].hold : j == 0) var += weight[k][j] * weight[k][j], n += 1.0;
    const double sd = n > 1.0 ? std::sqrt(var / n) : 0.0;
    if (sd > 0.0) scale = 1.0 / sd;
  }
  for (std::size_t k = 0; k < batch.size(); ++k)
    for (std::size_t j = 0; j < batch[k].steps.size(); ++j) {
      const auto& s = batch[k].steps[j];
      if (s.hold) continue;
      accumulate(rs, s, config.likelihood, weight[k][j] * scale, config.guard_weight, &g);
    }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (auto& row : g)
    for (auto& v : row) v *= inv;
  return g;
}

void adamax_step(RuleSet& rs, const WeightGrad& grad, AdamaxState& st, const AdamaxConfig& c) {
  ++st.step;
  const double correction = 1.0 - std::pow(c.beta1, static_cast<double>(st.step));
  for (std::size_t a = 0; a < kNumActionClasses; ++a)
    for (std::size_t l = 0; l < kNumLiterals; ++l) {
      const double g = grad[a][l];
      st.m[a][l] = c.beta1 * st.m[a][l] + (1.0 - c.beta1) * g;
      st.u[a][l] = std::max(c.beta2 * st.u[a][l], std::abs(g));
      if (st.u[a][l] <= 0.0) continue;
      auto& w = rs.templates[a].weights[l];
      w = std::max(0.0, w + c.lr * (st.m[a][l] / correction) / (st.u[a][l] + c.eps));
    }
}

void TrainerConfig::validate() const {
  if (episodes < 0) throw ValidationError("episodes must be >= 0");
  if (batch < 1) throw ValidationError("batch must be >= 1");
  if (!(gradient.gamma >= 0.0 && gradient.gamma < 1.0)) throw ValidationError("gamma must lie in [0,1)");
  if (!(optimizer.lr > 0.0)) throw ValidationError("learning rate must be positive");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0) || !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0))
    throw ValidationError("Adamax betas must lie in [0,1)");
  if (!(init_level >= 0.0)) throw ValidationError("initial weight level must be >= 0");
  if (!(l1 >= 0.0)) throw ValidationError("l1 shrinkage must be >= 0");
  if (!(lr_final >= 0.0 && lr_final <= 1.0)) throw ValidationError("lr_final must lie in [0,1]");
}

std::vector<RuleSet> initial_rules(std::size_t agents, const TrainerConfig& config) {
  std::vector<RuleSet> out;
  for (std::size_t i = 0; i < (config.shared ? 1 : agents); ++i)
    out.push_back(RuleSet::initial(mix(config.seed, 0xA11CEull + i), config.init_level));
  return out;
}

TrainResult train(const ScenarioSpec& scenario, const TrainerConfig& config) {
  config.validate();
  scenario.validate();
  const std::size_t agents = scenario.pes.size();
  const std::size_t sets = config.shared ? 1 : agents;
  TrainResult out;
  out.rules = initial_rules(agents, config);
  std::vector<AdamaxState> opt(sets);

  const int batches = (config.episodes + config.batch - 1) / config.batch;
  int episode = 0;
  for (int b = 0; b < batches; ++b) {
    const int k = std::min(config.batch, config.episodes - episode);
    std::vector<RolloutResult> runs;
    runs.reserve(k);
    for (int e = 0; e < k; ++e, ++episode)
      runs.push_back(rollout(scenario, out.rules, mix(config.seed, static_cast<std::uint64_t>(episode) + 1)));

    CurvePoint point;
    point.batch = b;
    for (const auto& r : runs) {
      point.mean_makespan += r.makespan / k;
      for (const auto& t : r.agents)
        for (const auto& s : t.steps) point.mean_return += s.reward / k;
    }
    out.curve.push_back(point);

    // Round robin: one agent's experience per batch, the others are part of
    // the environment for that update.
    std::vector<std::size_t> learners;
    if (config.round_robin) learners.push_back(static_cast<std::size_t>(b) % agents);
    else for (std::size_t a = 0; a < agents; ++a) learners.push_back(a);

    for (std::size_t set = 0; set < sets; ++set) {
      std::vector<Trajectory> batch;
      for (auto a : learners) {
        if (!config.shared && a != set) continue;
        for (const auto& r : runs) batch.push_back(r.agents[a]);
      }
      if (batch.empty()) continue;
      auto g = policy_gradient(batch, out.rules[set], config.gradient);
      const double decay =
          1.0 - (1.0 - config.lr_final) * static_cast<double>(b) / static_cast<double>(batches);
      AdamaxConfig step = config.optimizer;
      step.lr *= decay;
      adamax_step(out.rules[set], g, opt[set], step);
      if (config.l1 > 0.0)
        for (auto& t : out.rules[set].templates)
          for (auto& w : t.weights) w = std::max(0.0, w - config.l1);
    }
  }
  return out;
}

std::string curve_to_text(const std::vector<CurvePoint>& curve) {
  std::ostringstream os;
  os << "batch\tmean_return\tmean_makespan\n";
  char buf[96];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof buf, "%d\t%.17g\t%.17g\n", p.batch, p.mean_return, p.mean_makespan);
    os << buf;
  }
  return os.str();
}

}  // namespace nsm
