#include "nsm/policy.hpp"

#include <algorithm>

namespace nsm {

ActionMask admissible_actions(const RuleSet& rs, const AgentObservation& obs) {
  auto mask = guard_rail_mask(rs, obs.guard);
  const auto actions = action_space(rs);
  for (std::size_t i = 0; i < actions.size(); ++i)
    if (actions[i].tokens > obs.amax) mask[i] = 0;
  if (std::none_of(mask.begin(), mask.end(), [](char m) { return m != 0; })) mask[0] = 1;
  return mask;
}

const SlackContext* slack_context(const AgentObservation& obs) {
  return obs.slack.siblings.empty() ? nullptr : &obs.slack;
}

Decision rules_decision(const RuleSet& rs, const AgentObservation& obs, Rng* sampler) {
  const auto actions = action_space(rs);
  const auto mask = admissible_actions(rs, obs);
  Decision d;
  d.distribution = action_distribution(rs, obs.valuation, mask, slack_context(obs));
  std::size_t pick = 0;
  if (sampler) {
    pick = sampler->categorical(d.distribution);
  } else {
    for (std::size_t i = 1; i < actions.size(); ++i)
      if (d.distribution[i] > d.distribution[pick]) pick = i;
  }
  d.action = pick;
  d.tokens = actions[pick].tokens;
  return d;
}

Decision uniform_decision(const AgentObservation& obs, const std::vector<int>& bins) {
  Decision d;
  d.tokens = uniform_tokens(obs, bins);
  return d;
}

}  // namespace nsm
