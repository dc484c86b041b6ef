#pragma once

// Token-request policies over simulator observations.

#include <vector>

#include "nsm/random.hpp"
#include "nsm/rules.hpp"
#include "nsm/sim.hpp"

namespace nsm {

// Guard rails plus the job's A_max cap.
ActionMask admissible_actions(const RuleSet& rs, const AgentObservation& obs);

// Slack context when the agent has siblings, else null.
const SlackContext* slack_context(const AgentObservation& obs);

// Scores the admissible actions with the rules. With a sampler the action is
// drawn from the normalized scores; without one the best score wins, lowest
// index on ties.
Decision rules_decision(const RuleSet& rs, const AgentObservation& obs, Rng* sampler = nullptr);

Decision uniform_decision(const AgentObservation& obs, const std::vector<int>& bins);

}  // namespace nsm
