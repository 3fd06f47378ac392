#pragma once

#include <cstdint>
#include <string>

#include "idxsel/agent.hpp"
#include "idxsel/candidates.hpp"
#include "idxsel/costmodel.hpp"
#include "idxsel/env.hpp"

namespace idxsel {

enum class BaselineMethod { exhaustive, greedy, random, td3_nomask };

std::string baseline_method_name(BaselineMethod m);

struct BaselineResult {
  BaselineMethod method = BaselineMethod::greedy;
  IndexConfiguration config;
  CostReport report;
  double value = 0.0;  // 1 - cost/C(empty)
  double elapsed_seconds = 0.0;
};

// Minimum-cost budget-feasible subset by full enumeration; ties prefer
// smaller storage, then the lexicographically smaller candidate-index set.
// Throws ArgumentError when the pool exceeds max_pool.
BaselineResult exhaustive_best(const CandidatePool& pool, const Workload& workload,
                               const SchemaStats& schema, double budget_units,
                               int max_pool = 16);

// Repeatedly adds the feasible candidate with the best cost-reduction per
// storage unit; stops when no candidate helps. Ties go to the lowest pool
// index.
BaselineResult greedy_select(const CandidatePool& pool, const Workload& workload,
                             const SchemaStats& schema, double budget_units);

// Uniformly adds feasible candidates until nothing fits.
BaselineResult random_select(const CandidatePool& pool, const Workload& workload,
                             const SchemaStats& schema, double budget_units,
                             std::uint64_t seed);

struct AblationResult {
  BaselineResult result;
  TrainingTrace trace;
  AgentBundle bundle;
};

// Plain TD3: the agent trained with the selector bypassed (mask always all
// ones) and no sparsity pressure.
AblationResult td3_nomask(const Environment& env, const AgentHyperparams& base_hp, int episodes,
                          std::uint64_t seed);

}  // namespace idxsel
