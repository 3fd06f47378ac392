#pragma once

#include <vector>

#include "idxsel/candidates.hpp"
#include "idxsel/costmodel.hpp"
#include "idxsel/schema.hpp"
#include "idxsel/workload.hpp"

namespace idxsel {

struct BudgetState {
  double total_budget_units = 0.0;
  double used_units = 0.0;

  double remaining() const { return total_budget_units - used_units; }

  friend bool operator==(const BudgetState&, const BudgetState&) = default;
};

// Immutable episode snapshot; Environment::step returns a fresh one.
struct EpisodeState {
  IndexConfiguration config;
  BudgetState budget;
  int step_index = 0;
  StateVector state_vec;
  std::vector<int> feasible;  // length K; 1 = not selected yet and fits the remaining budget
  bool done = false;

  int feasible_count() const;
};

struct StepInfo {
  double cost_before = 0.0;
  double cost_after = 0.0;
  double storage_before = 0.0;
  double storage_after = 0.0;
};

struct StepOutcome {
  EpisodeState next_state;
  double reward = 0.0;
  StepInfo info;
};

struct EnvParams {
  double budget_units = 4.0;
  int max_steps = 0;  // <= 0 means pool size K
  int q_max = 64;
  double m_floor = 1.0;  // storage-delta denominator floor for the first step
};

// Fraction of the no-index workload cost removed by config: 1 - C(I)/C(empty).
double rollout_value(const Workload& workload, const IndexConfiguration& config,
                     CostSource& source);

// Network input for one snapshot. plan_features[i] divides query i's cost
// under config by its no-index cost (zero padded to q_max); throws
// DimensionError when the workload exceeds q_max.
StateVector featurize(const Workload& workload, const SchemaStats& schema,
                      const IndexConfiguration& config, const BudgetState& budget,
                      CostSource& source, const CandidatePool& pool, int step_index,
                      int max_steps, int q_max);

// Budget-constrained index-building MDP: each step adds one feasible
// candidate, reward is (relative cost drop) / (relative storage growth) with
// the storage denominator floored at m_floor on the first step. Episodes end
// when nothing fits the remaining budget or max_steps is reached.
class Environment {
 public:
  Environment(Workload workload, SchemaStats schema, CandidatePool pool, CostSource& source,
              EnvParams params);

  EpisodeState reset() const;
  // Requires feasible[action_index] = 1 on a live episode; throws
  // InfeasibleActionError otherwise (a masking bug, never ignored).
  StepOutcome step(const EpisodeState& state, int action_index) const;

  const Workload& workload() const { return workload_; }
  const SchemaStats& schema() const { return schema_; }
  const CandidatePool& pool() const { return pool_; }
  CostSource& source() const { return *source_; }
  const EnvParams& params() const { return params_; }
  int pool_size() const { return pool_.size(); }
  int max_steps() const { return max_steps_; }
  int state_dim() const;
  double empty_cost() const { return empty_cost_; }
  const std::vector<double>& candidate_storage_units() const { return storage_; }

 private:
  StateVector make_state(const IndexConfiguration& config, const BudgetState& budget,
                         int step_index, const CostReport& report) const;
  std::vector<int> feasibility(const IndexConfiguration& config, const BudgetState& budget) const;

  Workload workload_;
  SchemaStats schema_;
  CandidatePool pool_;
  CostSource* source_;  // not owned
  EnvParams params_;
  int max_steps_;
  std::vector<double> storage_;          // per candidate, in pool order
  std::vector<double> baseline_costs_;   // per query, config = empty
  double empty_cost_ = 0.0;
  std::vector<double> embedding_;        // static query embedding
};

}  // namespace idxsel
