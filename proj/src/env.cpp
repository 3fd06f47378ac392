#include "idxsel/env.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "idxsel/common.hpp"

namespace idxsel {

namespace {

constexpr double kBudgetSlack = 1e-9;  // absorbs storage-sum rounding at the budget edge

// Per-query costs in workload order; external sources may permute entries.
std::vector<double> per_query_in_order(const Workload& workload, const CostReport& report) {
  std::map<std::string, double> by_id(report.per_query.begin(), report.per_query.end());
  std::vector<double> costs;
  costs.reserve(workload.queries.size());
  for (const auto& q : workload.queries) {
    auto it = by_id.find(q.id);
    if (it == by_id.end()) {
      throw InvariantViolation("cost report: missing entry for query '" + q.id + "'");
    }
    costs.push_back(it->second);
  }
  return costs;
}

}  // namespace

int EpisodeState::feasible_count() const {
  int count = 0;
  for (int f : feasible) count += f != 0 ? 1 : 0;
  return count;
}

double rollout_value(const Workload& workload, const IndexConfiguration& config,
                     CostSource& source) {
  const double empty_cost = source.evaluate(workload, IndexConfiguration{}).total_cost;
  if (!(empty_cost > 0.0)) {
    throw InvariantViolation("rollout_value: no-index workload cost must be positive");
  }
  const double cost = source.evaluate(workload, config).total_cost;
  return 1.0 - cost / empty_cost;
}

StateVector featurize(const Workload& workload, const SchemaStats& schema,
                      const IndexConfiguration& config, const BudgetState& budget,
                      CostSource& source, const CandidatePool& pool, int step_index,
                      int max_steps, int q_max) {
  const int live = static_cast<int>(workload.queries.size());
  if (live > q_max) {
    throw DimensionError("featurize: workload has " + std::to_string(live) +
                         " queries but q_max is " + std::to_string(q_max));
  }
  const CostReport baseline = source.evaluate(workload, IndexConfiguration{});
  const CostReport current = source.evaluate(workload, config);
  const auto base_costs = per_query_in_order(workload, baseline);
  const auto cur_costs = per_query_in_order(workload, current);

  StateVector sv;
  sv.plan_features.assign(static_cast<std::size_t>(q_max), 0.0);
  for (int i = 0; i < live; ++i) {
    const double base = base_costs[static_cast<std::size_t>(i)];
    sv.plan_features[static_cast<std::size_t>(i)] =
        base > 0.0 ? cur_costs[static_cast<std::size_t>(i)] / base : 0.0;
  }
  sv.config_bits.assign(static_cast<std::size_t>(pool.size()), 0.0);
  for (const auto& index : config.indexes()) {
    const int k = pool.index_of(index);
    if (k < 0) {
      throw InvariantViolation("featurize: configuration index " + index.display() +
                               " not in the candidate pool");
    }
    sv.config_bits[static_cast<std::size_t>(k)] = 1.0;
  }
  const double total = budget.total_budget_units;
  sv.meta = {total > 0.0 ? budget.remaining() / total : 0.0,
             max_steps > 0 ? static_cast<double>(step_index) / max_steps : 0.0};
  sv.query_embedding = query_embedding(workload, schema);
  return sv;
}

Environment::Environment(Workload workload, SchemaStats schema, CandidatePool pool,
                         CostSource& source, EnvParams params)
    : workload_(std::move(workload)),
      schema_(std::move(schema)),
      pool_(std::move(pool)),
      source_(&source),
      params_(params) {
  if (!(params_.budget_units > 0.0)) {
    throw ArgumentError("environment: budget_units must be positive");
  }
  if (pool_.size() == 0) throw ArgumentError("environment: candidate pool is empty");
  if (params_.q_max < static_cast<int>(workload_.queries.size())) {
    throw DimensionError("environment: workload has " +
                         std::to_string(workload_.queries.size()) + " queries but q_max is " +
                         std::to_string(params_.q_max));
  }
  validate_workload(workload_, schema_);
  max_steps_ = params_.max_steps > 0 ? params_.max_steps : pool_.size();

  storage_.reserve(static_cast<std::size_t>(pool_.size()));
  for (const auto& index : pool_.candidates()) {
    storage_.push_back(candidate_storage(index, schema_));
  }
  const CostReport baseline = source_->evaluate(workload_, IndexConfiguration{});
  baseline_costs_ = per_query_in_order(workload_, baseline);
  empty_cost_ = baseline.total_cost;
  if (!(empty_cost_ > 0.0)) {
    throw InvariantViolation("environment: no-index workload cost must be positive");
  }
  embedding_ = query_embedding(workload_, schema_);
}

int Environment::state_dim() const {
  return params_.q_max + pool_.size() + 2 + static_cast<int>(embedding_.size());
}

std::vector<int> Environment::feasibility(const IndexConfiguration& config,
                                          const BudgetState& budget) const {
  std::vector<int> feasible(static_cast<std::size_t>(pool_.size()), 0);
  for (int k = 0; k < pool_.size(); ++k) {
    if (config.contains(pool_.at(k))) continue;
    if (storage_[static_cast<std::size_t>(k)] <= budget.remaining() + kBudgetSlack) {
      feasible[static_cast<std::size_t>(k)] = 1;
    }
  }
  return feasible;
}

StateVector Environment::make_state(const IndexConfiguration& config, const BudgetState& budget,
                                    int step_index, const CostReport& report) const {
  const auto costs = per_query_in_order(workload_, report);
  StateVector sv;
  sv.plan_features.assign(static_cast<std::size_t>(params_.q_max), 0.0);
  for (std::size_t i = 0; i < costs.size(); ++i) {
    sv.plan_features[i] = baseline_costs_[i] > 0.0 ? costs[i] / baseline_costs_[i] : 0.0;
  }
  sv.config_bits.assign(static_cast<std::size_t>(pool_.size()), 0.0);
  for (const auto& index : config.indexes()) {
    const int k = pool_.index_of(index);
    if (k < 0) {
      throw InvariantViolation("environment: configuration index " + index.display() +
                               " not in the candidate pool");
    }
    sv.config_bits[static_cast<std::size_t>(k)] = 1.0;
  }
  sv.meta = {budget.remaining() / budget.total_budget_units,
             static_cast<double>(step_index) / max_steps_};
  sv.query_embedding = embedding_;
  return sv;
}

EpisodeState Environment::reset() const {
  EpisodeState state;
  state.budget = BudgetState{params_.budget_units, 0.0};
  state.step_index = 0;
  const CostReport report = source_->evaluate(workload_, IndexConfiguration{});
  state.state_vec = make_state(state.config, state.budget, 0, report);
  state.feasible = feasibility(state.config, state.budget);
  state.done = state.feasible_count() == 0 || state.step_index >= max_steps_;
  return state;
}

StepOutcome Environment::step(const EpisodeState& state, int action_index) const {
  if (state.done) {
    throw InfeasibleActionError("step called on a finished episode");
  }
  if (action_index < 0 || action_index >= pool_.size()) {
    throw InfeasibleActionError("action id " + std::to_string(action_index) +
                                " out of range [0, " + std::to_string(pool_.size()) + ")");
  }
  if (state.feasible[static_cast<std::size_t>(action_index)] == 0) {
    throw InfeasibleActionError("action " + std::to_string(action_index) + " (" +
                                pool_.at(action_index).display() +
                                ") is masked infeasible in this state");
  }

  const IndexDef& chosen = pool_.at(action_index);
  StepOutcome outcome;
  outcome.info.storage_before = state.config.total_storage_units();
  outcome.info.cost_before = source_->evaluate(workload_, state.config).total_cost;

  IndexConfiguration next_config = state.config.with(chosen, schema_);
  const CostReport after = source_->evaluate(workload_, next_config);
  outcome.info.cost_after = after.total_cost;
  outcome.info.storage_after = next_config.total_storage_units();

  const double cost_drop = (outcome.info.cost_before - outcome.info.cost_after) / empty_cost_;
  const double storage_growth = (outcome.info.storage_after - outcome.info.storage_before) /
                                std::max(outcome.info.storage_before, params_.m_floor);
  outcome.reward = cost_drop / storage_growth;

  EpisodeState next;
  next.config = std::move(next_config);
  next.budget = BudgetState{params_.budget_units, outcome.info.storage_after};
  next.step_index = state.step_index + 1;
  next.state_vec = make_state(next.config, next.budget, next.step_index, after);
  next.feasible = feasibility(next.config, next.budget);
  next.done = next.feasible_count() == 0 || next.step_index >= max_steps_;
  outcome.next_state = std::move(next);
  return outcome;
}

}  // namespace idxsel
