#include "idxsel/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <vector>

#include "idxsel/common.hpp"

namespace idxsel {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

BaselineResult finish(BaselineMethod method, IndexConfiguration config, const Workload& workload,
                      const SchemaStats& schema, Clock::time_point t0) {
  BaselineResult r;
  r.method = method;
  r.report = workload_cost(workload, config, schema);
  const double empty = workload_cost(workload, IndexConfiguration{}, schema).total_cost;
  r.value = empty > 0.0 ? 1.0 - r.report.total_cost / empty : 0.0;
  r.config = std::move(config);
  r.elapsed_seconds = seconds_since(t0);
  return r;
}

}  // namespace

std::string baseline_method_name(BaselineMethod m) {
  switch (m) {
    case BaselineMethod::exhaustive: return "exhaustive";
    case BaselineMethod::greedy: return "greedy";
    case BaselineMethod::random: return "random";
    case BaselineMethod::td3_nomask: return "td3_nomask";
  }
  throw ArgumentError("invalid baseline method enum value");
}

BaselineResult exhaustive_best(const CandidatePool& pool, const Workload& workload,
                               const SchemaStats& schema, double budget_units, int max_pool) {
  const auto t0 = Clock::now();
  const int n = pool.size();
  if (n > max_pool) {
    throw ArgumentError("exhaustive_best: pool size " + std::to_string(n) + " exceeds max " +
                        std::to_string(max_pool));
  }
  std::vector<double> storage;
  storage.reserve(static_cast<std::size_t>(n));
  for (const auto& index : pool.candidates()) {
    storage.push_back(candidate_storage(index, schema));
  }

  double best_cost = workload_cost(workload, IndexConfiguration{}, schema).total_cost;
  double best_storage = 0.0;
  std::uint64_t best_bits = 0;
  for (std::uint64_t bits = 1; bits < (1ULL << n); ++bits) {
    double subset_storage = 0.0;
    for (int k = 0; k < n; ++k) {
      if (bits & (1ULL << k)) subset_storage += storage[static_cast<std::size_t>(k)];
    }
    if (subset_storage > budget_units + 1e-9) continue;
    IndexConfiguration config;
    for (int k = 0; k < n; ++k) {
      if (bits & (1ULL << k)) config.add(pool.at(k), schema);
    }
    const double cost = workload_cost(workload, config, schema).total_cost;
    // Lower-index bitmasks come first, so on full ties the earlier
    // (lexicographically smaller) candidate set wins.
    if (cost < best_cost ||
        (cost == best_cost && config.total_storage_units() < best_storage)) {
      best_cost = cost;
      best_storage = config.total_storage_units();
      best_bits = bits;
    }
  }

  IndexConfiguration best;
  for (int k = 0; k < n; ++k) {
    if (best_bits & (1ULL << k)) best.add(pool.at(k), schema);
  }
  return finish(BaselineMethod::exhaustive, std::move(best), workload, schema, t0);
}

BaselineResult greedy_select(const CandidatePool& pool, const Workload& workload,
                             const SchemaStats& schema, double budget_units) {
  const auto t0 = Clock::now();
  IndexConfiguration config;
  double current_cost = workload_cost(workload, config, schema).total_cost;
  for (;;) {
    int best_k = -1;
    double best_ratio = 0.0;
    double best_cost = current_cost;
    for (int k = 0; k < pool.size(); ++k) {
      const IndexDef& candidate = pool.at(k);
      if (config.contains(candidate)) continue;
      const double units = candidate_storage(candidate, schema);
      if (config.total_storage_units() + units > budget_units + 1e-9) continue;
      const double cost = workload_cost(workload, config.with(candidate, schema), schema).total_cost;
      const double reduction = current_cost - cost;
      if (reduction <= 0.0) continue;
      const double ratio = reduction / units;
      if (best_k < 0 || ratio > best_ratio) {
        best_k = k;
        best_ratio = ratio;
        best_cost = cost;
      }
    }
    if (best_k < 0) break;
    config.add(pool.at(best_k), schema);
    current_cost = best_cost;
  }
  return finish(BaselineMethod::greedy, std::move(config), workload, schema, t0);
}

BaselineResult random_select(const CandidatePool& pool, const Workload& workload,
                             const SchemaStats& schema, double budget_units,
                             std::uint64_t seed) {
  const auto t0 = Clock::now();
  Rng rng(seed ^ fnv1a("random_select"));
  IndexConfiguration config;
  for (;;) {
    std::vector<int> feasible;
    for (int k = 0; k < pool.size(); ++k) {
      const IndexDef& candidate = pool.at(k);
      if (config.contains(candidate)) continue;
      if (config.total_storage_units() + candidate_storage(candidate, schema) >
          budget_units + 1e-9) {
        continue;
      }
      feasible.push_back(k);
    }
    if (feasible.empty()) break;
    const int pick = feasible[static_cast<std::size_t>(rng.below(feasible.size()))];
    config.add(pool.at(pick), schema);
  }
  return finish(BaselineMethod::random, std::move(config), workload, schema, t0);
}

AblationResult td3_nomask(const Environment& env, const AgentHyperparams& base_hp, int episodes,
                          std::uint64_t seed) {
  const auto t0 = Clock::now();
  AgentHyperparams hp = base_hp;
  hp.selector_pinned = true;
  hp.lambda_sparsity = 0.0;
  TrainResult trained = run_training(env, hp, episodes, seed);
  const EvalResult eval = evaluate(trained.bundle, env);

  AblationResult out;
  out.result.method = BaselineMethod::td3_nomask;
  out.result.config = eval.config;
  out.result.report = eval.report;
  out.result.value = eval.value;
  out.result.elapsed_seconds = seconds_since(t0);
  out.trace = std::move(trained.trace);
  out.bundle = std::move(trained.bundle);
  return out;
}

}  // namespace idxsel
