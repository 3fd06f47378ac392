#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "idxsel/agent.hpp"
#include "idxsel/costmodel.hpp"
#include "idxsel/env.hpp"
#include "idxsel/schema.hpp"

namespace idxsel {

// Flat key=value run description. Every field has a default except out_dir;
// unknown keys are rejected.
struct RunConfig {
  std::string schema_profile = "tiny";
  std::string schema_path;    // when set, overrides the profile
  std::string workload_path;  // when set, overrides generation
  int template_count = 3;
  int queries_per_workload = 10;
  int w_max = 3;

  double budget_units = 4.0;
  int episodes = 200;
  int q_max = 64;
  int max_steps = 0;  // <= 0 means pool size
  double m_floor = 1.0;

  double heap_fetch_factor = 2.0;
  double traversal_constant = 1.0;

  AgentHyperparams agent;

  std::uint64_t seed = 1;
  std::string out_dir;
  std::string cost_source_cmd;  // empty = analytic model

  std::vector<double> compare_budgets = {2, 3, 4, 5, 6, 7, 8};
  std::vector<int> compare_episodes = {200};
  std::vector<std::string> compare_methods = {"greedy", "random", "exhaustive"};

  CostModelParams cost_params() const {
    return CostModelParams{heap_fetch_factor, traversal_constant};
  }
  EnvParams env_params() const { return EnvParams{budget_units, max_steps, q_max, m_floor}; }

  // Canonical key=value rendering (sorted keys); config_hash fingerprints it.
  std::string canonical() const;
  std::uint64_t config_hash() const { return fnv1a(canonical()); }
};

// Throws ParseError on unknown keys or unparseable values.
void set_config_key(RunConfig& config, const std::string& key, const std::string& value);

// Lines of key=value; '#' comments and blank lines ignored.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

const std::vector<std::string>& run_config_keys();

}  // namespace idxsel
