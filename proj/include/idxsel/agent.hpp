#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "idxsel/costmodel.hpp"
#include "idxsel/env.hpp"
#include "idxsel/nn.hpp"
#include "idxsel/workload.hpp"

namespace idxsel {

struct AgentHyperparams {
  double gamma = 0.99;
  double tau = 0.005;
  int policy_delay = 2;
  double explore_noise = 0.2;      // stddev added to actor scores while training
  double target_noise = 0.2;       // target policy smoothing stddev
  double noise_clip = 0.5;         // clip for the smoothing noise
  double lambda_sparsity = 0.01;   // weight of the expected-selected-count penalty
  double history_blend = 0.3;      // beta: share of mask history in adjusted probs
  double history_decay = 0.9;      // rho: mask-history EMA factor
  int batch_size = 64;
  int buffer_capacity = 100000;
  double learning_rate = 3e-4;
  double selector_learning_rate = 3e-4;
  std::vector<int> hidden = {128, 128};
  double selector_bias_init = 6.0;  // selection probs start near 1 (mask open)
  // Bypasses the selector everywhere (mask = all ones, no selector updates):
  // the no-selector ablation, and the degenerate-to-plain-TD3 switch.
  bool selector_pinned = false;

  friend bool operator==(const AgentHyperparams&, const AgentHyperparams&) = default;
};

// Adjusted probability clamp: p-tilde lives in [kProbEps, 1 - kProbEps]
// before hard zeros, so Bernoulli log likelihoods stay finite.
inline constexpr double kProbEps = 1e-3;

struct Transition {
  std::vector<double> state;
  std::vector<double> action;  // actor score vector, length K
  double reward = 0.0;
  std::vector<double> next_state;
  bool done = false;
  std::vector<int> feasible_next;
};

// Ring buffer with uniform without-replacement batch sampling; all
// randomness comes from the seed.
class ReplayBuffer {
 public:
  ReplayBuffer(int capacity, std::uint64_t seed);

  void push(Transition t);
  int size() const { return static_cast<int>(data_.size()); }
  int capacity() const { return capacity_; }
  const Transition& at(int i) const { return data_[static_cast<std::size_t>(i)]; }
  // Ascending unique positions; requires size() >= batch_size.
  std::vector<int> sample_indices(int batch_size);

 private:
  int capacity_;
  int write_pos_ = 0;
  std::vector<Transition> data_;
  Rng rng_;
};

struct MaskDecision {
  std::vector<double> probs;  // adjusted p-tilde, hard-zeroed dims set to 0
  std::vector<int> mask;      // {0,1}, hard zeros on infeasible/already-selected dims
  double log_prob = 0.0;      // Bernoulli log likelihood over non-hard-zeroed dims
};

struct ActDecision {
  std::vector<double> action;  // clipped actor scores, length K
  int chosen = -1;
  MaskDecision mask;
};

struct AgentBundle {
  nn::Mlp actor, actor_target;
  nn::Mlp critic1, critic2, critic1_target, critic2_target;
  // Baselines mirror the critics but always see unmasked actions; they start
  // as exact copies of the critics so that pinning the selector makes the
  // two target constructions provably identical.
  nn::Mlp baseline1, baseline2, baseline1_target, baseline2_target;
  nn::Mlp selector, selector_target;

  nn::AdamState actor_opt, critic1_opt, critic2_opt, baseline1_opt, baseline2_opt, selector_opt;

  std::vector<double> mask_history;  // per dim in [0,1]
  std::vector<int> action_exist;     // 1 = already in the current episode's config

  AgentHyperparams hp;
  int state_dim = 0;
  int action_dim = 0;       // K
  int config_bits_offset = 0;  // where config bits start inside a flat state
  long train_calls = 0;
  std::uint64_t seed = 0;

  Rng act_noise_rng{0}, target_noise_rng{0}, mask_rng{0};
};

// config_bits_offset is q_max (plan features come first in the flat state).
AgentBundle make_bundle(int state_dim, int action_dim, int config_bits_offset,
                        const AgentHyperparams& hp, std::uint64_t seed);

enum class AgentMode { train, eval };

// Selector pass over (state, action): raw sigmoid probs blended with the
// mask history, clamped, hard-zeroed for infeasible or already-selected
// dims; train mode samples Bernoulli, eval thresholds at 0.5; in both modes
// the best feasible dim is forced on when everything sampled to zero. An
// all-infeasible input yields an all-zero mask (the empty-mask signal).
MaskDecision select_mask(AgentBundle& bundle, const StateVector& state,
                         const std::vector<double>& action, const std::vector<int>& feasible,
                         AgentMode mode);

// Actor scores (plus exploration noise in train mode) -> mask -> argmax over
// masked-in feasible dims, ties to the lowest index. Throws
// InfeasibleActionError when no candidate is feasible.
ActDecision act(AgentBundle& bundle, const StateVector& state, const std::vector<int>& feasible,
                AgentMode mode);

struct LossReport {
  double critic_loss = 0.0;
  double baseline_loss = 0.0;
  double selector_objective = 0.0;
  std::optional<double> actor_loss;
};

// Per-batch internals exposed for invariant tests.
struct TrainDebug {
  std::vector<double> y_critic, y_baseline;       // per sample targets
  std::vector<double> delta;                      // baseline minus critic squared TD error
  std::vector<std::vector<int>> fresh_masks;      // sampled mask per sample
  double reinforce_term = 0.0;                    // -mean(delta * log_prob)
  double sparsity_term = 0.0;                     // lambda * mean(sum p-tilde)
};

// One optimization step over a sampled batch: twin critics regress on masked
// actions toward the min-target, twin baselines on raw actions, selector via
// the advantage-weighted likelihood plus sparsity gradient; every
// policy_delay-th call updates the actor and soft-updates every target.
// Throws DivergenceError when any loss turns non-finite.
LossReport train_step(AgentBundle& bundle, ReplayBuffer& buffer, int batch_size,
                      TrainDebug* debug = nullptr);

struct EpisodeRecord {
  int episode = 0;
  double cum_reward = 0.0;
  double rollout_value = 0.0;
  double eff_action_space = 0.0;  // mean over steps of |{k : p-tilde >= 0.5 and feasible}|
  double seconds = 0.0;
};

struct TrainingTrace {
  std::vector<EpisodeRecord> episodes;

  std::string to_csv() const;  // episode,cum_reward,rollout_value,eff_action_space,seconds
  // Fingerprint of everything except wall-clock seconds.
  std::uint64_t content_hash() const;
};

struct TrainResult {
  AgentBundle bundle;
  TrainingTrace trace;
};

// Episode loop: reset, act, step, store, train once the buffer can serve a
// batch. Divergence aborts carry the offending episode index. Pass a start
// bundle to fine-tune; it must match the environment's dimensions.
TrainResult run_training(const Environment& env, const AgentHyperparams& hp, int episodes,
                         std::uint64_t seed, const AgentBundle* start = nullptr);

struct EvalResult {
  IndexConfiguration config;
  CostReport report;
  double value = 0.0;  // rollout_value of config
};

// Deterministic eval-mode rollout (no exploration noise, thresholded masks)
// on a fresh episode; the bundle is copied, the trained agent stays intact.
// Throws DimensionError when env dimensions do not match the bundle.
EvalResult evaluate(const AgentBundle& bundle, const Environment& env);

// Directory of per-network checkpoints plus a manifest carrying hyperparams,
// mask history, and the pool fingerprint. Optimizer state is not persisted;
// fine-tuning restarts Adam.
void save_bundle(const AgentBundle& bundle, const std::string& dir,
                 std::uint64_t pool_fingerprint);
AgentBundle load_bundle(const std::string& dir, std::uint64_t expected_pool_fingerprint);

std::uint64_t pool_fingerprint(const CandidatePool& pool);

}  // namespace idxsel
