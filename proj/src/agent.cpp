#include "idxsel/agent.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace idxsel {

using nlohmann::json;

namespace {

double clip(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

Eigen::VectorXd to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::VectorXd concat(const std::vector<double>& state, const Eigen::VectorXd& action) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(state.size()) + action.size());
  out.head(static_cast<Eigen::Index>(state.size())) = to_vec(state);
  out.tail(action.size()) = action;
  return out;
}

void validate_hyperparams(const AgentHyperparams& hp) {
  if (hp.gamma < 0.0 || hp.gamma > 1.0) throw ArgumentError("gamma must be in [0,1]");
  if (!(hp.tau > 0.0 && hp.tau <= 1.0)) throw ArgumentError("tau must be in (0,1]");
  if (hp.policy_delay < 1) throw ArgumentError("policy_delay must be >= 1");
  if (hp.explore_noise < 0.0 || hp.target_noise < 0.0 || hp.noise_clip < 0.0) {
    throw ArgumentError("noise parameters must be non-negative");
  }
  if (hp.lambda_sparsity < 0.0) throw ArgumentError("lambda_sparsity must be >= 0");
  if (hp.history_blend < 0.0 || hp.history_blend > 1.0) {
    throw ArgumentError("history_blend must be in [0,1]");
  }
  if (hp.history_decay < 0.0 || hp.history_decay > 1.0) {
    throw ArgumentError("history_decay must be in [0,1]");
  }
  if (hp.batch_size < 1) throw ArgumentError("batch_size must be >= 1");
  if (hp.buffer_capacity < hp.batch_size) {
    throw ArgumentError("buffer_capacity must be >= batch_size");
  }
  if (!(hp.learning_rate > 0.0) || !(hp.selector_learning_rate > 0.0)) {
    throw ArgumentError("learning rates must be positive");
  }
  if (hp.hidden.empty()) throw ArgumentError("hidden layer list must be non-empty");
  for (int h : hp.hidden) {
    if (h < 1) throw ArgumentError("hidden layer sizes must be positive");
  }
}

// Selector pass internals kept around for the backward pass.
struct MaskDetail {
  MaskDecision decision;
  Eigen::VectorXd input;          // state ++ action fed to the selector
  std::vector<double> raw_probs;  // sigmoid outputs before blending
  std::vector<char> hard_zero;    // infeasible or already selected
  std::vector<char> clamped;      // blend fell outside [kProbEps, 1-kProbEps]
};

MaskDetail mask_core(const nn::Mlp& selector, const AgentHyperparams& hp,
                     const std::vector<double>& mask_history,
                     const std::vector<double>& state_flat, const Eigen::VectorXd& action,
                     const std::vector<int>& feasible, const std::vector<int>& exist,
                     bool train, Rng* rng) {
  const int k_dims = static_cast<int>(action.size());
  MaskDetail detail;
  detail.decision.probs.assign(static_cast<std::size_t>(k_dims), 0.0);
  detail.decision.mask.assign(static_cast<std::size_t>(k_dims), 0);
  detail.hard_zero.assign(static_cast<std::size_t>(k_dims), 0);
  detail.clamped.assign(static_cast<std::size_t>(k_dims), 0);

  if (hp.selector_pinned) {
    detail.decision.probs.assign(static_cast<std::size_t>(k_dims), 1.0);
    detail.decision.mask.assign(static_cast<std::size_t>(k_dims), 1);
    detail.raw_probs.assign(static_cast<std::size_t>(k_dims), 1.0);
    return detail;
  }

  detail.input = concat(state_flat, action);
  const Eigen::VectorXd p = nn::forward(selector, detail.input);
  detail.raw_probs.assign(p.data(), p.data() + p.size());

  const double beta = hp.history_blend;
  for (int k = 0; k < k_dims; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    const double blend = (1.0 - beta) * p(k) + beta * mask_history[ks];
    const double adjusted = clip(blend, kProbEps, 1.0 - kProbEps);
    detail.clamped[ks] = adjusted != blend ? 1 : 0;
    detail.hard_zero[ks] = (feasible[ks] == 0 || exist[ks] != 0) ? 1 : 0;
    // The rng stream advances for every dim so its position never depends on
    // the hard-zero pattern.
    const double u = (train && rng != nullptr) ? rng->uniform01() : 0.0;
    if (detail.hard_zero[ks]) continue;
    detail.decision.probs[ks] = adjusted;
    detail.decision.mask[ks] = train ? (u < adjusted ? 1 : 0) : (adjusted >= 0.5 ? 1 : 0);
  }

  bool any_on = false;
  bool any_selectable = false;
  int best = -1;
  for (int k = 0; k < k_dims; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    if (detail.hard_zero[ks]) continue;
    any_selectable = true;
    any_on = any_on || detail.decision.mask[ks] == 1;
    if (best < 0 || detail.decision.probs[ks] > detail.decision.probs[static_cast<std::size_t>(best)]) {
      best = k;
    }
  }
  if (!any_on && any_selectable) {
    detail.decision.mask[static_cast<std::size_t>(best)] = 1;  // force-on rule
  }

  double log_prob = 0.0;
  for (int k = 0; k < k_dims; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    if (detail.hard_zero[ks]) continue;
    const double q = detail.decision.probs[ks];
    log_prob += detail.decision.mask[ks] == 1 ? std::log(q) : std::log(1.0 - q);
  }
  detail.decision.log_prob = log_prob;
  return detail;
}

std::vector<int> config_bits_slice(const std::vector<double>& flat_state, int offset, int k_dims) {
  std::vector<int> bits(static_cast<std::size_t>(k_dims), 0);
  for (int k = 0; k < k_dims; ++k) {
    bits[static_cast<std::size_t>(k)] =
        flat_state[static_cast<std::size_t>(offset + k)] > 0.5 ? 1 : 0;
  }
  return bits;
}

}  // namespace

ReplayBuffer::ReplayBuffer(int capacity, std::uint64_t seed) : capacity_(capacity), rng_(seed) {
  if (capacity < 1) throw ArgumentError("replay buffer capacity must be >= 1");
  data_.reserve(static_cast<std::size_t>(std::min(capacity, 4096)));
}

void ReplayBuffer::push(Transition t) {
  if (size() < capacity_) {
    data_.push_back(std::move(t));
  } else {
    data_[static_cast<std::size_t>(write_pos_)] = std::move(t);
  }
  write_pos_ = (write_pos_ + 1) % capacity_;
}

std::vector<int> ReplayBuffer::sample_indices(int batch_size) {
  if (batch_size < 1) throw ArgumentError("batch_size must be >= 1");
  if (size() < batch_size) {
    throw ArgumentError("replay buffer holds " + std::to_string(size()) +
                        " transitions, need " + std::to_string(batch_size));
  }
  // Floyd's sampling: uniform without replacement.
  std::set<int> picked;
  for (int j = size() - batch_size; j < size(); ++j) {
    const int t = static_cast<int>(rng_.below(static_cast<std::uint64_t>(j) + 1));
    picked.insert(picked.count(t) ? j : t);
  }
  return std::vector<int>(picked.begin(), picked.end());
}

AgentBundle make_bundle(int state_dim, int action_dim, int config_bits_offset,
                        const AgentHyperparams& hp, std::uint64_t seed) {
  validate_hyperparams(hp);
  if (action_dim < 1) throw DimensionError("action_dim must be >= 1");
  if (config_bits_offset < 0 || config_bits_offset + action_dim > state_dim) {
    throw DimensionError("config bits do not fit inside the state vector");
  }

  AgentBundle b;
  b.hp = hp;
  b.state_dim = state_dim;
  b.action_dim = action_dim;
  b.config_bits_offset = config_bits_offset;
  b.seed = seed;

  std::vector<int> actor_dims = {state_dim};
  std::vector<int> critic_dims = {state_dim + action_dim};
  std::vector<int> selector_dims = {state_dim + action_dim};
  std::vector<nn::Activation> hidden_acts;
  for (int h : hp.hidden) {
    actor_dims.push_back(h);
    critic_dims.push_back(h);
    selector_dims.push_back(h);
    hidden_acts.push_back(nn::Activation::relu);
  }
  actor_dims.push_back(action_dim);
  critic_dims.push_back(1);
  selector_dims.push_back(action_dim);

  auto with_out = [&hidden_acts](nn::Activation out) {
    std::vector<nn::Activation> acts = hidden_acts;
    acts.push_back(out);
    return acts;
  };

  Rng init(seed ^ fnv1a("init"));
  const std::uint64_t actor_seed = init.next_u64();
  const std::uint64_t critic1_seed = init.next_u64();
  const std::uint64_t critic2_seed = init.next_u64();
  const std::uint64_t selector_seed = init.next_u64();

  b.actor = nn::make_mlp(actor_dims, with_out(nn::Activation::tanh), actor_seed);
  b.critic1 = nn::make_mlp(critic_dims, with_out(nn::Activation::linear), critic1_seed);
  b.critic2 = nn::make_mlp(critic_dims, with_out(nn::Activation::linear), critic2_seed);
  // Baselines start as exact copies of the critics: with the selector pinned
  // the two towers then evolve identically, which the degeneracy test checks.
  b.baseline1 = b.critic1;
  b.baseline2 = b.critic2;
  b.selector = nn::make_mlp(selector_dims, with_out(nn::Activation::sigmoid), selector_seed);
  b.selector.biases.back().array() += hp.selector_bias_init;

  b.actor_target = b.actor;
  b.critic1_target = b.critic1;
  b.critic2_target = b.critic2;
  b.baseline1_target = b.baseline1;
  b.baseline2_target = b.baseline2;
  b.selector_target = b.selector;

  b.actor_opt = nn::make_adam(b.actor, hp.learning_rate);
  b.critic1_opt = nn::make_adam(b.critic1, hp.learning_rate);
  b.critic2_opt = nn::make_adam(b.critic2, hp.learning_rate);
  b.baseline1_opt = nn::make_adam(b.baseline1, hp.learning_rate);
  b.baseline2_opt = nn::make_adam(b.baseline2, hp.learning_rate);
  b.selector_opt = nn::make_adam(b.selector, hp.selector_learning_rate);

  b.mask_history.assign(static_cast<std::size_t>(action_dim), 1.0);
  b.action_exist.assign(static_cast<std::size_t>(action_dim), 0);

  b.act_noise_rng = Rng(seed ^ fnv1a("act_noise"));
  b.target_noise_rng = Rng(seed ^ fnv1a("target_noise"));
  b.mask_rng = Rng(seed ^ fnv1a("mask"));
  return b;
}

MaskDecision select_mask(AgentBundle& bundle, const StateVector& state,
                         const std::vector<double>& action, const std::vector<int>& feasible,
                         AgentMode mode) {
  if (static_cast<int>(action.size()) != bundle.action_dim ||
      static_cast<int>(feasible.size()) != bundle.action_dim) {
    throw DimensionError("select_mask: vector lengths must equal K");
  }
  const std::vector<double> flat = state.flatten();
  if (static_cast<int>(flat.size()) != bundle.state_dim) {
    throw DimensionError("select_mask: state size " + std::to_string(flat.size()) +
                         " != expected " + std::to_string(bundle.state_dim));
  }
  const bool train = mode == AgentMode::train;
  return mask_core(bundle.selector, bundle.hp, bundle.mask_history, flat, to_vec(action),
                   feasible, bundle.action_exist, train, train ? &bundle.mask_rng : nullptr)
      .decision;
}

ActDecision act(AgentBundle& bundle, const StateVector& state, const std::vector<int>& feasible,
                AgentMode mode) {
  if (static_cast<int>(feasible.size()) != bundle.action_dim) {
    throw DimensionError("act: feasible vector length must equal K");
  }
  const std::vector<double> flat = state.flatten();
  if (static_cast<int>(flat.size()) != bundle.state_dim) {
    throw DimensionError("act: state size mismatch");
  }
  bool any_feasible = false;
  for (int f : feasible) any_feasible = any_feasible || f != 0;
  if (!any_feasible) throw InfeasibleActionError("act: no feasible candidate");

  Eigen::VectorXd scores = nn::forward(bundle.actor, to_vec(flat));
  if (mode == AgentMode::train) {
    for (Eigen::Index k = 0; k < scores.size(); ++k) {
      scores(k) += bundle.act_noise_rng.normal(0.0, bundle.hp.explore_noise);
    }
  }
  for (Eigen::Index k = 0; k < scores.size(); ++k) scores(k) = clip(scores(k), -1.0, 1.0);

  const bool train = mode == AgentMode::train;
  MaskDetail detail =
      mask_core(bundle.selector, bundle.hp, bundle.mask_history, flat, scores, feasible,
                bundle.action_exist, train, train ? &bundle.mask_rng : nullptr);

  int chosen = -1;
  for (int k = 0; k < bundle.action_dim; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    if (detail.decision.mask[ks] == 0 || feasible[ks] == 0) continue;
    if (chosen < 0 || scores(k) > scores(chosen)) chosen = k;
  }
  if (chosen < 0) {
    throw InfeasibleActionError("act: the selection mask left no feasible candidate");
  }
  // Hard-zero safety: a masked-out or infeasible dim must never be executed.
  if (feasible[static_cast<std::size_t>(chosen)] == 0 ||
      detail.decision.mask[static_cast<std::size_t>(chosen)] == 0) {
    throw InvariantViolation("act: chose a masked or infeasible dimension");
  }

  ActDecision decision;
  decision.action.assign(scores.data(), scores.data() + scores.size());
  decision.chosen = chosen;
  decision.mask = std::move(detail.decision);
  return decision;
}

LossReport train_step(AgentBundle& b, ReplayBuffer& buffer, int batch_size, TrainDebug* debug) {
  const int K = b.action_dim;
  const auto picks = buffer.sample_indices(batch_size);
  const double n = static_cast<double>(batch_size);
  b.train_calls += 1;

  nn::Gradients g_c1 = nn::zero_gradients(b.critic1);
  nn::Gradients g_c2 = nn::zero_gradients(b.critic2);
  nn::Gradients g_b1 = nn::zero_gradients(b.baseline1);
  nn::Gradients g_b2 = nn::zero_gradients(b.baseline2);
  nn::Gradients g_sel = nn::zero_gradients(b.selector);

  LossReport report;
  double reinforce_term = 0.0;
  double sparsity_term = 0.0;
  std::vector<double> y_c(picks.size()), y_b(picks.size()), delta(picks.size());
  std::vector<MaskDetail> fresh(picks.size());

  for (std::size_t i = 0; i < picks.size(); ++i) {
    const Transition& t = buffer.at(picks[i]);

    // Target action with clipped smoothing noise, then the target selector's mask.
    Eigen::VectorXd a_tilde = nn::forward(b.actor_target, to_vec(t.next_state));
    for (Eigen::Index k = 0; k < a_tilde.size(); ++k) {
      const double noise = clip(b.target_noise_rng.normal(0.0, b.hp.target_noise),
                                -b.hp.noise_clip, b.hp.noise_clip);
      a_tilde(k) = clip(a_tilde(k) + noise, -1.0, 1.0);
    }
    const std::vector<int> exist_next = config_bits_slice(t.next_state, b.config_bits_offset, K);
    MaskDetail next_mask =
        mask_core(b.selector_target, b.hp, b.mask_history, t.next_state, a_tilde,
                  t.feasible_next, exist_next, /*train=*/true, &b.mask_rng);
    Eigen::VectorXd a_tilde_masked(K);
    for (int k = 0; k < K; ++k) {
      a_tilde_masked(k) =
          next_mask.decision.mask[static_cast<std::size_t>(k)] == 1 ? a_tilde(k) : -1.0;
    }

    const double carry = b.hp.gamma * (t.done ? 0.0 : 1.0);
    const Eigen::VectorXd xc_next = concat(t.next_state, a_tilde_masked);
    const double qc_next = std::min(nn::forward(b.critic1_target, xc_next)(0),
                                    nn::forward(b.critic2_target, xc_next)(0));
    y_c[i] = t.reward + carry * qc_next;
    const Eigen::VectorXd xb_next = concat(t.next_state, a_tilde);
    const double qb_next = std::min(nn::forward(b.baseline1_target, xb_next)(0),
                                    nn::forward(b.baseline2_target, xb_next)(0));
    y_b[i] = t.reward + carry * qb_next;

    // Fresh mask on the stored (s, a); unselected dims count as selectable.
    const std::vector<int> exist_cur = config_bits_slice(t.state, b.config_bits_offset, K);
    std::vector<int> feasible_cur(static_cast<std::size_t>(K), 0);
    for (int k = 0; k < K; ++k) {
      feasible_cur[static_cast<std::size_t>(k)] = exist_cur[static_cast<std::size_t>(k)] ? 0 : 1;
    }
    const Eigen::VectorXd action = to_vec(t.action);
    fresh[i] = mask_core(b.selector, b.hp, b.mask_history, t.state, action, feasible_cur,
                         exist_cur, /*train=*/true, &b.mask_rng);
    Eigen::VectorXd masked_action(K);
    for (int k = 0; k < K; ++k) {
      masked_action(k) = fresh[i].decision.mask[static_cast<std::size_t>(k)] == 1 ? action(k) : -1.0;
    }

    const Eigen::VectorXd xc = concat(t.state, masked_action);
    const Eigen::VectorXd xb = concat(t.state, action);
    const double e1 = nn::forward(b.critic1, xc)(0) - y_c[i];
    const double e2 = nn::forward(b.critic2, xc)(0) - y_c[i];
    const double f1 = nn::forward(b.baseline1, xb)(0) - y_b[i];
    const double f2 = nn::forward(b.baseline2, xb)(0) - y_b[i];

    const double loss_c = 0.5 * (e1 * e1 + e2 * e2);
    const double loss_b = 0.5 * (f1 * f1 + f2 * f2);
    report.critic_loss += loss_c / n;
    report.baseline_loss += loss_b / n;
    delta[i] = loss_b - loss_c;

    Eigen::VectorXd one(1);
    one(0) = e1 / n;
    g_c1.add_scaled(nn::backward(b.critic1, xc, one), 1.0);
    one(0) = e2 / n;
    g_c2.add_scaled(nn::backward(b.critic2, xc, one), 1.0);
    one(0) = f1 / n;
    g_b1.add_scaled(nn::backward(b.baseline1, xb, one), 1.0);
    one(0) = f2 / n;
    g_b2.add_scaled(nn::backward(b.baseline2, xb, one), 1.0);

    if (!b.hp.selector_pinned) {
      // d/dp of (-delta*log_prob + lambda*sum(p-tilde))/n through the blend
      // and clamp; hard-zeroed dims contribute nothing.
      Eigen::VectorXd upstream = Eigen::VectorXd::Zero(K);
      double prob_sum = 0.0;
      for (int k = 0; k < K; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        if (fresh[i].hard_zero[ks]) continue;
        const double q = fresh[i].decision.probs[ks];
        prob_sum += q;
        if (fresh[i].clamped[ks]) {
          // Ceiling-clamped dims keep the constant sparsity pressure
          // (straight-through); otherwise a dim whose blend saturates past
          // the clamp loses all gradient and can never re-enter the active
          // range. The likelihood term stays gated: its true derivative is
          // zero there and its surrogate blows up as 1/(1-q). The floor
          // needs no escape force.
          if (q >= 1.0 - kProbEps)
            upstream(k) = b.hp.lambda_sparsity * (1.0 - b.hp.history_blend) / n;
          continue;
        }
        const double dlog =
            fresh[i].decision.mask[ks] == 1 ? 1.0 / q : -1.0 / (1.0 - q);
        upstream(k) = (-delta[i] * dlog + b.hp.lambda_sparsity) * (1.0 - b.hp.history_blend) / n;
      }
      g_sel.add_scaled(nn::backward(b.selector, fresh[i].input, upstream), 1.0);
      reinforce_term += -delta[i] * fresh[i].decision.log_prob / n;
      sparsity_term += b.hp.lambda_sparsity * prob_sum / n;
    }
  }
  report.selector_objective = reinforce_term + sparsity_term;

  if (!std::isfinite(report.critic_loss) || !std::isfinite(report.baseline_loss) ||
      !std::isfinite(report.selector_objective)) {
    throw DivergenceError("train_step produced a non-finite loss (critic " +
                          std::to_string(report.critic_loss) + ", baseline " +
                          std::to_string(report.baseline_loss) + ", selector " +
                          std::to_string(report.selector_objective) + ")");
  }

  nn::adam_step(b.critic1, g_c1, b.critic1_opt);
  nn::adam_step(b.critic2, g_c2, b.critic2_opt);
  nn::adam_step(b.baseline1, g_b1, b.baseline1_opt);
  nn::adam_step(b.baseline2, g_b2, b.baseline2_opt);
  if (!b.hp.selector_pinned) nn::adam_step(b.selector, g_sel, b.selector_opt);

  if (b.train_calls % b.hp.policy_delay == 0) {
    nn::Gradients g_a = nn::zero_gradients(b.actor);
    double actor_loss = 0.0;
    for (std::size_t i = 0; i < picks.size(); ++i) {
      const Transition& t = buffer.at(picks[i]);
      const Eigen::VectorXd pi = nn::forward(b.actor, to_vec(t.state));
      const std::vector<int> exist_cur = config_bits_slice(t.state, b.config_bits_offset, K);
      std::vector<int> feasible_cur(static_cast<std::size_t>(K), 0);
      for (int k = 0; k < K; ++k) {
        feasible_cur[static_cast<std::size_t>(k)] =
            exist_cur[static_cast<std::size_t>(k)] ? 0 : 1;
      }
      MaskDetail md = mask_core(b.selector, b.hp, b.mask_history, t.state, pi, feasible_cur,
                                exist_cur, /*train=*/false, nullptr);
      Eigen::VectorXd pi_masked(K);
      for (int k = 0; k < K; ++k) {
        pi_masked(k) = md.decision.mask[static_cast<std::size_t>(k)] == 1 ? pi(k) : -1.0;
      }
      const Eigen::VectorXd x = concat(t.state, pi_masked);
      actor_loss += -nn::forward(b.critic1, x)(0) / n;

      Eigen::VectorXd one(1);
      one(0) = -1.0 / n;
      Eigen::VectorXd input_grad;
      nn::backward(b.critic1, x, one, &input_grad);
      Eigen::VectorXd upstream = Eigen::VectorXd::Zero(K);
      for (int k = 0; k < K; ++k) {
        // Masked dims are pinned to -1, so no gradient flows to the actor.
        if (md.decision.mask[static_cast<std::size_t>(k)] == 1) {
          upstream(k) = input_grad(static_cast<Eigen::Index>(t.state.size()) + k);
        }
      }
      g_a.add_scaled(nn::backward(b.actor, to_vec(t.state), upstream), 1.0);
    }
    if (!std::isfinite(actor_loss)) {
      throw DivergenceError("train_step produced a non-finite actor loss");
    }
    nn::adam_step(b.actor, g_a, b.actor_opt);
    report.actor_loss = actor_loss;

    nn::soft_update(b.actor_target, b.actor, b.hp.tau);
    nn::soft_update(b.critic1_target, b.critic1, b.hp.tau);
    nn::soft_update(b.critic2_target, b.critic2, b.hp.tau);
    nn::soft_update(b.baseline1_target, b.baseline1, b.hp.tau);
    nn::soft_update(b.baseline2_target, b.baseline2, b.hp.tau);
    nn::soft_update(b.selector_target, b.selector, b.hp.tau);
  }

  // Mask-history EMA over the batch's sampled masks; stays in [0,1] because
  // both operands do.
  for (int k = 0; k < K; ++k) {
    double mean_mask = 0.0;
    for (const auto& f : fresh) mean_mask += f.decision.mask[static_cast<std::size_t>(k)];
    mean_mask /= n;
    const auto ks = static_cast<std::size_t>(k);
    b.mask_history[ks] =
        b.hp.history_decay * b.mask_history[ks] + (1.0 - b.hp.history_decay) * mean_mask;
  }

  if (debug != nullptr) {
    debug->y_critic = y_c;
    debug->y_baseline = y_b;
    debug->delta = delta;
    debug->fresh_masks.clear();
    for (const auto& f : fresh) debug->fresh_masks.push_back(f.decision.mask);
    debug->reinforce_term = reinforce_term;
    debug->sparsity_term = sparsity_term;
  }
  return report;
}

std::string TrainingTrace::to_csv() const {
  std::ostringstream out;
  out << "episode,cum_reward,rollout_value,eff_action_space,seconds\n";
  char buf[160];
  for (const auto& e : episodes) {
    std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g,%.10g,%.6f\n", e.episode, e.cum_reward,
                  e.rollout_value, e.eff_action_space, e.seconds);
    out << buf;
  }
  return out.str();
}

std::uint64_t TrainingTrace::content_hash() const {
  std::ostringstream out;
  char buf[160];
  for (const auto& e : episodes) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g;", e.episode, e.cum_reward,
                  e.rollout_value, e.eff_action_space);
    out << buf;
  }
  return fnv1a(out.str());
}

TrainResult run_training(const Environment& env, const AgentHyperparams& hp, int episodes,
                         std::uint64_t seed, const AgentBundle* start) {
  if (episodes < 0) throw ArgumentError("episodes must be >= 0");
  validate_hyperparams(hp);

  TrainResult result{
      start != nullptr
          ? *start
          : make_bundle(env.state_dim(), env.pool_size(), env.params().q_max, hp, seed),
      {}};
  AgentBundle& bundle = result.bundle;
  if (start != nullptr) {
    if (bundle.action_dim != env.pool_size() || bundle.state_dim != env.state_dim()) {
      throw DimensionError("run_training: start bundle does not match environment dimensions");
    }
    bundle.hp = hp;
    bundle.act_noise_rng = Rng(seed ^ fnv1a("act_noise"));
    bundle.target_noise_rng = Rng(seed ^ fnv1a("target_noise"));
    bundle.mask_rng = Rng(seed ^ fnv1a("mask"));
  }

  ReplayBuffer buffer(hp.buffer_capacity, seed ^ fnv1a("buffer"));
  for (int ep = 0; ep < episodes; ++ep) {
    const auto t0 = std::chrono::steady_clock::now();
    EpisodeState state = env.reset();
    std::fill(bundle.action_exist.begin(), bundle.action_exist.end(), 0);

    double cum_reward = 0.0;
    double eff_sum = 0.0;
    int steps = 0;
    try {
      while (!state.done) {
        ActDecision decision = act(bundle, state.state_vec, state.feasible, AgentMode::train);
        int eff = 0;
        for (int k = 0; k < bundle.action_dim; ++k) {
          const auto ks = static_cast<std::size_t>(k);
          if (decision.mask.probs[ks] >= 0.5 && state.feasible[ks] == 1) ++eff;
        }
        eff_sum += eff;

        StepOutcome outcome = env.step(state, decision.chosen);
        buffer.push(Transition{state.state_vec.flatten(), decision.action, outcome.reward,
                               outcome.next_state.state_vec.flatten(), outcome.next_state.done,
                               outcome.next_state.feasible});
        cum_reward += outcome.reward;
        steps += 1;
        bundle.action_exist[static_cast<std::size_t>(decision.chosen)] = 1;
        state = std::move(outcome.next_state);

        if (buffer.size() >= hp.batch_size) {
          train_step(bundle, buffer, hp.batch_size);
        }
      }
    } catch (const DivergenceError& e) {
      throw DivergenceError(std::string(e.what()) + " (episode " + std::to_string(ep) + ")");
    }

    EpisodeRecord record;
    record.episode = ep;
    record.cum_reward = cum_reward;
    record.rollout_value = rollout_value(env.workload(), state.config, env.source());
    record.eff_action_space = steps > 0 ? eff_sum / steps : 0.0;
    record.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.trace.episodes.push_back(record);
  }
  return result;
}

EvalResult evaluate(const AgentBundle& bundle, const Environment& env) {
  if (env.pool_size() != bundle.action_dim) {
    throw DimensionError("evaluate: candidate pool size " + std::to_string(env.pool_size()) +
                         " != agent action dim " + std::to_string(bundle.action_dim) +
                         " (agents do not transfer across pools of different size)");
  }
  if (env.state_dim() != bundle.state_dim) {
    throw DimensionError("evaluate: state dim " + std::to_string(env.state_dim()) +
                         " != agent state dim " + std::to_string(bundle.state_dim));
  }
  AgentBundle local = bundle;  // the trained bundle stays untouched
  std::fill(local.action_exist.begin(), local.action_exist.end(), 0);
  EpisodeState state = env.reset();
  while (!state.done) {
    const ActDecision decision = act(local, state.state_vec, state.feasible, AgentMode::eval);
    StepOutcome outcome = env.step(state, decision.chosen);
    local.action_exist[static_cast<std::size_t>(decision.chosen)] = 1;
    state = std::move(outcome.next_state);
  }
  EvalResult result;
  result.config = state.config;
  result.report = env.source().evaluate(env.workload(), state.config);
  result.value = 1.0 - result.report.total_cost / env.empty_cost();
  return result;
}

std::uint64_t pool_fingerprint(const CandidatePool& pool) {
  std::ostringstream out;
  for (const auto& index : pool.candidates()) out << index.display() << ";";
  return fnv1a(out.str());
}

namespace {

json hyperparams_to_json(const AgentHyperparams& hp) {
  return json{{"gamma", hp.gamma},
              {"tau", hp.tau},
              {"policy_delay", hp.policy_delay},
              {"explore_noise", hp.explore_noise},
              {"target_noise", hp.target_noise},
              {"noise_clip", hp.noise_clip},
              {"lambda_sparsity", hp.lambda_sparsity},
              {"history_blend", hp.history_blend},
              {"history_decay", hp.history_decay},
              {"batch_size", hp.batch_size},
              {"buffer_capacity", hp.buffer_capacity},
              {"learning_rate", hp.learning_rate},
              {"selector_learning_rate", hp.selector_learning_rate},
              {"hidden", hp.hidden},
              {"selector_bias_init", hp.selector_bias_init},
              {"selector_pinned", hp.selector_pinned}};
}

AgentHyperparams hyperparams_from_json(const json& j) {
  AgentHyperparams hp;
  hp.gamma = j.at("gamma").get<double>();
  hp.tau = j.at("tau").get<double>();
  hp.policy_delay = j.at("policy_delay").get<int>();
  hp.explore_noise = j.at("explore_noise").get<double>();
  hp.target_noise = j.at("target_noise").get<double>();
  hp.noise_clip = j.at("noise_clip").get<double>();
  hp.lambda_sparsity = j.at("lambda_sparsity").get<double>();
  hp.history_blend = j.at("history_blend").get<double>();
  hp.history_decay = j.at("history_decay").get<double>();
  hp.batch_size = j.at("batch_size").get<int>();
  hp.buffer_capacity = j.at("buffer_capacity").get<int>();
  hp.learning_rate = j.at("learning_rate").get<double>();
  hp.selector_learning_rate = j.at("selector_learning_rate").get<double>();
  hp.hidden = j.at("hidden").get<std::vector<int>>();
  hp.selector_bias_init = j.at("selector_bias_init").get<double>();
  hp.selector_pinned = j.at("selector_pinned").get<bool>();
  return hp;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

constexpr const char* kNetNames[] = {"actor",     "actor_target",    "critic1",
                                     "critic2",   "critic1_target",  "critic2_target",
                                     "baseline1", "baseline2",       "baseline1_target",
                                     "baseline2_target", "selector", "selector_target"};

std::vector<nn::Mlp*> bundle_nets(AgentBundle& b) {
  return {&b.actor,     &b.actor_target,    &b.critic1,
          &b.critic2,   &b.critic1_target,  &b.critic2_target,
          &b.baseline1, &b.baseline2,       &b.baseline1_target,
          &b.baseline2_target, &b.selector, &b.selector_target};
}

std::vector<const nn::Mlp*> bundle_nets(const AgentBundle& b) {
  return {&b.actor,     &b.actor_target,    &b.critic1,
          &b.critic2,   &b.critic1_target,  &b.critic2_target,
          &b.baseline1, &b.baseline2,       &b.baseline1_target,
          &b.baseline2_target, &b.selector, &b.selector_target};
}

}  // namespace

void save_bundle(const AgentBundle& bundle, const std::string& dir,
                 std::uint64_t pool_fingerprint) {
  std::filesystem::create_directories(dir);
  const auto nets = bundle_nets(bundle);
  for (std::size_t i = 0; i < nets.size(); ++i) {
    write_text(std::filesystem::path(dir) / (std::string(kNetNames[i]) + ".json"),
               nn::mlp_to_json(*nets[i]));
  }
  json manifest = {{"version", 1},
                   {"hyperparams", hyperparams_to_json(bundle.hp)},
                   {"mask_history", bundle.mask_history},
                   {"pool_fingerprint", to_hex(pool_fingerprint)},
                   {"state_dim", bundle.state_dim},
                   {"action_dim", bundle.action_dim},
                   {"config_bits_offset", bundle.config_bits_offset},
                   {"train_calls", bundle.train_calls},
                   {"seed", bundle.seed}};
  write_text(std::filesystem::path(dir) / "manifest.json", manifest.dump(2));
}

AgentBundle load_bundle(const std::string& dir, std::uint64_t expected_pool_fingerprint) {
  json manifest;
  try {
    manifest = json::parse(read_text(std::filesystem::path(dir) / "manifest.json"));
  } catch (const json::exception& e) {
    throw ParseError(std::string("bundle manifest: invalid JSON: ") + e.what());
  }
  try {
    if (manifest.at("version").get<int>() != 1) {
      throw ParseError("bundle manifest: unsupported version");
    }
    const std::string fingerprint = manifest.at("pool_fingerprint").get<std::string>();
    if (fingerprint != to_hex(expected_pool_fingerprint)) {
      throw InvariantViolation("bundle was trained on a different candidate pool (fingerprint " +
                               fingerprint + ", expected " +
                               to_hex(expected_pool_fingerprint) + ")");
    }
    AgentBundle b;
    b.hp = hyperparams_from_json(manifest.at("hyperparams"));
    validate_hyperparams(b.hp);
    b.state_dim = manifest.at("state_dim").get<int>();
    b.action_dim = manifest.at("action_dim").get<int>();
    b.config_bits_offset = manifest.at("config_bits_offset").get<int>();
    b.train_calls = manifest.at("train_calls").get<long>();
    b.seed = manifest.at("seed").get<std::uint64_t>();
    b.mask_history = manifest.at("mask_history").get<std::vector<double>>();
    if (static_cast<int>(b.mask_history.size()) != b.action_dim) {
      throw ParseError("bundle manifest: mask_history length != action_dim");
    }
    const auto nets = bundle_nets(b);
    for (std::size_t i = 0; i < nets.size(); ++i) {
      *nets[i] = nn::mlp_from_json(
          read_text(std::filesystem::path(dir) / (std::string(kNetNames[i]) + ".json")));
    }
    if (b.actor.input_dim() != b.state_dim || b.actor.output_dim() != b.action_dim) {
      throw ParseError("bundle: actor shape does not match manifest dims");
    }
    b.action_exist.assign(static_cast<std::size_t>(b.action_dim), 0);
    b.actor_opt = nn::make_adam(b.actor, b.hp.learning_rate);
    b.critic1_opt = nn::make_adam(b.critic1, b.hp.learning_rate);
    b.critic2_opt = nn::make_adam(b.critic2, b.hp.learning_rate);
    b.baseline1_opt = nn::make_adam(b.baseline1, b.hp.learning_rate);
    b.baseline2_opt = nn::make_adam(b.baseline2, b.hp.learning_rate);
    b.selector_opt = nn::make_adam(b.selector, b.hp.selector_learning_rate);
    b.act_noise_rng = Rng(b.seed ^ fnv1a("act_noise"));
    b.target_noise_rng = Rng(b.seed ^ fnv1a("target_noise"));
    b.mask_rng = Rng(b.seed ^ fnv1a("mask"));
    return b;
  } catch (const json::exception& e) {
    throw ParseError(std::string("bundle manifest: malformed document: ") + e.what());
  }
}

}  // namespace idxsel
