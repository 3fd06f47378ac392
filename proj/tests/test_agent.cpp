#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "idxsel/agent.hpp"
#include "idxsel/baselines.hpp"
#include "idxsel/env.hpp"
#include "oracles.hpp"

using namespace idxsel;

namespace {

// Three single-column candidates of 0.5 units each over one table; scripted
// totals make arm 1 the clear winner.
struct BanditFixture {
  SchemaStats schema;
  Workload workload;
  CandidatePool pool;

  BanditFixture() {
    TableStats t;
    t.name = "t";
    t.row_count = 1 << 22;
    t.columns = {{"a", 8, 0.5, 0.01, 0.1}, {"b", 8, 0.5, 0.01, 0.1}, {"c", 8, 0.5, 0.01, 0.1}};
    schema.tables.push_back(t);
    schema.validate();

    Query q;
    q.id = "q0";
    q.frequency = 1.0;
    q.tables.push_back(TableAccess{
        "t",
        {{"a", PredicateKind::eq}, {"b", PredicateKind::eq}, {"c", PredicateKind::eq}},
        {}});
    workload.name = "bandit";
    workload.queries.push_back(q);
    pool = enumerate_candidates(schema, workload, 1);
    REQUIRE(pool.size() == 3);
  }

  oracles::ScriptedCostSource scripted() const {
    return oracles::ScriptedCostSource(pool, {{{}, 1000.0},
                                              {{0}, 950.0},
                                              {{1}, 800.0},
                                              {{2}, 990.0},
                                              {{0, 1}, 780.0},
                                              {{0, 2}, 945.0},
                                              {{1, 2}, 795.0},
                                              {{0, 1, 2}, 775.0}});
  }
};

AgentHyperparams small_hp() {
  AgentHyperparams hp;
  hp.hidden = {32, 32};
  hp.batch_size = 16;
  return hp;
}

Transition random_transition(const Environment& env, Rng& rng) {
  EpisodeState s = env.reset();
  std::vector<int> open;
  for (int k = 0; k < env.pool_size(); ++k)
    if (s.feasible[k]) open.push_back(k);
  const StepOutcome out = env.step(s, open[rng.below(open.size())]);
  Transition t;
  t.state = s.state_vec.flatten();
  t.action.resize(env.pool_size());
  for (auto& a : t.action) a = rng.uniform(-1.0, 1.0);
  t.reward = out.reward;
  t.next_state = out.next_state.state_vec.flatten();
  t.done = out.next_state.done;
  t.feasible_next = out.next_state.feasible;
  return t;
}

}  // namespace

TEST_CASE("replay buffer caps at capacity and samples deterministically") {
  ReplayBuffer buf(4, 9);
  Transition t;
  t.state = {0.0};
  for (int i = 0; i < 6; ++i) {
    t.reward = i;
    buf.push(t);
  }
  CHECK(buf.size() == 4);
  CHECK(buf.capacity() == 4);

  const auto batch = buf.sample_indices(3);
  REQUIRE(batch.size() == 3);
  std::set<int> unique(batch.begin(), batch.end());
  CHECK(unique.size() == 3);  // without replacement
  for (int i : batch) {
    CHECK(i >= 0);
    CHECK(i < 4);
  }
  CHECK(std::is_sorted(batch.begin(), batch.end()));

  ReplayBuffer again(4, 9);
  for (int i = 0; i < 6; ++i) again.push(t);
  CHECK(again.sample_indices(3) == batch);

  CHECK_THROWS_AS(buf.sample_indices(5), Error);
}

TEST_CASE("make_bundle starts baselines as critic copies with open masks") {
  const AgentHyperparams hp = small_hp();
  const AgentBundle b = make_bundle(20, 5, 8, hp, 3);

  CHECK(b.state_dim == 20);
  CHECK(b.action_dim == 5);
  CHECK(b.actor.input_dim() == 20);
  CHECK(b.actor.output_dim() == 5);
  CHECK(b.critic1.input_dim() == 25);
  CHECK(b.selector.output_dim() == 5);

  for (int l = 0; l < b.critic1.layer_count(); ++l) {
    CHECK((b.baseline1.weights[l] - b.critic1.weights[l]).norm() == 0.0);
    CHECK((b.baseline2.weights[l] - b.critic2.weights[l]).norm() == 0.0);
    CHECK((b.critic1_target.weights[l] - b.critic1.weights[l]).norm() == 0.0);
  }
  for (double m : b.mask_history) CHECK(m == 1.0);
  for (int e : b.action_exist) CHECK(e == 0);
  // Final selector biases carry the +6 shift so sigmoid outputs start near 1.
  CHECK(b.selector.biases.back().minCoeff() > 5.0);

  const AgentBundle b2 = make_bundle(20, 5, 8, hp, 3);
  CHECK((b2.actor.weights[0] - b.actor.weights[0]).norm() == 0.0);
  const AgentBundle b3 = make_bundle(20, 5, 8, hp, 4);
  CHECK((b3.actor.weights[0] - b.actor.weights[0]).norm() != 0.0);
}

TEST_CASE("hyperparameters are range checked") {
  AgentHyperparams hp = small_hp();
  hp.gamma = 1.5;
  CHECK_THROWS_AS(make_bundle(10, 3, 4, hp, 1), ArgumentError);
  hp = small_hp();
  hp.policy_delay = 0;
  CHECK_THROWS_AS(make_bundle(10, 3, 4, hp, 1), ArgumentError);
  hp = small_hp();
  hp.history_blend = 1.5;
  CHECK_THROWS_AS(make_bundle(10, 3, 4, hp, 1), ArgumentError);
  hp = small_hp();
  hp.batch_size = 0;
  CHECK_THROWS_AS(make_bundle(10, 3, 4, hp, 1), ArgumentError);
}

TEST_CASE("select_mask applies blending, clamps, and hard zeros") {
  AgentHyperparams hp = small_hp();
  const int K = 6;
  StateVector state;
  state.plan_features = {1.0, 1.0};
  state.config_bits.assign(K, 0.0);
  state.meta = {1.0, 0.0};
  state.query_embedding = {0.5, 0.5};
  const int state_dim = state.flat_size();
  const std::vector<double> action(K, 0.1);

  SUBCASE("full history blend pins adjusted probs to the history value") {
    hp.history_blend = 1.0;
    AgentBundle b = make_bundle(state_dim, K, 2, hp, 5);
    b.mask_history.assign(K, 0.5);
    const MaskDecision d =
        select_mask(b, state, action, std::vector<int>(K, 1), AgentMode::eval);
    for (double p : d.probs) CHECK(p == doctest::Approx(0.5).epsilon(1e-12));
  }

  SUBCASE("already-selected and infeasible dims are forced to zero") {
    AgentBundle b = make_bundle(state_dim, K, 2, hp, 5);
    std::vector<int> feasible(K, 1);
    feasible[2] = 0;
    b.action_exist[4] = 1;
    const MaskDecision d = select_mask(b, state, action, feasible, AgentMode::eval);
    CHECK(d.mask[2] == 0);
    CHECK(d.mask[4] == 0);
    CHECK(d.probs[2] == 0.0);
    CHECK(d.probs[4] == 0.0);
    // Bias init +6 keeps everything else open at the start.
    for (int k : {0, 1, 3, 5}) CHECK(d.mask[k] == 1);
  }

  SUBCASE("single feasible dim is forced on") {
    AgentBundle b = make_bundle(state_dim, K, 2, hp, 5);
    b.mask_history.assign(K, 0.0);
    b.hp.history_blend = 1.0;  // drives every adjusted prob to the clamp floor
    std::vector<int> feasible(K, 0);
    feasible[3] = 1;
    for (AgentMode mode : {AgentMode::train, AgentMode::eval}) {
      const MaskDecision d = select_mask(b, state, action, feasible, mode);
      CHECK(d.mask == std::vector<int>{0, 0, 0, 1, 0, 0});
    }
  }

  SUBCASE("all-infeasible input yields the empty mask") {
    AgentBundle b = make_bundle(state_dim, K, 2, hp, 5);
    const MaskDecision d =
        select_mask(b, state, action, std::vector<int>(K, 0), AgentMode::eval);
    for (int m : d.mask) CHECK(m == 0);
    CHECK(d.log_prob == 0.0);
  }

  SUBCASE("eval mode consumes no randomness") {
    AgentBundle b = make_bundle(state_dim, K, 2, hp, 5);
    const auto before = b.mask_rng.state();
    const MaskDecision d1 = select_mask(b, state, action, std::vector<int>(K, 1), AgentMode::eval);
    const MaskDecision d2 = select_mask(b, state, action, std::vector<int>(K, 1), AgentMode::eval);
    CHECK(b.mask_rng.state() == before);
    CHECK(d1.mask == d2.mask);
    CHECK(d1.probs == d2.probs);
  }

  SUBCASE("pinned selector bypasses even hard zeros") {
    hp.selector_pinned = true;
    AgentBundle b = make_bundle(state_dim, K, 2, hp, 5);
    b.action_exist[1] = 1;
    const MaskDecision d =
        select_mask(b, state, action, std::vector<int>(K, 0), AgentMode::train);
    for (int m : d.mask) CHECK(m == 1);
    for (double p : d.probs) CHECK(p == 1.0);
  }
}

TEST_CASE("act respects masks and is deterministic in eval mode") {
  const BanditFixture fx;
  auto source = fx.scripted();
  Environment env(fx.workload, fx.schema, fx.pool, source, EnvParams{4.0, 1, 4, 1.0});
  AgentBundle b = make_bundle(env.state_dim(), env.pool_size(), 4, small_hp(), 11);
  const EpisodeState s = env.reset();

  SUBCASE("single feasible candidate wins regardless of scores") {
    const ActDecision d = act(b, s.state_vec, {0, 0, 1}, AgentMode::eval);
    CHECK(d.chosen == 2);
  }

  SUBCASE("eval is repeatable") {
    const ActDecision d1 = act(b, s.state_vec, s.feasible, AgentMode::eval);
    const ActDecision d2 = act(b, s.state_vec, s.feasible, AgentMode::eval);
    CHECK(d1.chosen == d2.chosen);
    CHECK(d1.action == d2.action);
  }

  SUBCASE("train mode perturbs the scores") {
    const ActDecision noisy = act(b, s.state_vec, s.feasible, AgentMode::train);
    const ActDecision clean = act(b, s.state_vec, s.feasible, AgentMode::eval);
    CHECK(noisy.action != clean.action);
    for (double a : noisy.action) {
      CHECK(a >= -1.0);
      CHECK(a <= 1.0);
    }
  }

  SUBCASE("no feasible candidate is an error") {
    CHECK_THROWS_AS(act(b, s.state_vec, {0, 0, 0}, AgentMode::eval), InfeasibleActionError);
  }

  SUBCASE("chosen dim always lies inside mask and feasibility") {
    Rng rng(13);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<int> feasible(3);
      int live = 0;
      for (auto& f : feasible) live += (f = rng.bernoulli(0.6) ? 1 : 0);
      if (live == 0) continue;
      const ActDecision d = act(b, s.state_vec, feasible, AgentMode::train);
      REQUIRE(feasible[d.chosen] == 1);
      REQUIRE(d.mask.mask[d.chosen] == 1);
    }
  }
}

TEST_CASE("train_step degenerates to plain TD3 when the selector is pinned") {
  const BanditFixture fx;
  auto source = fx.scripted();
  Environment env(fx.workload, fx.schema, fx.pool, source, EnvParams{4.0, 2, 4, 1.0});
  AgentHyperparams hp = small_hp();
  hp.selector_pinned = true;
  hp.lambda_sparsity = 0.0;
  AgentBundle b = make_bundle(env.state_dim(), env.pool_size(), 4, hp, 21);

  ReplayBuffer buffer(256, 21);
  Rng rng(33);
  for (int i = 0; i < 64; ++i) buffer.push(random_transition(env, rng));

  for (int step = 0; step < 8; ++step) {
    TrainDebug dbg;
    const LossReport losses = train_step(b, buffer, hp.batch_size, &dbg);
    REQUIRE(dbg.y_critic.size() == dbg.y_baseline.size());
    for (std::size_t i = 0; i < dbg.y_critic.size(); ++i) {
      REQUIRE(dbg.y_critic[i] == dbg.y_baseline[i]);  // bitwise: same towers
      REQUIRE(dbg.delta[i] == 0.0);
    }
    CHECK(losses.critic_loss == losses.baseline_loss);
    CHECK(losses.selector_objective == 0.0);
  }
}

TEST_CASE("train_step schedules actor updates and keeps history bounded") {
  const BanditFixture fx;
  auto source = fx.scripted();
  Environment env(fx.workload, fx.schema, fx.pool, source, EnvParams{4.0, 2, 4, 1.0});
  AgentHyperparams hp = small_hp();
  hp.policy_delay = 2;
  AgentBundle b = make_bundle(env.state_dim(), env.pool_size(), 4, hp, 22);

  ReplayBuffer buffer(256, 22);
  Rng rng(34);
  for (int i = 0; i < 64; ++i) buffer.push(random_transition(env, rng));

  ReplayBuffer starved(8, 1);
  starved.push(random_transition(env, rng));
  CHECK_THROWS_AS(train_step(b, starved, 16, nullptr), Error);

  const LossReport first = train_step(b, buffer, hp.batch_size, nullptr);
  CHECK_FALSE(first.actor_loss.has_value());
  const LossReport second = train_step(b, buffer, hp.batch_size, nullptr);
  CHECK(second.actor_loss.has_value());

  for (int step = 0; step < 60; ++step) train_step(b, buffer, hp.batch_size, nullptr);
  for (double m : b.mask_history) {
    CHECK(m >= 0.0);
    CHECK(m <= 1.0);
  }
}

TEST_CASE("sparsity pressure pushes selection probabilities down") {
  const BanditFixture fx;
  auto source = fx.scripted();
  Environment env(fx.workload, fx.schema, fx.pool, source, EnvParams{4.0, 2, 4, 1.0});
  AgentHyperparams hp = small_hp();
  hp.lambda_sparsity = 0.1;
  hp.selector_bias_init = 0.0;  // keep the sigmoid responsive
  hp.history_blend = 0.0;       // isolate the raw selector output
  AgentBundle b = make_bundle(env.state_dim(), env.pool_size(), 4, hp, 23);

  ReplayBuffer buffer(512, 23);
  Rng rng(35);
  for (int i = 0; i < 128; ++i) buffer.push(random_transition(env, rng));

  const EpisodeState probe = env.reset();
  const std::vector<double> action(env.pool_size(), 0.0);
  auto mean_prob = [&]() {
    AgentBundle snapshot = b;
    const MaskDecision d =
        select_mask(snapshot, probe.state_vec, action, probe.feasible, AgentMode::eval);
    double sum = 0.0;
    for (double p : d.probs) sum += p;
    return sum / static_cast<double>(d.probs.size());
  };

  const double before = mean_prob();
  for (int step = 0; step < 300; ++step) train_step(b, buffer, hp.batch_size, nullptr);
  CHECK(mean_prob() < before);
}

TEST_CASE("sparsity pressure reaches dims saturated past the probability ceiling") {
  const BanditFixture fx;
  auto source = fx.scripted();
  Environment env(fx.workload, fx.schema, fx.pool, source, EnvParams{4.0, 2, 4, 1.0});
  AgentHyperparams hp = small_hp();
  hp.lambda_sparsity = 0.05;
  hp.selector_learning_rate = 3e-3;
  hp.selector_bias_init = 12.0;  // blend starts pinned at the 1 - 1e-3 clamp
  AgentBundle b = make_bundle(env.state_dim(), env.pool_size(), 4, hp, 29);

  ReplayBuffer buffer(512, 29);
  Rng rng(36);
  for (int i = 0; i < 128; ++i) buffer.push(random_transition(env, rng));

  const EpisodeState probe = env.reset();
  const std::vector<double> action(env.pool_size(), 0.0);
  auto max_prob = [&]() {
    AgentBundle snapshot = b;
    const MaskDecision d =
        select_mask(snapshot, probe.state_vec, action, probe.feasible, AgentMode::eval);
    double worst = 0.0;
    for (double p : d.probs) worst = std::max(worst, p);
    return worst;
  };

  CHECK(max_prob() == 1.0 - 1e-3);
  for (int step = 0; step < 800; ++step) train_step(b, buffer, hp.batch_size, nullptr);
  CHECK(max_prob() < 1.0 - 1e-3);
}

TEST_CASE("training run is reproducible and its trace hash ignores wall time") {
  const BanditFixture fx;
  auto source = fx.scripted();
  Environment env(fx.workload, fx.schema, fx.pool, source, EnvParams{4.0, 2, 4, 1.0});
  AgentHyperparams hp = small_hp();
  hp.buffer_capacity = 512;

  const TrainResult a = run_training(env, hp, 40, 77);
  const TrainResult b = run_training(env, hp, 40, 77);
  REQUIRE(a.trace.episodes.size() == 40);
  CHECK(a.trace.content_hash() == b.trace.content_hash());
  for (std::size_t i = 0; i < a.trace.episodes.size(); ++i) {
    CHECK(a.trace.episodes[i].cum_reward == b.trace.episodes[i].cum_reward);
    CHECK(a.trace.episodes[i].rollout_value == b.trace.episodes[i].rollout_value);
    CHECK(a.trace.episodes[i].eff_action_space == b.trace.episodes[i].eff_action_space);
  }

  const TrainResult c = run_training(env, hp, 40, 78);
  CHECK(a.trace.content_hash() != c.trace.content_hash());

  TrainingTrace zeroed = a.trace;
  for (auto& rec : zeroed.episodes) rec.seconds = 0.0;
  CHECK(zeroed.content_hash() == a.trace.content_hash());
  zeroed.episodes[0].cum_reward += 1.0;
  CHECK(zeroed.content_hash() != a.trace.content_hash());

  const std::string csv = a.trace.to_csv();
  CHECK(csv.rfind("episode,cum_reward,rollout_value,eff_action_space,seconds\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 41);
}

TEST_CASE("zero-episode training returns an untouched bundle and empty trace") {
  const BanditFixture fx;
  auto source = fx.scripted();
  Environment env(fx.workload, fx.schema, fx.pool, source, EnvParams{4.0, 2, 4, 1.0});
  const TrainResult r = run_training(env, small_hp(), 0, 5);
  CHECK(r.trace.episodes.empty());
  CHECK(r.trace.to_csv() == "episode,cum_reward,rollout_value,eff_action_space,seconds\n");
  const AgentBundle fresh = make_bundle(env.state_dim(), env.pool_size(), env.params().q_max,
                                        small_hp(), 5);
  CHECK((r.bundle.actor.weights[0] - fresh.actor.weights[0]).norm() == 0.0);
}

TEST_CASE("absurd learning rates trip the divergence guard with context") {
  const BanditFixture fx;
  auto source = fx.scripted();
  Environment env(fx.workload, fx.schema, fx.pool, source, EnvParams{4.0, 2, 4, 1.0});
  // Large enough that squared critic outputs overflow double range; tanh
  // saturation keeps anything milder finite forever.
  AgentHyperparams hp = small_hp();
  hp.learning_rate = 1e200;
  hp.batch_size = 8;
  try {
    run_training(env, hp, 400, 6);
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& e) {
    CHECK(std::string(e.what()).find("episode") != std::string::npos);
  }
}

TEST_CASE("evaluate returns a deterministic, budget-feasible configuration") {
  const BanditFixture fx;
  auto source = fx.scripted();
  Environment env(fx.workload, fx.schema, fx.pool, source, EnvParams{1.2, 0, 4, 1.0});
  const TrainResult trained = run_training(env, small_hp(), 30, 9);

  const EvalResult e1 = evaluate(trained.bundle, env);
  const EvalResult e2 = evaluate(trained.bundle, env);
  CHECK(e1.config == e2.config);
  CHECK(e1.value == e2.value);
  CHECK(e1.config.total_storage_units() <= 1.2 + 1e-9);
  CHECK(e1.value ==
        doctest::Approx(1.0 - e1.report.total_cost / env.empty_cost()).epsilon(1e-12));

  Environment other(fx.workload, fx.schema,
                    extend_pool(fx.pool, {IndexDef{"t", {"a", "b"}}}, fx.schema), source,
                    EnvParams{1.2, 0, 4, 1.0});
  CHECK_THROWS_AS(evaluate(trained.bundle, other), DimensionError);
}

TEST_CASE("bandit instance: the dominant arm wins after training") {
  const BanditFixture fx;
  auto source = fx.scripted();
  Environment env(fx.workload, fx.schema, fx.pool, source, EnvParams{0.6, 1, 4, 1.0});

  // One-step episodes: expected reward per arm straight from the formula.
  const EpisodeState s0 = env.reset();
  std::vector<double> arm_reward(3);
  for (int k = 0; k < 3; ++k) arm_reward[k] = env.step(s0, k).reward;
  CHECK(arm_reward[1] == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(arm_reward[1] > arm_reward[0]);
  CHECK(arm_reward[1] > arm_reward[2]);

  AgentHyperparams hp = small_hp();
  hp.gamma = 0.0;
  hp.buffer_capacity = 4096;
  const TrainResult trained = run_training(env, hp, 400, 12);
  AgentBundle b = trained.bundle;
  b.action_exist.assign(b.action_exist.size(), 0);
  const ActDecision d = act(b, s0.state_vec, s0.feasible, AgentMode::eval);
  CHECK(d.chosen == 1);
}

TEST_CASE("checkpoints round trip through disk and police the pool") {
  const BanditFixture fx;
  auto source = fx.scripted();
  Environment env(fx.workload, fx.schema, fx.pool, source, EnvParams{4.0, 2, 4, 1.0});
  const TrainResult trained = run_training(env, small_hp(), 25, 31);

  const auto dir = std::filesystem::temp_directory_path() / "idxsel_bundle_rt";
  std::filesystem::remove_all(dir);
  const std::uint64_t fp = pool_fingerprint(fx.pool);
  save_bundle(trained.bundle, dir.string(), fp);
  const AgentBundle loaded = load_bundle(dir.string(), fp);

  CHECK(loaded.hp == trained.bundle.hp);
  CHECK(loaded.state_dim == trained.bundle.state_dim);
  CHECK(loaded.mask_history == trained.bundle.mask_history);
  for (int l = 0; l < loaded.actor.layer_count(); ++l)
    CHECK((loaded.actor.weights[l] - trained.bundle.actor.weights[l]).norm() == 0.0);

  const EvalResult before = evaluate(trained.bundle, env);
  const EvalResult after = evaluate(loaded, env);
  CHECK(before.config == after.config);
  CHECK(before.value == after.value);

  CHECK_THROWS_AS(load_bundle(dir.string(), fp + 1), InvariantViolation);
  const CandidatePool other = extend_pool(fx.pool, {IndexDef{"t", {"a", "b"}}}, fx.schema);
  CHECK(pool_fingerprint(other) != fp);
}

TEST_CASE("pinned-selector ablation reports the raw feasible action space") {
  const BanditFixture fx;
  auto source = fx.scripted();
  // Budget fits everything, episodes run the pool down to exhaustion.
  Environment env(fx.workload, fx.schema, fx.pool, source, EnvParams{4.0, 0, 4, 1.0});
  const AblationResult ablation = td3_nomask(env, small_hp(), 12, 44);
  REQUIRE(ablation.trace.episodes.size() == 12);

  // Pinned masks never hide anything: per episode the mean of K, K-1, K-2.
  const double expected = (3.0 + 2.0 + 1.0) / 3.0;
  for (const auto& rec : ablation.trace.episodes)
    CHECK(rec.eff_action_space == doctest::Approx(expected).epsilon(1e-12));
  CHECK(ablation.bundle.hp.selector_pinned);
  CHECK(ablation.result.config.total_storage_units() <= 4.0 + 1e-9);
}
