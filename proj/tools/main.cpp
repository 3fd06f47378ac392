#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "idxsel/agent.hpp"
#include "idxsel/baselines.hpp"
#include "idxsel/candidates.hpp"
#include "idxsel/common.hpp"
#include "idxsel/config.hpp"
#include "idxsel/costmodel.hpp"
#include "idxsel/env.hpp"
#include "idxsel/nn.hpp"
#include "idxsel/schema.hpp"
#include "idxsel/workload.hpp"

namespace {

using nlohmann::json;
using namespace idxsel;

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value
  std::string out_dir;
  std::string seed_text;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "Run config file (key=value lines)");
  cmd->add_option("--set", args.overrides, "Override a config key, e.g. --set budget_units=6")
      ->take_all();
  cmd->add_option("--out", args.out_dir, "Output directory (overrides out_dir)");
  cmd->add_option("--seed", args.seed_text, "Seed (overrides seed)");
}

RunConfig resolve_config(const CommonArgs& args) {
  RunConfig cfg;
  if (!args.config_path.empty()) cfg = load_run_config(args.config_path);
  for (const auto& item : args.overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) {
      throw ParseError("--set expects key=value, got '" + item + "'");
    }
    set_config_key(cfg, item.substr(0, eq), item.substr(eq + 1));
  }
  if (!args.seed_text.empty()) set_config_key(cfg, "seed", args.seed_text);
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
  return cfg;
}

std::string require_out_dir(const RunConfig& cfg) {
  if (cfg.out_dir.empty()) {
    throw ArgumentError("an output directory is required (set out_dir or pass --out)");
  }
  std::filesystem::create_directories(cfg.out_dir);
  return cfg.out_dir;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

struct Instance {
  SchemaStats schema;
  Workload workload;
  CandidatePool pool;
  std::unique_ptr<CostSource> source;
  std::unique_ptr<Environment> env;
};

Instance build_instance(const RunConfig& cfg, bool with_env = true) {
  Instance inst;
  inst.schema = cfg.schema_path.empty()
                    ? generate_schema(parse_profile(cfg.schema_profile), cfg.seed)
                    : load_schema(cfg.schema_path);
  inst.workload =
      cfg.workload_path.empty()
          ? generate_workload(inst.schema, cfg.template_count, cfg.queries_per_workload, cfg.seed)
          : load_workload(cfg.workload_path, inst.schema);
  inst.pool = enumerate_candidates(inst.schema, inst.workload, cfg.w_max);
  if (cfg.cost_source_cmd.empty()) {
    inst.source = std::make_unique<AnalyticCostSource>(inst.schema, cfg.cost_params());
  } else {
    inst.source = spawn_external_source(cfg.cost_source_cmd);
  }
  if (with_env) {
    inst.env = std::make_unique<Environment>(inst.workload, inst.schema, inst.pool,
                                             *inst.source, cfg.env_params());
  }
  return inst;
}

json config_to_json(const IndexConfiguration& config) {
  json out = json::array();
  for (const auto& index : config.indexes()) {
    out.push_back({{"table", index.table}, {"columns", index.columns}});
  }
  return out;
}

int cmd_gen(const RunConfig& cfg) {
  const std::string out = require_out_dir(cfg);
  const SchemaStats schema = cfg.schema_path.empty()
                                 ? generate_schema(parse_profile(cfg.schema_profile), cfg.seed)
                                 : load_schema(cfg.schema_path);
  const Workload workload =
      cfg.workload_path.empty()
          ? generate_workload(schema, cfg.template_count, cfg.queries_per_workload, cfg.seed)
          : load_workload(cfg.workload_path, schema);
  const auto schema_file = std::filesystem::path(out) / "schema.json";
  const auto workload_file = std::filesystem::path(out) / "workload.json";
  save_schema(schema, schema_file.string());
  save_workload(workload, workload_file.string());
  std::cout << schema_file.string() << "\n" << workload_file.string() << "\n";
  return 0;
}

int cmd_enumerate(const RunConfig& cfg) {
  Instance inst = build_instance(cfg, /*with_env=*/false);
  for (const auto& index : inst.pool.candidates()) {
    std::cout << json{{"table", index.table},
                      {"columns", index.columns},
                      {"storage_units", candidate_storage(index, inst.schema)}}
                     .dump()
              << "\n";
  }
  std::cout << json{{"count", inst.pool.size()}}.dump() << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  const std::string out = require_out_dir(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  Instance inst = build_instance(cfg);
  TrainResult result = run_training(*inst.env, cfg.agent, cfg.episodes, cfg.seed);
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const auto trace_file = std::filesystem::path(out) / "trace.csv";
  write_file(trace_file, result.trace.to_csv());
  const std::string checkpoint_dir = (std::filesystem::path(out) / "checkpoint").string();
  save_bundle(result.bundle, checkpoint_dir, pool_fingerprint(inst.pool));

  json manifest = {{"tool_version", kVersion},
                   {"config_hash", to_hex(cfg.config_hash())},
                   {"seed", cfg.seed},
                   {"episodes", cfg.episodes},
                   {"pool_size", inst.pool.size()},
                   {"pool_fingerprint", to_hex(pool_fingerprint(inst.pool))},
                   {"trace_hash", to_hex(result.trace.content_hash())},
                   {"elapsed_seconds", elapsed}};
  write_file(std::filesystem::path(out) / "run_manifest.json", manifest.dump(2));

  const double final_value =
      result.trace.episodes.empty() ? 0.0 : result.trace.episodes.back().rollout_value;
  std::cout << json{{"trace", trace_file.string()},
                    {"checkpoint", checkpoint_dir},
                    {"episodes", cfg.episodes},
                    {"final_rollout_value", final_value}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_evaluate(const RunConfig& cfg) {
  const std::string out = require_out_dir(cfg);
  Instance inst = build_instance(cfg);
  const std::string checkpoint_dir = (std::filesystem::path(out) / "checkpoint").string();
  const AgentBundle bundle = load_bundle(checkpoint_dir, pool_fingerprint(inst.pool));
  const EvalResult result = evaluate(bundle, *inst.env);
  std::cout << json{{"value", result.value},
                    {"total_cost", result.report.total_cost},
                    {"storage_units", result.config.total_storage_units()},
                    {"budget_units", cfg.budget_units},
                    {"config", config_to_json(result.config)}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_compare(const RunConfig& cfg) {
  Instance base = build_instance(cfg, /*with_env=*/false);

  std::ostringstream csv;
  csv << "method,workload,budget,episodes,value,storage,seconds,status\n";
  char row[512];
  auto emit = [&](const std::string& method, double budget, int episodes, double value,
                  double storage, double seconds, const std::string& status) {
    std::snprintf(row, sizeof(row), "%s,%s,%.10g,%d,%.10g,%.10g,%.6f,%s\n", method.c_str(),
                  base.workload.name.c_str(), budget, episodes, value, storage, seconds,
                  status.c_str());
    csv << row;
  };

  for (double budget : cfg.compare_budgets) {
    RunConfig point = cfg;
    point.budget_units = budget;
    Environment env(base.workload, base.schema, base.pool, *base.source, point.env_params());
    for (const auto& method : cfg.compare_methods) {
      if (method == "greedy") {
        const BaselineResult r = greedy_select(base.pool, base.workload, base.schema, budget);
        emit(method, budget, 0, r.value, r.config.total_storage_units(), r.elapsed_seconds,
             "ok");
      } else if (method == "random") {
        const BaselineResult r =
            random_select(base.pool, base.workload, base.schema, budget, cfg.seed);
        emit(method, budget, 0, r.value, r.config.total_storage_units(), r.elapsed_seconds,
             "ok");
      } else if (method == "exhaustive") {
        if (base.pool.size() > 16) {
          emit(method, budget, 0, 0.0, 0.0, 0.0, "skipped_pool_too_large");
          std::cerr << "warning: exhaustive skipped, pool size " << base.pool.size()
                    << " > 16\n";
          continue;
        }
        const BaselineResult r = exhaustive_best(base.pool, base.workload, base.schema, budget);
        emit(method, budget, 0, r.value, r.config.total_storage_units(), r.elapsed_seconds,
             "ok");
      } else if (method == "td3_masked" || method == "td3_nomask") {
        for (int episodes : cfg.compare_episodes) {
          const auto t0 = std::chrono::steady_clock::now();
          EvalResult eval;
          if (method == "td3_masked") {
            const TrainResult trained = run_training(env, cfg.agent, episodes, cfg.seed);
            eval = evaluate(trained.bundle, env);
          } else {
            const AblationResult ablation = td3_nomask(env, cfg.agent, episodes, cfg.seed);
            eval.config = ablation.result.config;
            eval.value = ablation.result.value;
          }
          const double seconds =
              std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
          emit(method, budget, episodes, eval.value, eval.config.total_storage_units(), seconds,
               "ok");
        }
      } else {
        throw ArgumentError("unknown compare method '" + method +
                            "' (expected greedy, random, exhaustive, td3_masked, td3_nomask)");
      }
    }
  }

  std::cout << csv.str();
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    write_file(std::filesystem::path(cfg.out_dir) / "compare.csv", csv.str());
  }
  return 0;
}

int cmd_gradcheck(const RunConfig& cfg, bool corrupt) {
  Instance inst = build_instance(cfg);
  const AgentBundle bundle =
      make_bundle(inst.env->state_dim(), inst.pool.size(), cfg.q_max, cfg.agent, cfg.seed);

  if (corrupt) nn::test_hooks::activation_derivative_bias = 0.05;
  const std::vector<std::pair<std::string, const nn::Mlp*>> archetypes = {
      {"actor", &bundle.actor},
      {"critic", &bundle.critic1},
      {"baseline", &bundle.baseline1},
      {"selector", &bundle.selector}};
  bool pass = true;
  for (const auto& [name, proto] : archetypes) {
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 10; ++s) {
      // Fresh random parameters per seed: the check covers the architecture,
      // not whatever biased state a trained instance happens to be in.
      const nn::Mlp net = nn::make_mlp(proto->layer_dims, proto->activations, cfg.seed + s);
      worst = std::max(worst, nn::gradient_check(net, cfg.seed + s));
    }
    const bool ok = worst <= 1e-4;
    pass = pass && ok;
    std::cout << name << " max_rel_err=" << worst << (ok ? " PASS" : " FAIL") << "\n";
  }
  nn::test_hooks::activation_derivative_bias = 0.0;
  std::cout << (pass ? "gradcheck PASS" : "gradcheck FAIL") << "\n";
  return pass ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Budget-constrained index selection: candidate enumeration, a TD3 agent with an "
               "instance-aware action selector, reference baselines, and benchmark CSVs"};
  app.require_subcommand(1);

  CommonArgs gen_args, enum_args, train_args, eval_args, compare_args, grad_args;
  bool corrupt_derivative = false;

  CLI::App* gen = app.add_subcommand("gen", "Write schema and workload files from profiles");
  add_common(gen, gen_args);
  CLI::App* enumerate =
      app.add_subcommand("enumerate", "Print the candidate pool as JSON lines plus a count");
  add_common(enumerate, enum_args);
  CLI::App* train =
      app.add_subcommand("train", "Train the agent; write checkpoint, trace CSV, run manifest");
  add_common(train, train_args);
  CLI::App* evaluate =
      app.add_subcommand("evaluate", "Run the eval rollout from a saved checkpoint");
  add_common(evaluate, eval_args);
  CLI::App* compare =
      app.add_subcommand("compare", "Run methods over a budget/episode grid; emit CSV");
  add_common(compare, compare_args);
  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "Finite-difference check of every network architecture");
  add_common(gradcheck, grad_args);
  gradcheck->add_flag("--corrupt-derivative", corrupt_derivative, "")->group("");  // test hook

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_gen(resolve_config(gen_args));
    if (enumerate->parsed()) return cmd_enumerate(resolve_config(enum_args));
    if (train->parsed()) return cmd_train(resolve_config(train_args));
    if (evaluate->parsed()) return cmd_evaluate(resolve_config(eval_args));
    if (compare->parsed()) return cmd_compare(resolve_config(compare_args));
    if (gradcheck->parsed()) return cmd_gradcheck(resolve_config(grad_args), corrupt_derivative);
    std::cerr << "error: no command selected\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const UnknownNameError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
