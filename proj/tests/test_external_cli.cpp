#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "idxsel/candidates.hpp"
#include "idxsel/costmodel.hpp"
#include "idxsel/env.hpp"
#include "idxsel/schema.hpp"
#include "idxsel/workload.hpp"

using namespace idxsel;

namespace {

std::string server(const std::string& mode) {
  return std::string(COST_SERVER_PATH) + " " + mode;
}

struct TinyInstance {
  SchemaStats schema = generate_schema(SchemaProfile::tiny, 1);
  Workload workload = generate_workload(schema, 3, 6, 1);
  CandidatePool pool = enumerate_candidates(schema, workload, 2);
};

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args, const std::filesystem::path& out_file) {
  const std::string cmd =
      std::string(CLI_PATH) + " " + args + " >" + out_file.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// external cost source protocol
// ---------------------------------------------------------------------------

TEST_CASE("external source proxies fixed costs verbatim") {
  const TinyInstance t;
  auto source = spawn_external_source(server("fixed"));
  const CostReport report = source->evaluate(t.workload, IndexConfiguration{});
  REQUIRE(report.per_query.size() == t.workload.queries.size());
  for (const auto& [id, cost] : report.per_query) CHECK(cost == 42.0);
  CHECK(report.total_cost ==
        doctest::Approx(42.0 * t.workload.total_frequency()).epsilon(1e-12));
}

TEST_CASE("external source serves repeated calls and shrinking costs") {
  const TinyInstance t;
  auto source = spawn_external_source(server("ok"));
  const double empty = source->evaluate(t.workload, IndexConfiguration{}).total_cost;
  IndexConfiguration config;
  config.add(t.pool.at(0), t.schema);
  const double one = source->evaluate(t.workload, config).total_cost;
  CHECK(one < empty);
  CHECK(source->evaluate(t.workload, config).total_cost == one);
}

TEST_CASE("malformed frames raise protocol errors, not crashes") {
  const TinyInstance t;
  auto source = spawn_external_source(server("malformed"));
  CHECK_THROWS_AS(source->evaluate(t.workload, IndexConfiguration{}), ProtocolError);
}

TEST_CASE("responses violating the report invariant are rejected") {
  const TinyInstance t;
  auto source = spawn_external_source(server("bad-total"));
  CHECK_THROWS_AS(source->evaluate(t.workload, IndexConfiguration{}), InvariantViolation);
}

TEST_CASE("handshake refusal and silence fail fast") {
  CHECK_THROWS_AS(spawn_external_source(server("no-handshake")), ProtocolError);
  CHECK_THROWS_AS(spawn_external_source("/no/such/binary"), Error);

  const TinyInstance t;
  auto source = spawn_external_source(server("slow"), 300);  // server sleeps 2 s
  CHECK_THROWS_AS(source->evaluate(t.workload, IndexConfiguration{}), ProtocolError);
}

TEST_CASE("an environment can run entirely on an external source") {
  const TinyInstance t;
  auto source = spawn_external_source(server("ok"));
  Environment env(t.workload, t.schema, t.pool, *source, EnvParams{4.0, 3, 8, 1.0});
  EpisodeState s = env.reset();
  int steps = 0;
  while (!s.done) {
    int k = 0;
    while (!s.feasible[k]) ++k;
    const StepOutcome out = env.step(s, k);
    CHECK(out.reward >= 0.0);
    s = out.next_state;
    ++steps;
  }
  CHECK(steps == 3);
}

// ---------------------------------------------------------------------------
// command-line interface
// ---------------------------------------------------------------------------

TEST_CASE("gen writes schema and workload deterministically") {
  const auto dir = fresh_dir("idxsel_cli_gen");
  const auto log = dir / "log.txt";
  REQUIRE(run_cli("gen --out " + (dir / "a").string() + " --seed 7", log) == 0);
  REQUIRE(run_cli("gen --out " + (dir / "b").string() + " --seed 7", log) == 0);
  CHECK(slurp(dir / "a" / "schema.json") == slurp(dir / "b" / "schema.json"));
  CHECK(slurp(dir / "a" / "workload.json") == slurp(dir / "b" / "workload.json"));
  CHECK(slurp(dir / "a" / "schema.json") != "");

  CHECK(run_cli("gen --out " + dir.string() + " --set schema_profile=bogus", log) == 2);
  CHECK(run_cli("gen --out " + dir.string() + " --set no_such_key=1", log) == 2);
  CHECK(run_cli("definitely-not-a-command", log) == 2);
}

TEST_CASE("enumerate matches the library pool") {
  const auto dir = fresh_dir("idxsel_cli_enum");
  const auto out = dir / "pool.txt";
  REQUIRE(run_cli("enumerate --seed 1 --set template_count=3"
                  " --set queries_per_workload=6 --set w_max=2",
                  out) == 0);
  const std::string text = slurp(out);

  const TinyInstance t;
  std::ostringstream needle;
  needle << "{\"count\":" << t.pool.size() << "}";
  CHECK(text.find(needle.str()) != std::string::npos);
  CHECK(std::count(text.begin(), text.end(), '\n') == t.pool.size() + 1);
}

TEST_CASE("train produces a reusable checkpoint and identical reruns") {
  const auto dir = fresh_dir("idxsel_cli_train");
  const auto log = dir / "log.txt";
  const std::string common = " --set episodes=6 --set hidden=16,16 --seed 3 --out ";

  REQUIRE(run_cli("train" + common + (dir / "r1").string(), log) == 0);
  REQUIRE(run_cli("train" + common + (dir / "r2").string(), log) == 0);

  const std::string t1 = slurp(dir / "r1" / "trace.csv");
  const std::string t2 = slurp(dir / "r2" / "trace.csv");
  REQUIRE(t1 != "");
  // Bit-identical apart from the wall-clock column.
  std::istringstream a(t1), b(t2);
  std::string la, lb;
  while (std::getline(a, la) && std::getline(b, lb)) {
    CHECK(la.substr(0, la.rfind(',')) == lb.substr(0, lb.rfind(',')));
  }
  CHECK(slurp(dir / "r1" / "run_manifest.json") != "");

  REQUIRE(run_cli("evaluate --set hidden=16,16 --seed 3 --out " + (dir / "r1").string(), log) ==
          0);
  const std::string eval_out = slurp(log);
  CHECK(eval_out.find("\"value\":") != std::string::npos);
  CHECK(eval_out.find("\"config\":") != std::string::npos);
}

TEST_CASE("train with zero episodes still writes a valid empty trace") {
  const auto dir = fresh_dir("idxsel_cli_train0");
  const auto log = dir / "log.txt";
  REQUIRE(run_cli("train --set episodes=0 --set hidden=16,16 --out " + (dir / "r").string(),
                  log) == 0);
  CHECK(slurp(dir / "r" / "trace.csv") ==
        "episode,cum_reward,rollout_value,eff_action_space,seconds\n");
}

TEST_CASE("compare emits one row per grid point and respects method lists") {
  const auto dir = fresh_dir("idxsel_cli_compare");
  const auto out = dir / "compare.csv";
  REQUIRE(run_cli("compare --set compare_budgets=0.1 --set compare_methods=greedy", out) == 0);
  const std::string text = slurp(out);
  CHECK(std::count(text.begin(), text.end(), '\n') == 2);  // header + one row
  CHECK(text.find("greedy,") != std::string::npos);

  CHECK(run_cli("compare --set compare_methods=voodoo", dir / "err.txt") == 2);
}

TEST_CASE("training over the external protocol works end to end") {
  const auto dir = fresh_dir("idxsel_cli_ext");
  const auto log = dir / "log.txt";
  REQUIRE(run_cli("train --set episodes=3 --set hidden=16,16 --set \"cost_source_cmd=" +
                      server("ok") + "\" --out " + (dir / "r").string(),
                  log) == 0);
  const std::string trace = slurp(dir / "r" / "trace.csv");
  CHECK(std::count(trace.begin(), trace.end(), '\n') == 4);
}
