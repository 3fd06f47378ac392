// Cost source spoken over stdin/stdout for protocol tests. The mode argument
// picks how it (mis)behaves after a correct handshake:
//   ok          deterministic costs that fall as the config grows
//   fixed       every query costs 42 regardless of config
//   malformed   evaluate responses are not JSON
//   bad-total   total_cost disagrees with the weighted per-query sum
//   no-handshake  replies {"ok":false} to hello
//   slow        sleeps 2 s before each evaluate response
#include <chrono>
#include <iostream>
#include <string>
#include <thread>

#include <json.hpp>

using nlohmann::json;

int main(int argc, char** argv) {
  const std::string mode = argc > 1 ? argv[1] : "ok";
  std::string line;
  while (std::getline(std::cin, line)) {
    json request;
    try {
      request = json::parse(line);
    } catch (const json::parse_error&) {
      continue;
    }
    const std::string op = request.value("op", "");
    if (op == "hello") {
      if (mode == "no-handshake") {
        std::cout << json{{"ok", false}}.dump() << "\n" << std::flush;
      } else {
        std::cout << json{{"ok", true}, {"version", 1}}.dump() << "\n" << std::flush;
      }
      continue;
    }
    if (op != "evaluate") continue;
    if (mode == "slow") std::this_thread::sleep_for(std::chrono::seconds(2));
    if (mode == "malformed") {
      std::cout << "not json at all\n" << std::flush;
      continue;
    }
    const auto& queries = request["workload"]["queries"];
    const double config_size = static_cast<double>(request["config"].size());
    json per_query = json::array();
    double total = 0.0;
    for (const auto& q : queries) {
      const double cost = mode == "fixed" ? 42.0 : 1000.0 / (1.0 + config_size);
      per_query.push_back({{"id", q["id"]}, {"cost", cost}});
      total += q["frequency"].get<double>() * cost;
    }
    if (mode == "bad-total") total += 1000.0;
    std::cout << json{{"total_cost", total},
                      {"per_query", per_query},
                      {"storage_units", 0.125 * config_size}}
                     .dump()
              << "\n"
              << std::flush;
  }
  return 0;
}
