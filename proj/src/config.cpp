#include "idxsel/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>

namespace idxsel {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ParseError("config: key '" + key + "' needs a number, got '" + value + "'");
  }
}

int parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long v = std::stol(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return static_cast<int>(v);
  } catch (const std::exception&) {
    throw ParseError("config: key '" + key + "' needs an integer, got '" + value + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ParseError("config: key '" + key + "' needs an unsigned integer, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ParseError("config: key '" + key + "' needs true/false, got '" + value + "'");
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
std::string join(const std::vector<T>& values) {
  std::ostringstream out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out << ",";
    if constexpr (std::is_floating_point_v<T>) {
      char buf[40];
      std::snprintf(buf, sizeof(buf), "%.10g", static_cast<double>(values[i]));
      out << buf;
    } else {
      out << values[i];
    }
  }
  return out.str();
}

struct KeyHandler {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<std::pair<std::string, KeyHandler>>& handlers() {
  auto str_key = [](std::string RunConfig::* field) {
    return KeyHandler{
        [field](RunConfig& c, const std::string&, const std::string& v) { c.*field = v; },
        [field](const RunConfig& c) { return c.*field; }};
  };
  auto int_key = [](int RunConfig::* field) {
    return KeyHandler{[field](RunConfig& c, const std::string& k, const std::string& v) {
                        c.*field = parse_int(k, v);
                      },
                      [field](const RunConfig& c) { return std::to_string(c.*field); }};
  };
  auto double_key = [](double RunConfig::* field) {
    return KeyHandler{[field](RunConfig& c, const std::string& k, const std::string& v) {
                        c.*field = parse_double(k, v);
                      },
                      [field](const RunConfig& c) { return join(std::vector<double>{c.*field}); }};
  };
  auto agent_double = [](double AgentHyperparams::* field) {
    return KeyHandler{[field](RunConfig& c, const std::string& k, const std::string& v) {
                        c.agent.*field = parse_double(k, v);
                      },
                      [field](const RunConfig& c) {
                        return join(std::vector<double>{c.agent.*field});
                      }};
  };
  auto agent_int = [](int AgentHyperparams::* field) {
    return KeyHandler{[field](RunConfig& c, const std::string& k, const std::string& v) {
                        c.agent.*field = parse_int(k, v);
                      },
                      [field](const RunConfig& c) { return std::to_string(c.agent.*field); }};
  };

  static const std::vector<std::pair<std::string, KeyHandler>> table = {
      {"schema_profile", str_key(&RunConfig::schema_profile)},
      {"schema_path", str_key(&RunConfig::schema_path)},
      {"workload_path", str_key(&RunConfig::workload_path)},
      {"template_count", int_key(&RunConfig::template_count)},
      {"queries_per_workload", int_key(&RunConfig::queries_per_workload)},
      {"w_max", int_key(&RunConfig::w_max)},
      {"budget_units", double_key(&RunConfig::budget_units)},
      {"episodes", int_key(&RunConfig::episodes)},
      {"q_max", int_key(&RunConfig::q_max)},
      {"max_steps", int_key(&RunConfig::max_steps)},
      {"m_floor", double_key(&RunConfig::m_floor)},
      {"heap_fetch_factor", double_key(&RunConfig::heap_fetch_factor)},
      {"traversal_constant", double_key(&RunConfig::traversal_constant)},
      {"gamma", agent_double(&AgentHyperparams::gamma)},
      {"tau", agent_double(&AgentHyperparams::tau)},
      {"policy_delay", agent_int(&AgentHyperparams::policy_delay)},
      {"explore_noise", agent_double(&AgentHyperparams::explore_noise)},
      {"target_noise", agent_double(&AgentHyperparams::target_noise)},
      {"noise_clip", agent_double(&AgentHyperparams::noise_clip)},
      {"lambda_sparsity", agent_double(&AgentHyperparams::lambda_sparsity)},
      {"history_blend", agent_double(&AgentHyperparams::history_blend)},
      {"history_decay", agent_double(&AgentHyperparams::history_decay)},
      {"batch_size", agent_int(&AgentHyperparams::batch_size)},
      {"buffer_capacity", agent_int(&AgentHyperparams::buffer_capacity)},
      {"learning_rate", agent_double(&AgentHyperparams::learning_rate)},
      {"selector_learning_rate", agent_double(&AgentHyperparams::selector_learning_rate)},
      {"selector_bias_init", agent_double(&AgentHyperparams::selector_bias_init)},
      {"hidden",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          std::vector<int> dims;
          for (const auto& item : split_list(v)) dims.push_back(parse_int(k, item));
          if (dims.empty()) throw ParseError("config: key 'hidden' needs at least one size");
          c.agent.hidden = dims;
        },
        [](const RunConfig& c) { return join(c.agent.hidden); }}},
      {"selector_pinned",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.agent.selector_pinned = parse_bool(k, v);
        },
        [](const RunConfig& c) { return c.agent.selector_pinned ? "true" : "false"; }}},
      {"seed",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.seed = parse_u64(k, v);
        },
        [](const RunConfig& c) { return std::to_string(c.seed); }}},
      {"out_dir", str_key(&RunConfig::out_dir)},
      {"cost_source_cmd", str_key(&RunConfig::cost_source_cmd)},
      {"compare_budgets",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          std::vector<double> budgets;
          for (const auto& item : split_list(v)) budgets.push_back(parse_double(k, item));
          if (budgets.empty()) throw ParseError("config: key 'compare_budgets' needs values");
          c.compare_budgets = budgets;
        },
        [](const RunConfig& c) { return join(c.compare_budgets); }}},
      {"compare_episodes",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          std::vector<int> eps;
          for (const auto& item : split_list(v)) eps.push_back(parse_int(k, item));
          if (eps.empty()) throw ParseError("config: key 'compare_episodes' needs values");
          c.compare_episodes = eps;
        },
        [](const RunConfig& c) { return join(c.compare_episodes); }}},
      {"compare_methods",
       {[](RunConfig& c, const std::string&, const std::string& v) {
          c.compare_methods = split_list(v);
          if (c.compare_methods.empty()) {
            throw ParseError("config: key 'compare_methods' needs values");
          }
        },
        [](const RunConfig& c) { return join(c.compare_methods); }}},
  };
  return table;
}

}  // namespace

void set_config_key(RunConfig& config, const std::string& key, const std::string& value) {
  for (const auto& [name, handler] : handlers()) {
    if (name == key) {
      handler.set(config, key, value);
      return;
    }
  }
  throw ParseError("config: unknown key '" + key + "'");
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig config;
  std::stringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ParseError("config: line " + std::to_string(line_no) + " is not key=value: '" +
                       stripped + "'");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) {
      throw ParseError("config: line " + std::to_string(line_no) + " has an empty key");
    }
    set_config_key(config, key, value);
  }
  return config;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "' for reading");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_run_config(buffer.str());
}

std::string RunConfig::canonical() const {
  std::vector<std::pair<std::string, std::string>> entries;
  for (const auto& [name, handler] : handlers()) {
    entries.emplace_back(name, handler.get(*this));
  }
  std::sort(entries.begin(), entries.end());
  std::ostringstream out;
  for (const auto& [name, value] : entries) out << name << "=" << value << "\n";
  return out.str();
}

const std::vector<std::string>& run_config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> names;
    for (const auto& [name, handler] : handlers()) names.push_back(name);
    return names;
  }();
  return keys;
}

}  // namespace idxsel
