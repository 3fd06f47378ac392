#include "idxsel/workload.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "idxsel/common.hpp"

namespace idxsel {

using nlohmann::json;

PredicateKind parse_predicate_kind(const std::string& s) {
  if (s == "eq") return PredicateKind::eq;
  if (s == "range") return PredicateKind::range;
  throw ParseError("workload: unknown predicate kind '" + s + "'");
}

std::string predicate_kind_name(PredicateKind k) {
  return k == PredicateKind::eq ? "eq" : "range";
}

bool TableAccess::has_predicate_on(const std::string& column) const {
  return find_predicate(column) != nullptr;
}

const Predicate* TableAccess::find_predicate(const std::string& column) const {
  for (const auto& p : predicates) {
    if (p.column == column) return &p;
  }
  return nullptr;
}

const TableAccess* Query::access(const std::string& table) const {
  for (const auto& t : tables) {
    if (t.table == table) return &t;
  }
  return nullptr;
}

double Workload::total_frequency() const {
  double sum = 0.0;
  for (const auto& q : queries) sum += q.frequency;
  return sum;
}

void validate_workload(const Workload& workload, const SchemaStats& schema) {
  if (workload.name.empty()) {
    throw InvariantViolation("workload: name must be non-empty");
  }
  std::set<std::string> ids;
  double total_frequency = 0.0;
  for (const auto& q : workload.queries) {
    if (q.id.empty()) throw InvariantViolation("workload: query id must be non-empty");
    if (!ids.insert(q.id).second) {
      throw InvariantViolation("workload: duplicate query id '" + q.id + "'");
    }
    if (!(q.frequency > 0.0)) {
      throw InvariantViolation("workload: query '" + q.id + "' frequency must be positive");
    }
    total_frequency += q.frequency;
    if (q.tables.empty()) {
      throw InvariantViolation("workload: query '" + q.id + "' references no table");
    }
    bool any_predicate = false;
    std::set<std::string> seen_tables;
    for (const auto& access : q.tables) {
      if (!seen_tables.insert(access.table).second) {
        throw InvariantViolation("workload: query '" + q.id + "' references table '" +
                                 access.table + "' twice");
      }
      std::set<std::string> seen_columns;
      for (const auto& p : access.predicates) {
        schema.column_or_throw(access.table, p.column);
        if (!seen_columns.insert(p.column).second) {
          throw InvariantViolation("workload: query '" + q.id + "' filters column '" +
                                   p.column + "' twice");
        }
      }
      seen_columns.clear();
      for (const auto& c : access.payload) {
        schema.column_or_throw(access.table, c);
        if (!seen_columns.insert(c).second) {
          throw InvariantViolation("workload: query '" + q.id + "' selects column '" + c +
                                   "' twice");
        }
      }
      any_predicate = any_predicate || !access.predicates.empty();
    }
    if (!any_predicate) {
      throw InvariantViolation("workload: query '" + q.id + "' has no predicate on any table");
    }
  }
  if (!(total_frequency > 0.0)) {
    throw InvariantViolation("workload: total frequency must be positive");
  }
}

namespace {

struct QueryTemplate {
  double base_frequency = 1.0;
  std::vector<TableAccess> tables;
};

void sort_query_tables(Query& q) {
  std::sort(q.tables.begin(), q.tables.end(),
            [](const TableAccess& a, const TableAccess& b) { return a.table < b.table; });
}

// Template t touches 1 + t/3 tables (capped) and filters 1 + t/4 columns per
// table (capped), so adding templates adds progressively wider queries.
QueryTemplate make_template(const SchemaStats& schema, int t, Rng& rng) {
  QueryTemplate tpl;
  tpl.base_frequency = rng.uniform(0.5, 2.0);

  const int table_total = static_cast<int>(schema.tables.size());
  const int max_tables = std::min(3, table_total);
  const int n_tables = std::min(max_tables, 1 + t / 3);

  std::vector<int> table_idx(table_total);
  std::iota(table_idx.begin(), table_idx.end(), 0);
  for (int i = 0; i < n_tables; ++i) {
    const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(table_total - i)));
    std::swap(table_idx[i], table_idx[j]);
  }

  for (int i = 0; i < n_tables; ++i) {
    const TableStats& table = schema.tables[static_cast<std::size_t>(table_idx[i])];
    const int n_columns = static_cast<int>(table.columns.size());

    std::vector<int> col_idx(n_columns);
    std::iota(col_idx.begin(), col_idx.end(), 0);
    for (int k = 0; k + 1 < n_columns; ++k) {
      const int j = k + static_cast<int>(rng.below(static_cast<std::uint64_t>(n_columns - k)));
      std::swap(col_idx[k], col_idx[j]);
    }

    TableAccess access;
    access.table = table.name;
    const int n_preds = std::min(n_columns, 1 + std::min(2, t / 4));
    for (int k = 0; k < n_preds; ++k) {
      Predicate p;
      p.column = table.columns[static_cast<std::size_t>(col_idx[k])].name;
      p.kind = rng.bernoulli(0.5) ? PredicateKind::eq : PredicateKind::range;
      access.predicates.push_back(p);
    }
    const int n_payload =
        std::min(n_columns - n_preds, static_cast<int>(rng.below(3)));
    for (int k = 0; k < n_payload; ++k) {
      access.payload.push_back(table.columns[static_cast<std::size_t>(col_idx[n_preds + k])].name);
    }
    std::sort(access.payload.begin(), access.payload.end());
    tpl.tables.push_back(std::move(access));
  }
  return tpl;
}

}  // namespace

Workload generate_workload(const SchemaStats& schema, int template_count,
                           int queries_per_workload, std::uint64_t seed) {
  if (template_count < 1) throw ArgumentError("generate_workload: template_count must be >= 1");
  if (queries_per_workload < 1) {
    throw ArgumentError("generate_workload: queries_per_workload must be >= 1");
  }
  if (template_count > queries_per_workload) {
    throw ArgumentError("generate_workload: template_count exceeds queries_per_workload");
  }
  schema.validate();

  Rng rng(seed ^ fnv1a("workload"));
  std::vector<QueryTemplate> templates;
  templates.reserve(static_cast<std::size_t>(template_count));
  for (int t = 0; t < template_count; ++t) {
    templates.push_back(make_template(schema, t, rng));
  }

  int id_width = 1;
  for (int v = queries_per_workload - 1; v >= 10; v /= 10) ++id_width;
  id_width = std::max(id_width, 3);

  Workload workload;
  {
    std::ostringstream name;
    name << "w_t" << template_count << "_n" << queries_per_workload << "_s" << seed;
    workload.name = name.str();
  }
  for (int i = 0; i < queries_per_workload; ++i) {
    const QueryTemplate& tpl = templates[static_cast<std::size_t>(i % template_count)];
    Query q;
    std::ostringstream id;
    id << "q";
    std::string digits = std::to_string(i);
    id << std::string(static_cast<std::size_t>(std::max(0, id_width - static_cast<int>(digits.size()))), '0')
       << digits;
    q.id = id.str();
    q.frequency = tpl.base_frequency * rng.uniform(0.5, 1.5);
    q.tables = tpl.tables;
    sort_query_tables(q);
    workload.queries.push_back(std::move(q));
  }
  validate_workload(workload, schema);
  return workload;
}

namespace {

json workload_json(const Workload& workload) {
  json queries = json::array();
  for (const auto& q : workload.queries) {
    json tables = json::array();
    for (const auto& access : q.tables) {
      json preds = json::array();
      for (const auto& p : access.predicates) {
        preds.push_back({{"column", p.column}, {"kind", predicate_kind_name(p.kind)}});
      }
      tables.push_back(
          {{"table", access.table}, {"predicates", preds}, {"payload", access.payload}});
    }
    queries.push_back({{"id", q.id}, {"frequency", q.frequency}, {"tables", tables}});
  }
  return json{{"name", workload.name}, {"queries", queries}};
}

Workload workload_from(const json& j, const SchemaStats& schema) {
  Workload workload;
  workload.name = j.at("name").get<std::string>();
  for (const auto& jq : j.at("queries")) {
    Query q;
    q.id = jq.at("id").get<std::string>();
    q.frequency = jq.at("frequency").get<double>();
    for (const auto& jt : jq.at("tables")) {
      TableAccess access;
      access.table = jt.at("table").get<std::string>();
      for (const auto& jp : jt.at("predicates")) {
        Predicate p;
        p.column = jp.at("column").get<std::string>();
        p.kind = parse_predicate_kind(jp.at("kind").get<std::string>());
        access.predicates.push_back(std::move(p));
      }
      if (jt.contains("payload")) {
        access.payload = jt.at("payload").get<std::vector<std::string>>();
      }
      q.tables.push_back(std::move(access));
    }
    sort_query_tables(q);
    workload.queries.push_back(std::move(q));
  }
  validate_workload(workload, schema);
  return workload;
}

}  // namespace

std::string workload_to_json(const Workload& workload) { return workload_json(workload).dump(2); }

Workload workload_from_json(const std::string& text, const SchemaStats& schema) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("workload: invalid JSON: ") + e.what());
  }
  try {
    return workload_from(j, schema);
  } catch (const json::exception& e) {
    throw ParseError(std::string("workload: malformed document: ") + e.what());
  }
}

void save_workload(const Workload& workload, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << workload_to_json(workload) << "\n";
  if (!out) throw IoError("failed writing '" + path + "'");
}

Workload load_workload(const std::string& path, const SchemaStats& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return workload_from_json(buffer.str(), schema);
}

std::vector<std::pair<std::string, std::string>> column_universe(const SchemaStats& schema) {
  std::vector<std::pair<std::string, std::string>> columns;
  for (const auto& table : schema.tables) {
    for (const auto& column : table.columns) {
      columns.emplace_back(table.name, column.name);
    }
  }
  return columns;
}

std::vector<double> query_embedding(const Workload& workload, const SchemaStats& schema) {
  const auto columns = column_universe(schema);
  std::vector<double> embedding(columns.size() * 2, 0.0);
  const double total = workload.total_frequency();
  if (!(total > 0.0)) return embedding;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    for (const auto& q : workload.queries) {
      const TableAccess* access = q.access(columns[c].first);
      if (access == nullptr) continue;
      if (access->has_predicate_on(columns[c].second)) {
        embedding[2 * c] += q.frequency / total;
      }
      if (std::find(access->payload.begin(), access->payload.end(), columns[c].second) !=
          access->payload.end()) {
        embedding[2 * c + 1] += q.frequency / total;
      }
    }
  }
  return embedding;
}

std::vector<double> StateVector::flatten() const {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(flat_size()));
  out.insert(out.end(), plan_features.begin(), plan_features.end());
  out.insert(out.end(), config_bits.begin(), config_bits.end());
  out.insert(out.end(), meta.begin(), meta.end());
  out.insert(out.end(), query_embedding.begin(), query_embedding.end());
  return out;
}

}  // namespace idxsel
