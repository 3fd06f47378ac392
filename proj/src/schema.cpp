#include "idxsel/schema.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace idxsel {

using nlohmann::json;

std::string to_hex(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

const ColumnStats* TableStats::find_column(const std::string& col) const {
  for (const auto& c : columns)
    if (c.name == col) return &c;
  return nullptr;
}

const TableStats* SchemaStats::find_table(const std::string& name) const {
  for (const auto& t : tables)
    if (t.name == name) return &t;
  return nullptr;
}

const TableStats& SchemaStats::table_or_throw(const std::string& name) const {
  const TableStats* t = find_table(name);
  if (!t) throw UnknownNameError("unknown table '" + name + "'");
  return *t;
}

const ColumnStats& SchemaStats::column_or_throw(const std::string& table,
                                                const std::string& col) const {
  const ColumnStats* c = table_or_throw(table).find_column(col);
  if (!c) throw UnknownNameError("unknown column '" + table + "." + col + "'");
  return *c;
}

int SchemaStats::total_column_count() const {
  int n = 0;
  for (const auto& t : tables) n += static_cast<int>(t.columns.size());
  return n;
}

void SchemaStats::validate() const {
  std::set<std::string> table_names;
  for (const auto& t : tables) {
    if (!table_names.insert(t.name).second)
      throw InvariantViolation("schema: duplicate table name '" + t.name + "'");
    if (t.row_count < 1)
      throw InvariantViolation("table '" + t.name + "': row_count must be >= 1");
    std::set<std::string> col_names;
    for (const auto& c : t.columns) {
      if (!col_names.insert(c.name).second)
        throw InvariantViolation("table '" + t.name + "': duplicate column name '" + c.name + "'");
      if (c.width_bytes < 1)
        throw InvariantViolation("column '" + t.name + "." + c.name + "': width_bytes must be >= 1");
      if (!(c.distinct_fraction > 0.0 && c.distinct_fraction <= 1.0))
        throw InvariantViolation("column '" + t.name + "." + c.name +
                                 "': distinct_fraction must be in (0,1]");
      if (!(c.selectivity_eq > 0.0 && c.selectivity_eq <= 1.0))
        throw InvariantViolation("column '" + t.name + "." + c.name +
                                 "': selectivity_eq must be in (0,1]");
      if (!(c.selectivity_range > 0.0 && c.selectivity_range <= 1.0))
        throw InvariantViolation("column '" + t.name + "." + c.name +
                                 "': selectivity_range must be in (0,1]");
      if (c.selectivity_eq > c.selectivity_range)
        throw InvariantViolation("column '" + t.name + "." + c.name +
                                 "': selectivity_eq must be <= selectivity_range");
    }
  }
}

SchemaProfile parse_profile(const std::string& s) {
  if (s == "tiny") return SchemaProfile::tiny;
  if (s == "small") return SchemaProfile::small;
  if (s == "tpch_like") return SchemaProfile::tpch_like;
  throw ArgumentError("unknown schema profile '" + s + "' (expected tiny|small|tpch_like)");
}

std::string profile_name(SchemaProfile p) {
  switch (p) {
    case SchemaProfile::tiny: return "tiny";
    case SchemaProfile::small: return "small";
    case SchemaProfile::tpch_like: return "tpch_like";
  }
  return "?";
}

namespace {

// Key widths are 8 bytes, attributes narrow, note/comment columns wide so that
// index storage lands in the same order of magnitude as the 2-8 unit budgets.
ColumnStats make_key_column(const std::string& name, std::int64_t rows) {
  ColumnStats c;
  c.name = name;
  c.width_bytes = 8;
  c.distinct_fraction = 1.0;
  c.selectivity_eq = std::clamp(1.0 / static_cast<double>(rows), 1e-12, 1.0);
  c.selectivity_range = 0.05;
  if (c.selectivity_range < c.selectivity_eq) c.selectivity_range = c.selectivity_eq;
  return c;
}

ColumnStats make_attr_column(const std::string& name, std::int64_t rows, Rng& rng) {
  static const int widths[] = {4, 8, 8, 16, 32};
  ColumnStats c;
  c.name = name;
  c.width_bytes = widths[rng.below(5)];
  c.distinct_fraction = rng.uniform(0.005, 0.5);
  double distinct = std::max(1.0, c.distinct_fraction * static_cast<double>(rows));
  c.selectivity_eq = std::clamp(1.0 / distinct, 1e-12, 1.0);
  c.selectivity_range = std::clamp(rng.uniform(0.02, 0.4), c.selectivity_eq, 1.0);
  return c;
}

ColumnStats make_wide_column(const std::string& name, std::int64_t rows, Rng& rng) {
  static const int widths[] = {512, 1024, 2048, 4096};
  ColumnStats c;
  c.name = name;
  c.width_bytes = widths[rng.below(4)];
  c.distinct_fraction = rng.uniform(0.5, 1.0);
  double distinct = std::max(1.0, c.distinct_fraction * static_cast<double>(rows));
  c.selectivity_eq = std::clamp(1.0 / distinct, 1e-12, 1.0);
  c.selectivity_range = std::clamp(rng.uniform(0.05, 0.5), c.selectivity_eq, 1.0);
  return c;
}

TableStats make_synth_table(const std::string& name, std::int64_t rows, int n_columns, Rng& rng) {
  TableStats t;
  t.name = name;
  t.row_count = rows;
  t.columns.push_back(make_key_column(name + "_id", rows));
  for (int i = 0; i + 2 < n_columns; ++i)
    t.columns.push_back(make_attr_column(name + "_a" + std::to_string(i), rows, rng));
  t.columns.push_back(make_wide_column(name + "_note", rows, rng));
  return t;
}

struct TpchTableSpec {
  const char* name;
  std::int64_t rows;  // SF1 cardinalities scaled so lineitem = 1e6
  std::vector<std::pair<const char*, int>> columns;  // (name, width)
};

// Fixed before the build; the tests assert against this exact table.
const std::vector<TpchTableSpec>& tpch_specs() {
  static const std::vector<TpchTableSpec> specs = {
      {"region", 1, {{"r_regionkey", 8}, {"r_name", 25}, {"r_comment", 152}}},
      {"nation", 4, {{"n_nationkey", 8}, {"n_regionkey", 8}, {"n_name", 25}, {"n_comment", 152}}},
      {"supplier", 1667,
       {{"s_suppkey", 8}, {"s_nationkey", 8}, {"s_acctbal", 8}, {"s_name", 25}, {"s_comment", 101}}},
      {"customer", 25000,
       {{"c_custkey", 8}, {"c_nationkey", 8}, {"c_acctbal", 8}, {"c_mktsegment", 10},
        {"c_comment", 117}}},
      {"part", 33333,
       {{"p_partkey", 8}, {"p_brand", 10}, {"p_type", 25}, {"p_size", 4}, {"p_retailprice", 8},
        {"p_comment", 2048}}},
      {"partsupp", 133333,
       {{"ps_partkey", 8}, {"ps_suppkey", 8}, {"ps_availqty", 4}, {"ps_supplycost", 8},
        {"ps_comment", 2048}}},
      {"orders", 250000,
       {{"o_orderkey", 8}, {"o_custkey", 8}, {"o_orderstatus", 1}, {"o_totalprice", 8},
        {"o_orderdate", 8}, {"o_comment", 1024}}},
      {"lineitem", 1000000,
       {{"l_orderkey", 8}, {"l_partkey", 8}, {"l_suppkey", 8}, {"l_quantity", 8},
        {"l_shipdate", 8}, {"l_comment", 512}}},
  };
  return specs;
}

SchemaStats generate_tpch_like(std::uint64_t seed) {
  SchemaStats schema;
  schema.seed = seed;
  Rng rng(seed ^ 0x7063685f6c696bULL);
  for (const auto& spec : tpch_specs()) {
    TableStats t;
    t.name = spec.name;
    t.row_count = spec.rows;
    bool first = true;
    for (const auto& [col, width] : spec.columns) {
      ColumnStats c;
      c.name = col;
      c.width_bytes = width;
      if (first) {
        c.distinct_fraction = 1.0;
        c.selectivity_eq = std::clamp(1.0 / static_cast<double>(t.row_count), 1e-12, 1.0);
        c.selectivity_range = std::max(0.05, c.selectivity_eq);
        first = false;
      } else {
        c.distinct_fraction = rng.uniform(0.01, 1.0);
        double distinct = std::max(1.0, c.distinct_fraction * static_cast<double>(t.row_count));
        c.selectivity_eq = std::clamp(1.0 / distinct, 1e-12, 1.0);
        c.selectivity_range = std::clamp(rng.uniform(0.02, 0.4), c.selectivity_eq, 1.0);
      }
      t.columns.push_back(std::move(c));
    }
    schema.tables.push_back(std::move(t));
  }
  return schema;
}

}  // namespace

SchemaStats generate_schema(SchemaProfile profile, std::uint64_t seed) {
  SchemaStats schema;
  schema.seed = seed;
  switch (profile) {
    case SchemaProfile::tiny: {
      Rng rng(seed ^ 0x74696e79ULL);
      static const char* names[] = {"users", "orders", "items"};
      for (int i = 0; i < 3; ++i) {
        std::int64_t rows = rng.uniform_int(1500, 10000);
        int n_cols = static_cast<int>(rng.uniform_int(3, 4));
        schema.tables.push_back(make_synth_table(names[i], rows, n_cols, rng));
      }
      break;
    }
    case SchemaProfile::small: {
      Rng rng(seed ^ 0x736d616c6cULL);
      static const char* names[] = {"customers", "orders", "items", "stores", "events"};
      for (int i = 0; i < 5; ++i) {
        std::int64_t rows = rng.uniform_int(20000, 100000);
        int n_cols = static_cast<int>(rng.uniform_int(4, 6));
        schema.tables.push_back(make_synth_table(names[i], rows, n_cols, rng));
      }
      break;
    }
    case SchemaProfile::tpch_like:
      schema = generate_tpch_like(seed);
      break;
  }
  schema.validate();
  return schema;
}

std::string schema_to_json(const SchemaStats& schema) {
  json j;
  j["seed"] = schema.seed;
  j["tables"] = json::array();
  for (const auto& t : schema.tables) {
    json jt;
    jt["name"] = t.name;
    jt["row_count"] = t.row_count;
    jt["columns"] = json::array();
    for (const auto& c : t.columns) {
      jt["columns"].push_back({{"name", c.name},
                               {"width_bytes", c.width_bytes},
                               {"distinct_fraction", c.distinct_fraction},
                               {"selectivity_eq", c.selectivity_eq},
                               {"selectivity_range", c.selectivity_range}});
    }
    j["tables"].push_back(std::move(jt));
  }
  return j.dump(2) + "\n";
}

SchemaStats schema_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("schema: ") + e.what());
  }
  SchemaStats schema;
  try {
    schema.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& jt : j.at("tables")) {
      TableStats t;
      t.name = jt.at("name").get<std::string>();
      t.row_count = jt.at("row_count").get<std::int64_t>();
      for (const auto& jc : jt.at("columns")) {
        ColumnStats c;
        c.name = jc.at("name").get<std::string>();
        c.width_bytes = jc.at("width_bytes").get<int>();
        c.distinct_fraction = jc.at("distinct_fraction").get<double>();
        c.selectivity_eq = jc.at("selectivity_eq").get<double>();
        c.selectivity_range = jc.at("selectivity_range").get<double>();
        t.columns.push_back(std::move(c));
      }
      schema.tables.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("schema: ") + e.what());
  }
  schema.validate();
  return schema;
}

void save_schema(const SchemaStats& schema, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << schema_to_json(schema);
}

SchemaStats load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return schema_from_json(ss.str());
}

}  // namespace idxsel
