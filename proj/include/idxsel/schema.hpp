#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "idxsel/common.hpp"

namespace idxsel {

// Per-column statistics; the ground truth the analytic cost model reads.
// selectivity_eq is the expected fraction of rows matching an equality
// predicate on the column, selectivity_range the same for a range predicate.
struct ColumnStats {
  std::string name;
  int width_bytes = 8;
  double distinct_fraction = 1.0;   // in (0,1]
  double selectivity_eq = 1.0;      // in (0,1], <= selectivity_range
  double selectivity_range = 1.0;   // in (0,1]

  friend bool operator==(const ColumnStats&, const ColumnStats&) = default;
};

struct TableStats {
  std::string name;
  std::int64_t row_count = 1;
  std::vector<ColumnStats> columns;

  const ColumnStats* find_column(const std::string& col) const;

  friend bool operator==(const TableStats&, const TableStats&) = default;
};

// A synthetic database: tables with statistics, no rows. Immutable after
// construction; safe to share across threads.
struct SchemaStats {
  std::vector<TableStats> tables;
  std::uint64_t seed = 0;

  const TableStats* find_table(const std::string& name) const;
  const TableStats& table_or_throw(const std::string& name) const;
  const ColumnStats& column_or_throw(const std::string& table, const std::string& col) const;
  int total_column_count() const;

  // Throws InvariantViolation naming the violated rule.
  void validate() const;

  friend bool operator==(const SchemaStats&, const SchemaStats&) = default;
};

enum class SchemaProfile { tiny, small, tpch_like };

SchemaProfile parse_profile(const std::string& s);
std::string profile_name(SchemaProfile p);

// Pure function of (profile, seed).
//   tiny      : 3 tables, <=4 columns each, row counts <= 1e4
//   small     : 5 tables, <=6 columns each, row counts <= 1e5
//   tpch_like : 8 TPC-H table names, cardinality ratios scaled to 1e6 max rows
SchemaStats generate_schema(SchemaProfile profile, std::uint64_t seed);

void save_schema(const SchemaStats& schema, const std::string& path);
SchemaStats load_schema(const std::string& path);

std::string schema_to_json(const SchemaStats& schema);
SchemaStats schema_from_json(const std::string& text);

}  // namespace idxsel
