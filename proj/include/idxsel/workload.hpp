#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "idxsel/schema.hpp"

namespace idxsel {

enum class PredicateKind { eq, range };

PredicateKind parse_predicate_kind(const std::string& s);
std::string predicate_kind_name(PredicateKind k);

struct Predicate {
  std::string column;
  PredicateKind kind = PredicateKind::eq;

  friend bool operator==(const Predicate&, const Predicate&) = default;
};

// One query's footprint on one table: filtered columns (ordered) plus the
// columns it selects/projects (sorted set).
struct TableAccess {
  std::string table;
  std::vector<Predicate> predicates;
  std::vector<std::string> payload;

  bool has_predicate_on(const std::string& column) const;
  const Predicate* find_predicate(const std::string& column) const;

  friend bool operator==(const TableAccess&, const TableAccess&) = default;
};

struct Query {
  std::string id;
  double frequency = 1.0;
  std::vector<TableAccess> tables;  // sorted by table name, one entry per table

  const TableAccess* access(const std::string& table) const;

  friend bool operator==(const Query&, const Query&) = default;
};

struct Workload {
  std::string name;
  std::vector<Query> queries;

  double total_frequency() const;

  friend bool operator==(const Workload&, const Workload&) = default;
};

// Throws InvariantViolation / UnknownNameError naming the violated rule.
void validate_workload(const Workload& workload, const SchemaStats& schema);

// Pure function of its arguments. Each query is drawn from one of
// template_count templates with per-query frequency perturbation; templates
// later in the list touch more tables and columns, so complexity grows with
// template_count.
Workload generate_workload(const SchemaStats& schema, int template_count,
                           int queries_per_workload, std::uint64_t seed);

void save_workload(const Workload& workload, const std::string& path);
Workload load_workload(const std::string& path, const SchemaStats& schema);

std::string workload_to_json(const Workload& workload);
// Validates against the schema (query columns must exist).
Workload workload_from_json(const std::string& text, const SchemaStats& schema);

// ---------------------------------------------------------------------------
// State featurization pieces that depend only on (workload, schema).
// ---------------------------------------------------------------------------

// Deterministic column universe: all schema columns in table order, then
// column order. Used by the query embedding below.
std::vector<std::pair<std::string, std::string>> column_universe(const SchemaStats& schema);

// Per column two entries: frequency-weighted presence in predicates and in
// payloads, each normalized by total workload frequency, so all entries lie
// in [0,1]. Static per workload; independent of any index configuration.
std::vector<double> query_embedding(const Workload& workload, const SchemaStats& schema);

// Network input assembled by the environment:
//   plan_features   per-query cost under the current config divided by that
//                   query's no-index cost, zero-padded to q_max
//   config_bits     multi-hot over the candidate pool (length K)
//   meta            [remaining_budget / total_budget, step_index / max_steps]
//   query_embedding see above
struct StateVector {
  std::vector<double> plan_features;
  std::vector<double> config_bits;
  std::vector<double> meta;
  std::vector<double> query_embedding;

  int flat_size() const {
    return static_cast<int>(plan_features.size() + config_bits.size() + meta.size() +
                            query_embedding.size());
  }
  std::vector<double> flatten() const;

  friend bool operator==(const StateVector&, const StateVector&) = default;
};

}  // namespace idxsel
