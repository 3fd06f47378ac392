#include "idxsel/costmodel.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "idxsel/common.hpp"

namespace idxsel {

void IndexConfiguration::add(const IndexDef& index, const SchemaStats& schema) {
  validate_index(index, schema);
  if (!indexes_.insert(index).second) {
    throw InvariantViolation("configuration already contains " + index.display());
  }
  total_storage_units_ += candidate_storage(index, schema);
}

IndexConfiguration IndexConfiguration::with(const IndexDef& index,
                                            const SchemaStats& schema) const {
  IndexConfiguration next = *this;
  next.add(index, schema);
  return next;
}

void validate_config(const IndexConfiguration& config, const SchemaStats& schema) {
  double storage = 0.0;
  for (const auto& index : config.indexes()) {
    validate_index(index, schema);
    storage += candidate_storage(index, schema);
  }
  if (std::abs(storage - config.total_storage_units()) > 1e-9) {
    throw InvariantViolation("configuration storage mismatch: cached " +
                             std::to_string(config.total_storage_units()) + ", recomputed " +
                             std::to_string(storage));
  }
}

void validate_cost_report(const CostReport& report, const Workload& workload) {
  if (!std::isfinite(report.total_cost) || report.total_cost < 0.0) {
    throw InvariantViolation("cost report: total_cost must be finite and >= 0");
  }
  if (report.per_query.size() != workload.queries.size()) {
    throw InvariantViolation("cost report: expected " + std::to_string(workload.queries.size()) +
                             " per-query entries, got " + std::to_string(report.per_query.size()));
  }
  std::set<std::string> seen;
  double weighted = 0.0;
  for (const auto& [id, cost] : report.per_query) {
    if (!std::isfinite(cost) || cost < 0.0) {
      throw InvariantViolation("cost report: cost for '" + id + "' must be finite and >= 0");
    }
    if (!seen.insert(id).second) {
      throw InvariantViolation("cost report: duplicate entry for '" + id + "'");
    }
    const Query* query = nullptr;
    for (const auto& q : workload.queries) {
      if (q.id == id) {
        query = &q;
        break;
      }
    }
    if (query == nullptr) {
      throw InvariantViolation("cost report: unknown query id '" + id + "'");
    }
    weighted += query->frequency * cost;
  }
  const double tolerance = 1e-9 * std::max(1.0, std::abs(report.total_cost));
  if (std::abs(weighted - report.total_cost) > tolerance) {
    throw InvariantViolation("cost report: total_cost " + std::to_string(report.total_cost) +
                             " != frequency-weighted sum " + std::to_string(weighted));
  }
}

double query_cost(const Query& query, const IndexConfiguration& config,
                  const SchemaStats& schema, const CostModelParams& params) {
  double total = 0.0;
  for (const auto& access : query.tables) {
    const TableStats& table = schema.table_or_throw(access.table);
    const double rows = static_cast<double>(table.row_count);
    double best = rows;  // sequential scan
    for (const auto& index : config.indexes()) {
      if (index.table != access.table) continue;
      if (!access.has_predicate_on(index.columns.front())) continue;

      double selectivity = 1.0;
      for (const auto& column : index.columns) {
        const Predicate* p = access.find_predicate(column);
        if (p == nullptr) break;  // prefix match stops at the first unfiltered column
        const ColumnStats& stats = schema.column_or_throw(access.table, column);
        selectivity *=
            p->kind == PredicateKind::eq ? stats.selectivity_eq : stats.selectivity_range;
      }

      auto in_index = [&index](const std::string& column) {
        return std::find(index.columns.begin(), index.columns.end(), column) !=
               index.columns.end();
      };
      bool covering = true;
      for (const auto& p : access.predicates) covering = covering && in_index(p.column);
      for (const auto& c : access.payload) covering = covering && in_index(c);

      const double h = covering ? 1.0 : params.heap_fetch_factor;
      const double path =
          params.traversal_constant * std::log2(rows) + rows * selectivity * h;
      if (path <= best) best = path;  // ties go to the index path
    }
    total += best;
  }
  return total;
}

CostReport workload_cost(const Workload& workload, const IndexConfiguration& config,
                         const SchemaStats& schema, const CostModelParams& params) {
  CostReport report;
  report.storage_units = config.total_storage_units();
  for (const auto& q : workload.queries) {
    const double cost = query_cost(q, config, schema, params);
    report.per_query.emplace_back(q.id, cost);
    report.total_cost += q.frequency * cost;
  }
  return report;
}

}  // namespace idxsel
