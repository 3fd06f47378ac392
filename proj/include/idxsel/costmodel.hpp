#pragma once

#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "idxsel/candidates.hpp"
#include "idxsel/schema.hpp"
#include "idxsel/workload.hpp"

namespace idxsel {

// Index set plus its precomputed storage footprint. total_storage_units
// always equals the sum of candidate_storage over members (within 1e-9).
class IndexConfiguration {
 public:
  IndexConfiguration() = default;

  const std::set<IndexDef>& indexes() const { return indexes_; }
  double total_storage_units() const { return total_storage_units_; }
  int size() const { return static_cast<int>(indexes_.size()); }
  bool empty() const { return indexes_.empty(); }
  bool contains(const IndexDef& index) const { return indexes_.count(index) > 0; }

  // Throws InvariantViolation on duplicates.
  void add(const IndexDef& index, const SchemaStats& schema);
  IndexConfiguration with(const IndexDef& index, const SchemaStats& schema) const;

  friend bool operator==(const IndexConfiguration&, const IndexConfiguration&) = default;

 private:
  std::set<IndexDef> indexes_;
  double total_storage_units_ = 0.0;
};

void validate_config(const IndexConfiguration& config, const SchemaStats& schema);

struct CostReport {
  double total_cost = 0.0;
  std::vector<std::pair<std::string, double>> per_query;  // (query id, unweighted cost)
  double storage_units = 0.0;
};

// total_cost must equal the frequency-weighted sum of per_query costs.
void validate_cost_report(const CostReport& report, const Workload& workload);

struct CostModelParams {
  double heap_fetch_factor = 2.0;   // h: non-covering index pays this per row
  double traversal_constant = 1.0;  // multiplies the log2(row_count) descent term
};

// Analytic what-if cost of one query:
//   per table, min(row_count, best index path); an index is usable iff its
//   leading column is filtered; path cost =
//     traversal_constant*log2(rows) + rows * (matched-prefix selectivities) * h
//   with h = 1 when the index covers all referenced columns.
double query_cost(const Query& query, const IndexConfiguration& config,
                  const SchemaStats& schema, const CostModelParams& params = {});

CostReport workload_cost(const Workload& workload, const IndexConfiguration& config,
                         const SchemaStats& schema, const CostModelParams& params = {});

// Pure pricing interface: identical inputs must yield identical reports.
class CostSource {
 public:
  virtual ~CostSource() = default;
  virtual CostReport evaluate(const Workload& workload, const IndexConfiguration& config) = 0;
};

class AnalyticCostSource : public CostSource {
 public:
  AnalyticCostSource(SchemaStats schema, CostModelParams params = {})
      : schema_(std::move(schema)), params_(params) {}

  CostReport evaluate(const Workload& workload, const IndexConfiguration& config) override {
    return workload_cost(workload, config, schema_, params_);
  }

  const SchemaStats& schema() const { return schema_; }

 private:
  SchemaStats schema_;
  CostModelParams params_;
};

// Proxies evaluate() to a subprocess speaking newline-delimited JSON:
// handshake {"op":"hello","version":1} -> {"ok":true,"version":1}, then
// {"op":"evaluate","workload":...,"config":[{"table","columns"}]} ->
// {"total_cost","per_query":[{"id","cost"}],"storage_units"}. The command
// string is split on whitespace into argv. Responses are checked against the
// CostReport invariant. Throws ProtocolError on timeouts, malformed frames,
// or early exit; IoError when the command cannot be spawned.
std::unique_ptr<CostSource> spawn_external_source(const std::string& command,
                                                  int timeout_ms = 10000);

}  // namespace idxsel
