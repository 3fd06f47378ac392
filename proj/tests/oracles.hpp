// Independent reference implementations the tests compare the library
// against. Everything here is written from the stated rules directly —
// brute force, no shared code with src/.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "idxsel/candidates.hpp"
#include "idxsel/costmodel.hpp"
#include "idxsel/schema.hpp"
#include "idxsel/workload.hpp"

namespace oracles {

using namespace idxsel;

// All ordered permutations (length 1..w_max) of each table's columns,
// filtered by the three candidate rules:
//   R1: every column is referenced (predicate or payload) by some query
//   R2: the first column is a predicate column in some query
//   R3: one single query co-references every column of the candidate
inline std::vector<IndexDef> brute_force_pool(const SchemaStats& schema, const Workload& workload,
                                              int w_max) {
  std::map<std::string, std::set<std::string>> referenced;   // table -> cols (R1)
  std::map<std::string, std::set<std::string>> predicated;   // table -> cols (R2)
  std::map<std::string, std::vector<std::set<std::string>>> per_query;  // table -> ref sets (R3)
  for (const auto& q : workload.queries) {
    for (const auto& ta : q.tables) {
      std::set<std::string> refs;
      for (const auto& p : ta.predicates) {
        refs.insert(p.column);
        predicated[ta.table].insert(p.column);
      }
      for (const auto& c : ta.payload) refs.insert(c);
      for (const auto& c : refs) referenced[ta.table].insert(c);
      per_query[ta.table].push_back(std::move(refs));
    }
  }

  std::vector<IndexDef> pool;
  for (const auto& table : schema.tables) {
    std::vector<std::string> cols;
    for (const auto& c : table.columns) cols.push_back(c.name);
    const int n = static_cast<int>(cols.size());

    // Enumerate every ordered selection of 1..w_max distinct columns.
    std::vector<int> pick;
    std::vector<bool> used(n, false);
    auto passes = [&](const std::vector<std::string>& seq) {
      const auto ref_it = referenced.find(table.name);
      for (const auto& c : seq) {
        if (ref_it == referenced.end() || !ref_it->second.count(c)) return false;  // R1
      }
      const auto pred_it = predicated.find(table.name);
      if (pred_it == predicated.end() || !pred_it->second.count(seq.front())) return false;  // R2
      const auto pq_it = per_query.find(table.name);
      if (pq_it == per_query.end()) return false;
      for (const auto& refs : pq_it->second) {  // R3
        bool all = true;
        for (const auto& c : seq)
          if (!refs.count(c)) {
            all = false;
            break;
          }
        if (all) return true;
      }
      return false;
    };
    std::function<void()> rec = [&]() {
      if (!pick.empty()) {
        std::vector<std::string> seq;
        for (int i : pick) seq.push_back(cols[i]);
        if (passes(seq)) pool.push_back(IndexDef{table.name, seq});
      }
      if (static_cast<int>(pick.size()) == w_max) return;
      for (int i = 0; i < n; ++i) {
        if (used[i]) continue;
        used[i] = true;
        pick.push_back(i);
        rec();
        pick.pop_back();
        used[i] = false;
      }
    };
    rec();
  }
  std::sort(pool.begin(), pool.end(),
            [](const IndexDef& a, const IndexDef& b) {
              if (a.table != b.table) return a.table < b.table;
              return a.columns < b.columns;
            });
  return pool;
}

// Direct transcription of the access-path formula: per table, the cheaper of
// a sequential scan (row_count) and the best usable index path
// traversal*log2(rows) + rows * prefix-selectivity * h, ties to the index.
inline double brute_force_query_cost(const Query& q, const IndexConfiguration& config,
                                     const SchemaStats& schema,
                                     const CostModelParams& params = {}) {
  double total = 0.0;
  for (const auto& ta : q.tables) {
    const TableStats& table = schema.table_or_throw(ta.table);
    const double rows = static_cast<double>(table.row_count);
    std::set<std::string> pred_cols;
    for (const auto& p : ta.predicates) pred_cols.insert(p.column);
    std::set<std::string> needed = pred_cols;
    for (const auto& c : ta.payload) needed.insert(c);

    double best = rows;
    for (const auto& idx : config.indexes()) {
      if (idx.table != ta.table) continue;
      if (!pred_cols.count(idx.columns.front())) continue;
      double sel = 1.0;
      for (const auto& c : idx.columns) {
        const Predicate* p = ta.find_predicate(c);
        if (!p) break;
        const ColumnStats& stats = schema.column_or_throw(ta.table, c);
        sel *= (p->kind == PredicateKind::eq) ? stats.selectivity_eq : stats.selectivity_range;
      }
      const std::set<std::string> idx_cols(idx.columns.begin(), idx.columns.end());
      const bool covering =
          std::includes(idx_cols.begin(), idx_cols.end(), needed.begin(), needed.end());
      const double h = covering ? 1.0 : params.heap_fetch_factor;
      const double path = params.traversal_constant * std::log2(rows) + rows * sel * h;
      if (path <= best) best = path;
    }
    total += best;
  }
  return total;
}

inline double brute_force_workload_cost(const Workload& w, const IndexConfiguration& config,
                                        const SchemaStats& schema,
                                        const CostModelParams& params = {}) {
  double total = 0.0;
  for (const auto& q : w.queries) total += q.frequency * brute_force_query_cost(q, config, schema, params);
  return total;
}

// Cost source with hand-scripted totals keyed by the set of chosen pool
// positions; lets reward tests pin exact arithmetic.
class ScriptedCostSource : public CostSource {
 public:
  ScriptedCostSource(CandidatePool pool, std::map<std::set<int>, double> totals)
      : pool_(std::move(pool)), totals_(std::move(totals)) {}

  CostReport evaluate(const Workload& workload, const IndexConfiguration& config) override {
    std::set<int> key;
    for (const auto& idx : config.indexes()) key.insert(pool_.index_of(idx));
    const auto it = totals_.find(key);
    if (it == totals_.end()) throw InvariantViolation("scripted source: unexpected config");
    const double total = it->second;
    CostReport report;
    report.total_cost = total;
    double freq_total = 0.0;
    for (const auto& q : workload.queries) freq_total += q.frequency;
    for (const auto& q : workload.queries)
      report.per_query.push_back({q.id, total / freq_total});
    report.storage_units = config.total_storage_units();
    return report;
  }

 private:
  CandidatePool pool_;
  std::map<std::set<int>, double> totals_;
};

}  // namespace oracles
