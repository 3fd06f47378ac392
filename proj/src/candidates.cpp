#include "idxsel/candidates.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "idxsel/common.hpp"

namespace idxsel {

std::string IndexDef::display() const {
  std::ostringstream out;
  out << table << "(";
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i > 0) out << ",";
    out << columns[i];
  }
  out << ")";
  return out.str();
}

void validate_index(const IndexDef& index, const SchemaStats& schema) {
  if (index.columns.empty()) {
    throw InvariantViolation("index on '" + index.table + "': column list must be non-empty");
  }
  std::set<std::string> seen;
  for (const auto& c : index.columns) {
    schema.column_or_throw(index.table, c);
    if (!seen.insert(c).second) {
      throw InvariantViolation("index " + index.display() + ": duplicate column '" + c + "'");
    }
  }
}

CandidatePool::CandidatePool(std::vector<IndexDef> candidates)
    : candidates_(std::move(candidates)) {
  for (int i = 0; i < static_cast<int>(candidates_.size()); ++i) {
    if (!position_.emplace(candidates_[i], i).second) {
      throw InvariantViolation("candidate pool: duplicate candidate " + candidates_[i].display());
    }
  }
}

const IndexDef& CandidatePool::at(int i) const {
  if (i < 0 || i >= size()) {
    throw ArgumentError("candidate pool: action id " + std::to_string(i) + " out of range [0, " +
                        std::to_string(size()) + ")");
  }
  return candidates_[static_cast<std::size_t>(i)];
}

int CandidatePool::index_of(const IndexDef& index) const {
  auto it = position_.find(index);
  return it == position_.end() ? -1 : it->second;
}

bool operator==(const CandidatePool& a, const CandidatePool& b) {
  return a.candidates_ == b.candidates_;
}

namespace {

// Referenced column sets per table: all queries merged (for R1/R2) and per
// single query (for R3).
struct TableUsage {
  std::set<std::string> referenced;        // R1
  std::set<std::string> first_candidates;  // R2: predicate columns of any query
  std::vector<std::set<std::string>> per_query_refs;  // R3
};

void emit_permutations(const std::string& table, const std::set<std::string>& query_refs,
                       const std::set<std::string>& first_candidates, int w_max,
                       std::vector<std::string>& prefix, std::set<IndexDef>& out) {
  if (!prefix.empty()) {
    if (first_candidates.count(prefix.front()) > 0) {
      out.insert(IndexDef{table, prefix});
    }
    if (static_cast<int>(prefix.size()) == w_max) return;
  }
  for (const auto& column : query_refs) {
    if (std::find(prefix.begin(), prefix.end(), column) != prefix.end()) continue;
    prefix.push_back(column);
    emit_permutations(table, query_refs, first_candidates, w_max, prefix, out);
    prefix.pop_back();
  }
}

}  // namespace

CandidatePool enumerate_candidates(const SchemaStats& schema, const Workload& workload,
                                   int w_max) {
  if (w_max < 1) throw ArgumentError("enumerate_candidates: w_max must be >= 1");
  validate_workload(workload, schema);

  std::map<std::string, TableUsage> usage;
  for (const auto& q : workload.queries) {
    for (const auto& access : q.tables) {
      TableUsage& u = usage[access.table];
      std::set<std::string> refs;
      for (const auto& p : access.predicates) {
        refs.insert(p.column);
        u.first_candidates.insert(p.column);
      }
      for (const auto& c : access.payload) refs.insert(c);
      u.referenced.insert(refs.begin(), refs.end());
      if (!refs.empty()) u.per_query_refs.push_back(std::move(refs));
    }
  }

  std::set<IndexDef> found;
  for (const auto& [table, u] : usage) {
    std::vector<std::string> prefix;
    for (const auto& refs : u.per_query_refs) {
      emit_permutations(table, refs, u.first_candidates, w_max, prefix, found);
    }
  }
  // R3 permutations draw only from single-query reference sets, which are
  // subsets of `referenced`, so R1 holds by construction. std::set iteration
  // already yields the (table, columns) lexicographic order.
  return CandidatePool(std::vector<IndexDef>(found.begin(), found.end()));
}

CandidatePool extend_pool(const CandidatePool& pool, const std::vector<IndexDef>& extra,
                          const SchemaStats& schema) {
  std::vector<IndexDef> all = pool.candidates();
  for (const auto& index : extra) {
    validate_index(index, schema);
    all.push_back(index);
  }
  return CandidatePool(std::move(all));
}

double candidate_storage(const IndexDef& index, const SchemaStats& schema) {
  validate_index(index, schema);
  const TableStats& table = schema.table_or_throw(index.table);
  double width_sum = 0.0;
  for (const auto& c : index.columns) {
    width_sum += static_cast<double>(schema.column_or_throw(index.table, c).width_bytes);
  }
  const double bytes = static_cast<double>(table.row_count) * (width_sum + 8.0);
  return bytes / (128.0 * 1024.0 * 1024.0);
}

}  // namespace idxsel
