#pragma once

#include <map>
#include <string>
#include <vector>

#include "idxsel/schema.hpp"
#include "idxsel/workload.hpp"

namespace idxsel {

// Ordered multi-attribute index: column order matters (leftmost-prefix rule).
struct IndexDef {
  std::string table;
  std::vector<std::string> columns;

  std::string display() const;  // "table(c1,c2)"

  friend bool operator==(const IndexDef&, const IndexDef&) = default;
  friend auto operator<=>(const IndexDef&, const IndexDef&) = default;
};

// Throws UnknownNameError / InvariantViolation when the index does not fit
// the schema (missing table or column, duplicate column, empty column list).
void validate_index(const IndexDef& index, const SchemaStats& schema);

// Action space for the agent: position in `candidates` is the action id.
class CandidatePool {
 public:
  CandidatePool() = default;
  explicit CandidatePool(std::vector<IndexDef> candidates);

  const std::vector<IndexDef>& candidates() const { return candidates_; }
  int size() const { return static_cast<int>(candidates_.size()); }
  const IndexDef& at(int i) const;
  // -1 when absent.
  int index_of(const IndexDef& index) const;
  bool contains(const IndexDef& index) const { return index_of(index) >= 0; }

  friend bool operator==(const CandidatePool&, const CandidatePool&);

 private:
  std::vector<IndexDef> candidates_;
  std::map<IndexDef, int> position_;
};

// Pool of all column permutations (length 1..w_max) passing:
//   R1  every column is referenced (predicate or payload) on that table
//   R2  the leading column appears in some query's predicates on that table
//   R3  one single query references all of the candidate's columns
// Candidates are sorted by (table, column sequence); output is a pure
// function of the arguments.
CandidatePool enumerate_candidates(const SchemaStats& schema, const Workload& workload,
                                   int w_max);

// Test hook: appends extra candidates without applying R1..R3 (still schema
// validated). Duplicates are an invariant violation.
CandidatePool extend_pool(const CandidatePool& pool, const std::vector<IndexDef>& extra,
                          const SchemaStats& schema);

// (row_count x (sum of column widths + 8 rowid bytes)) / (128 MiB) units.
double candidate_storage(const IndexDef& index, const SchemaStats& schema);

}  // namespace idxsel
