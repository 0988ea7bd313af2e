#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "apl/common.hpp"

namespace apl {

struct ColumnSpec {
  std::string name;
  int dim = 0;
};

struct StoreSchema {
  std::vector<ColumnSpec> key_columns;
};

// One retrieved row: frozen copies of every key column, the label payload,
// the insertion step, and the distance in the queried column.
struct RetrievedRow {
  std::vector<Vec> keys;
  int label = 0;
  int64_t step = 0;
  double distance = 0.0;
};

// Episodic memory: append-only within an episode, exact kNN by euclidean
// distance on a chosen key column, ties broken by insertion order. Capacity
// overflow is an error (a misconfigured episode), never silent eviction.
class MemoryStore {
 public:
  MemoryStore(StoreSchema schema, size_t capacity);

  void write(const std::vector<Vec>& keys, int label, int64_t step);

  std::vector<RetrievedRow> query_knn(const Vec& key, int column, int k) const;

  void reset();

  size_t size() const { return labels_.size(); }
  size_t capacity() const { return capacity_; }
  const StoreSchema& schema() const { return schema_; }
  int column_index(const std::string& name) const;

  int label(size_t row) const { return labels_[row]; }
  int64_t step(size_t row) const { return steps_[row]; }
  const Vec& key(int column, size_t row) const { return columns_[static_cast<size_t>(column)][row]; }

  // JSONL dump: one row per line, embeddings hex-encoded as little-endian
  // float32 bytes, plus label and insertion step.
  void dump_jsonl(std::ostream& out) const;

 private:
  StoreSchema schema_;
  size_t capacity_;
  std::vector<std::vector<Vec>> columns_;  // [column][row]
  std::vector<int> labels_;
  std::vector<int64_t> steps_;
};

}  // namespace apl
