#include "apl/memstore.hpp"

#include <algorithm>
#include <cstring>
#include <ostream>

#include <nlohmann/json.hpp>

namespace apl {

MemoryStore::MemoryStore(StoreSchema schema, size_t capacity)
    : schema_(std::move(schema)), capacity_(capacity) {
  if (schema_.key_columns.empty()) fail("MemoryStore: schema needs at least one key column");
  if (capacity_ == 0) fail("MemoryStore: capacity must be positive");
  columns_.resize(schema_.key_columns.size());
}

int MemoryStore::column_index(const std::string& name) const {
  for (size_t c = 0; c < schema_.key_columns.size(); ++c)
    if (schema_.key_columns[c].name == name) return static_cast<int>(c);
  fail("MemoryStore: unknown column '" + name + "'");
}

void MemoryStore::write(const std::vector<Vec>& keys, int label, int64_t step) {
  if (labels_.size() >= capacity_)
    fail("MemoryStore::write: capacity " + std::to_string(capacity_) +
         " exceeded (episode misconfigured)");
  if (keys.size() != schema_.key_columns.size())
    fail("MemoryStore::write: " + std::to_string(keys.size()) + " keys for " +
         std::to_string(schema_.key_columns.size()) + " columns");
  for (size_t c = 0; c < keys.size(); ++c)
    if (keys[c].size() != schema_.key_columns[c].dim)
      fail("MemoryStore::write: column '" + schema_.key_columns[c].name + "' expects dim " +
           std::to_string(schema_.key_columns[c].dim) + ", got " + std::to_string(keys[c].size()));
  for (size_t c = 0; c < keys.size(); ++c) columns_[c].push_back(keys[c]);
  labels_.push_back(label);
  steps_.push_back(step);
}

std::vector<RetrievedRow> MemoryStore::query_knn(const Vec& key, int column, int k) const {
  if (column < 0 || static_cast<size_t>(column) >= columns_.size())
    fail("MemoryStore::query_knn: unknown column " + std::to_string(column));
  if (k < 1) fail("MemoryStore::query_knn: k must be >= 1");
  const auto& col = columns_[static_cast<size_t>(column)];
  if (key.size() != schema_.key_columns[static_cast<size_t>(column)].dim)
    fail("MemoryStore::query_knn: key dim " + std::to_string(key.size()) + " vs column dim " +
         std::to_string(schema_.key_columns[static_cast<size_t>(column)].dim));

  const size_t n = col.size();
  if (n == 0) return {};

  std::vector<std::pair<double, size_t>> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = {(col[i] - key).norm(), i};
  const size_t take = std::min<size_t>(static_cast<size_t>(k), n);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end());

  std::vector<RetrievedRow> out;
  out.reserve(take);
  for (size_t i = 0; i < take; ++i) {
    RetrievedRow r;
    r.distance = order[i].first;
    size_t row = order[i].second;
    r.keys.reserve(columns_.size());
    for (const auto& c : columns_) r.keys.push_back(c[row]);
    r.label = labels_[row];
    r.step = steps_[row];
    out.push_back(std::move(r));
  }
  return out;
}

void MemoryStore::reset() {
  for (auto& c : columns_) c.clear();
  labels_.clear();
  steps_.clear();
}

namespace {

std::string hex_f32_le(const Vec& v) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(static_cast<size_t>(v.size()) * 8);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    float f = static_cast<float>(v(i));
    unsigned char bytes[4];
    std::memcpy(bytes, &f, 4);
    for (int b = 0; b < 4; ++b) {  // little-endian byte order
      out.push_back(digits[bytes[b] >> 4]);
      out.push_back(digits[bytes[b] & 0xf]);
    }
  }
  return out;
}

}  // namespace

void MemoryStore::dump_jsonl(std::ostream& out) const {
  for (size_t row = 0; row < labels_.size(); ++row) {
    nlohmann::ordered_json j;
    j["step"] = steps_[row];
    j["label"] = labels_[row];
    for (size_t c = 0; c < columns_.size(); ++c)
      j[schema_.key_columns[c].name] = hex_f32_le(columns_[c][row]);
    out << j.dump() << "\n";
  }
}

}  // namespace apl
