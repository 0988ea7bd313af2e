#pragma once

#include <string>
#include <vector>

#include "apl/decoders.hpp"
#include "apl/encoder.hpp"
#include "apl/memstore.hpp"
#include "apl/tasks.hpp"

namespace apl {

struct ModelConfig {
  TaskKind task = TaskKind::classify;
  int num_classes = 5;  // logits width: N-way for classify, 20 for analogy
  int k = 8;            // neighbors per key column
  DecoderKind decoder = DecoderKind::relff;
  EncoderConfig enc;
  SymbolEncoderConfig sym;
  int label_dim = 32;
  int hidden = 128;

  std::string to_json() const;
  static ModelConfig from_json(const std::string& j);
};

struct ElementForward {
  Var logits;
  std::vector<Vec> query_keys;  // frozen copies, one per key column
  DecodeStats stats;
};

// The full APL network: encoders, shared label-embedding table, trainable
// null rows for the empty-memory step, and one decoder. Memory contents are
// consumed as constants; gradients never flow into stored rows.
class Model {
 public:
  static Model init(const ModelConfig& cfg, uint64_t seed);

  // Builds the per-element graph: encode the query, kNN-query each key
  // column of `store` (or substitute the null rows when empty), decode.
  ElementForward forward_element(Tape& tape, const MemoryStore& store, const Example& ex);

  // Key embeddings only (plain values), e.g. for pre-populating memory.
  std::vector<Vec> embed_keys(const Example& ex);

  StoreSchema store_schema() const;
  DecoderConfig decoder_config() const;

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  void save(const std::string& path, const std::string& run_json = "") const;
  static Model load(const std::string& path, std::string* run_json = nullptr);

 private:
  Model() = default;

  ModelConfig cfg_;
  ParamStore params_;
};

}  // namespace apl
