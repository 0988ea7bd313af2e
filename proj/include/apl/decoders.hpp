#pragma once

#include <string>

#include "apl/ops.hpp"
#include "apl/params.hpp"
#include "apl/rng.hpp"

namespace apl {

enum class DecoderKind { relff, rwm, lstm };

DecoderKind decoder_kind_from_string(const std::string& s);
std::string to_string(DecoderKind k);

struct DecoderConfig {
  DecoderKind kind = DecoderKind::relff;
  int query_dim = 64;   // concat of the query's column embeddings
  int nbr_dim = 64;     // concat of a stored row's column embeddings
  int label_dim = 32;
  int hidden = 128;
  int heads = 4;
  int blocks = 8;       // relff residual depth
  int rwm_unroll = 5;
  int num_classes = 5;
  bool use_flags = false;  // analogy: append the source-column flag feature
  double ln_eps = 1e-5;
};

// Graph-side neighbor set. Real rows arrive as constants (frozen copies of
// stored embeddings); the trainable null row arrives as parameter leaves.
struct NeighborInputs {
  Var emb;        // m x nbr_dim
  Var label_emb;  // m x label_dim
  Var dist;       // m x 1, non-negative
  Var flag;       // m x 1; only read when use_flags
  int m = 0;
};

struct DecodeStats {
  int unroll_steps = 0;  // rwm: unroll count; lstm: time steps; relff: blocks
};

void init_decoder(ParamStore& ps, const DecoderConfig& cfg, Rng& rng);

// query: 1 x query_dim. Returns 1 x num_classes logits. Errors when m == 0;
// the caller substitutes the null row before decoding.
Var decode(Tape& tape, ParamStore& ps, const DecoderConfig& cfg, Var query,
           const NeighborInputs& nbrs, DecodeStats* stats = nullptr);

// Multihead scaled dot-product attention: q_rows attend over kv_rows.
// Parameters live under `prefix` (wq/wk/wv/wo, each hidden x hidden).
Var multihead_attention(Tape& tape, ParamStore& ps, const std::string& prefix, Var q_rows,
                        Var kv_rows, int heads);

void init_multihead_attention(ParamStore& ps, const std::string& prefix, int hidden, Rng& rng,
                              double out_scale = 1.0);

// Distance-based pooling weights: softmax(-d) over rows, 1 x m.
Var distance_attention(Tape& tape, Var dist_col);

}  // namespace apl
