#pragma once

#include <string>
#include <vector>

#include "apl/ops.hpp"
#include "apl/params.hpp"
#include "apl/rng.hpp"

namespace apl {

// MLP image encoder: flatten -> 256 relu -> 128 relu -> 64 linear ->
// layer_norm. The final layer norm pins every embedding to zero mean and
// unit variance, which keeps euclidean distances between keys comparable.
struct EncoderConfig {
  int in_dim = 28 * 28;
  int hidden1 = 256;
  int hidden2 = 128;
  int out_dim = 64;
  double ln_eps = 1e-5;
};

// Symbol alphabet -> trainable embedding table (one-hot times table row).
struct SymbolEncoderConfig {
  int alphabet = 10;
  int dim = 32;
};

void init_image_encoder(ParamStore& ps, const EncoderConfig& cfg, Rng& rng);
void init_symbol_encoder(ParamStore& ps, const SymbolEncoderConfig& cfg, Rng& rng);

// x: (B x in_dim) rows of flattened pixels in [0,1]. Returns (B x out_dim).
Var encode_image(Tape& tape, ParamStore& ps, const EncoderConfig& cfg, Var x);

// One embedding row per index. Errors on out-of-alphabet indices.
Var encode_symbol(Tape& tape, ParamStore& ps, const SymbolEncoderConfig& cfg,
                  const std::vector<int>& symbols);

// Kaiming-style uniform fan-in init: U(-sqrt(6/fan_in), sqrt(6/fan_in)).
Mat kaiming_uniform(Rng& rng, int fan_in, int fan_out);

}  // namespace apl
