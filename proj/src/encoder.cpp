#include "apl/encoder.hpp"

#include <cmath>

namespace apl {

Mat kaiming_uniform(Rng& rng, int fan_in, int fan_out) {
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  Mat m(fan_in, fan_out);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-bound, bound);
  return m;
}

void init_image_encoder(ParamStore& ps, const EncoderConfig& cfg, Rng& rng) {
  ps.create("enc.w1", kaiming_uniform(rng, cfg.in_dim, cfg.hidden1));
  ps.create("enc.b1", Mat::Zero(1, cfg.hidden1));
  ps.create("enc.w2", kaiming_uniform(rng, cfg.hidden1, cfg.hidden2));
  ps.create("enc.b2", Mat::Zero(1, cfg.hidden2));
  ps.create("enc.w3", kaiming_uniform(rng, cfg.hidden2, cfg.out_dim));
  ps.create("enc.b3", Mat::Zero(1, cfg.out_dim));
}

void init_symbol_encoder(ParamStore& ps, const SymbolEncoderConfig& cfg, Rng& rng) {
  double bound = std::sqrt(3.0 / static_cast<double>(cfg.dim));
  Mat table(cfg.alphabet, cfg.dim);
  for (Eigen::Index i = 0; i < table.rows(); ++i)
    for (Eigen::Index j = 0; j < table.cols(); ++j) table(i, j) = rng.uniform(-bound, bound);
  ps.create("sym.table", std::move(table));
}

Var encode_image(Tape& tape, ParamStore& ps, const EncoderConfig& cfg, Var x) {
  if (x.cols() != cfg.in_dim)
    fail("encode_image: expected input length " + std::to_string(cfg.in_dim) + ", got " +
         shape_str(x.value()));
  Var h1 = relu(add(matmul(x, tape.param(ps, "enc.w1")), tape.param(ps, "enc.b1")));
  Var h2 = relu(add(matmul(h1, tape.param(ps, "enc.w2")), tape.param(ps, "enc.b2")));
  Var h3 = add(matmul(h2, tape.param(ps, "enc.w3")), tape.param(ps, "enc.b3"));
  return layer_norm(h3, cfg.ln_eps);
}

Var encode_symbol(Tape& tape, ParamStore& ps, const SymbolEncoderConfig& cfg,
                  const std::vector<int>& symbols) {
  for (int s : symbols)
    if (s < 0 || s >= cfg.alphabet)
      fail("encode_symbol: symbol " + std::to_string(s) + " outside alphabet of " +
           std::to_string(cfg.alphabet));
  return embedding_lookup(tape.param(ps, "sym.table"), symbols);
}

}  // namespace apl
