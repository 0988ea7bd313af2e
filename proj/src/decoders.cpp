#include "apl/decoders.hpp"

#include <algorithm>
#include <numeric>

#include "apl/encoder.hpp"
#include "apl/gradcheck.hpp"

namespace apl {

DecoderKind decoder_kind_from_string(const std::string& s) {
  if (s == "relff") return DecoderKind::relff;
  if (s == "rwm") return DecoderKind::rwm;
  if (s == "lstm") return DecoderKind::lstm;
  fail("unknown decoder '" + s + "' (expected relff|rwm|lstm)");
}

std::string to_string(DecoderKind k) {
  switch (k) {
    case DecoderKind::relff: return "relff";
    case DecoderKind::rwm: return "rwm";
    case DecoderKind::lstm: return "lstm";
  }
  return "?";
}

void init_multihead_attention(ParamStore& ps, const std::string& prefix, int hidden, Rng& rng,
                              double out_scale) {
  ps.create(prefix + ".wq", kaiming_uniform(rng, hidden, hidden));
  ps.create(prefix + ".wk", kaiming_uniform(rng, hidden, hidden));
  ps.create(prefix + ".wv", kaiming_uniform(rng, hidden, hidden));
  // Output projection scaled down so stacked residual branches do not blow
  // up activations at init.
  ps.create(prefix + ".wo", Mat(kaiming_uniform(rng, hidden, hidden) * out_scale));
}

Var multihead_attention(Tape& tape, ParamStore& ps, const std::string& prefix, Var q_rows,
                        Var kv_rows, int heads) {
  const int hidden = static_cast<int>(q_rows.cols());
  if (hidden % heads != 0)
    fail("multihead_attention: hidden " + std::to_string(hidden) + " not divisible by " +
         std::to_string(heads) + " heads");
  const int dh = hidden / heads;
  Var q = matmul(q_rows, tape.param(ps, prefix + ".wq"));
  Var k = matmul(kv_rows, tape.param(ps, prefix + ".wk"));
  Var v = matmul(kv_rows, tape.param(ps, prefix + ".wv"));
  std::vector<Var> head_outs;
  head_outs.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Var qh = slice(q, 0, h * dh, static_cast<int>(q.rows()), dh);
    Var kh = slice(k, 0, h * dh, static_cast<int>(k.rows()), dh);
    Var vh = slice(v, 0, h * dh, static_cast<int>(v.rows()), dh);
    head_outs.push_back(scaled_dot_product_attention(qh, kh, vh));
  }
  return matmul(concat(head_outs, 1), tape.param(ps, prefix + ".wo"));
}

Var distance_attention(Tape& tape, Var dist_col) {
  (void)tape;
  return softmax(transpose(scale(dist_col, -1.0)), 1);
}

namespace {

int row_feat_dim(const DecoderConfig& cfg) {
  return cfg.nbr_dim + cfg.label_dim + 1 + (cfg.use_flags ? 1 : 0);
}

void init_relff(ParamStore& ps, const DecoderConfig& cfg, Rng& rng) {
  const int in_dim = cfg.query_dim + row_feat_dim(cfg);
  const double res_scale = 1.0 / std::sqrt(2.0 * cfg.blocks);
  ps.create("dec.in.w", kaiming_uniform(rng, in_dim, cfg.hidden));
  ps.create("dec.in.b", Mat::Zero(1, cfg.hidden));
  for (int b = 0; b < cfg.blocks; ++b) {
    std::string blk = "dec.blk" + std::to_string(b);
    init_multihead_attention(ps, blk + ".attn", cfg.hidden, rng, res_scale);
    ps.create(blk + ".ff.w", Mat(kaiming_uniform(rng, cfg.hidden, cfg.hidden) * res_scale));
    ps.create(blk + ".ff.b", Mat::Zero(1, cfg.hidden));
  }
  ps.create("dec.out.w", Mat::Zero(cfg.hidden, cfg.num_classes));
  ps.create("dec.out.b", Mat::Zero(1, cfg.num_classes));
}

void init_rwm(ParamStore& ps, const DecoderConfig& cfg, Rng& rng) {
  ps.create("dec.slot.w", kaiming_uniform(rng, row_feat_dim(cfg), cfg.hidden));
  ps.create("dec.slot.b", Mat::Zero(1, cfg.hidden));
  ps.create("dec.q.w", kaiming_uniform(rng, cfg.query_dim, cfg.hidden));
  ps.create("dec.q.b", Mat::Zero(1, cfg.hidden));
  init_multihead_attention(ps, "dec.attn", cfg.hidden, rng, 0.5);
  ps.create("dec.gate.wi", kaiming_uniform(rng, 2 * cfg.hidden, cfg.hidden));
  ps.create("dec.gate.bi", Mat::Zero(1, cfg.hidden));
  ps.create("dec.gate.wf", kaiming_uniform(rng, 2 * cfg.hidden, cfg.hidden));
  ps.create("dec.gate.bf", Mat::Ones(1, cfg.hidden));  // open forget gates at init
  ps.create("dec.gate.wc", kaiming_uniform(rng, 2 * cfg.hidden, cfg.hidden));
  ps.create("dec.gate.bc", Mat::Zero(1, cfg.hidden));
  ps.create("dec.out.w", Mat::Zero(cfg.hidden, cfg.num_classes));
  ps.create("dec.out.b", Mat::Zero(1, cfg.num_classes));
}

void init_lstm(ParamStore& ps, const DecoderConfig& cfg, Rng& rng) {
  const int x_dim = cfg.nbr_dim + cfg.label_dim;
  ps.create("dec.h0.w", kaiming_uniform(rng, cfg.query_dim, cfg.hidden));
  ps.create("dec.h0.b", Mat::Zero(1, cfg.hidden));
  ps.create("dec.cell.w", kaiming_uniform(rng, cfg.hidden + x_dim, 4 * cfg.hidden));
  Mat cb = Mat::Zero(1, 4 * cfg.hidden);
  cb.block(0, cfg.hidden, 1, cfg.hidden).setOnes();  // forget-gate slice
  ps.create("dec.cell.b", std::move(cb));
  ps.create("dec.out.w", Mat::Zero(cfg.hidden, cfg.num_classes));
  ps.create("dec.out.b", Mat::Zero(1, cfg.num_classes));
}

Var output_head(Tape& tape, ParamStore& ps, Var h) {
  return add(matmul(h, tape.param(ps, "dec.out.w")), tape.param(ps, "dec.out.b"));
}

Var relff_decode(Tape& tape, ParamStore& ps, const DecoderConfig& cfg, Var query,
                 const NeighborInputs& nbrs, DecodeStats* stats) {
  std::vector<Var> parts = {tile_rows(query, nbrs.m), nbrs.emb, nbrs.label_emb, nbrs.dist};
  if (cfg.use_flags) parts.push_back(nbrs.flag);
  Var feats = concat(parts, 1);
  Var h = add(matmul(feats, tape.param(ps, "dec.in.w")), tape.param(ps, "dec.in.b"));
  for (int b = 0; b < cfg.blocks; ++b) {
    std::string blk = "dec.blk" + std::to_string(b);
    h = add(h, multihead_attention(tape, ps, blk + ".attn", h, h, cfg.heads));
    Var ff = add(matmul(relu(h), tape.param(ps, blk + ".ff.w")), tape.param(ps, blk + ".ff.b"));
    h = add(h, layer_norm(ff, cfg.ln_eps));
  }
  Var weights = distance_attention(tape, nbrs.dist);  // closer rows weigh more
  Var pooled = matmul(weights, h);
  if (stats != nullptr) stats->unroll_steps = cfg.blocks;
  return output_head(tape, ps, pooled);
}

Var rwm_decode(Tape& tape, ParamStore& ps, const DecoderConfig& cfg, Var query,
               const NeighborInputs& nbrs, DecodeStats* stats) {
  std::vector<Var> parts = {nbrs.emb, nbrs.label_emb, nbrs.dist};
  if (cfg.use_flags) parts.push_back(nbrs.flag);
  Var slots = add(matmul(concat(parts, 1), tape.param(ps, "dec.slot.w")),
                  tape.param(ps, "dec.slot.b"));
  Var q = add(matmul(query, tape.param(ps, "dec.q.w")), tape.param(ps, "dec.q.b"));
  int steps = 0;
  for (int s = 0; s < cfg.rwm_unroll; ++s) {
    Var kv = concat({slots, q}, 0);
    Var att = multihead_attention(tape, ps, "dec.attn", slots, kv, cfg.heads);
    Var gin = concat({slots, att}, 1);
    Var gi = sigmoid(add(matmul(gin, tape.param(ps, "dec.gate.wi")), tape.param(ps, "dec.gate.bi")));
    Var gf = sigmoid(add(matmul(gin, tape.param(ps, "dec.gate.wf")), tape.param(ps, "dec.gate.bf")));
    Var gc = tanh(add(matmul(gin, tape.param(ps, "dec.gate.wc")), tape.param(ps, "dec.gate.bc")));
    slots = add(multiply(gf, slots), multiply(gi, gc));
    ++steps;
  }
  if (stats != nullptr) stats->unroll_steps = steps;
  Var pooled = reduce_mean(slots, 0);
  return output_head(tape, ps, pooled);
}

Var lstm_decode(Tape& tape, ParamStore& ps, const DecoderConfig& cfg, Var query,
                const NeighborInputs& nbrs, DecodeStats* stats) {
  // Neighbors are consumed in ascending-distance order; distances and flags
  // are not part of the LSTM input.
  std::vector<int> order(static_cast<size_t>(nbrs.m));
  std::iota(order.begin(), order.end(), 0);
  const Mat& d = nbrs.dist.value();
  std::stable_sort(order.begin(), order.end(), [&d](int a, int b) { return d(a, 0) < d(b, 0); });

  const int hidden = cfg.hidden;
  Var h = add(matmul(query, tape.param(ps, "dec.h0.w")), tape.param(ps, "dec.h0.b"));
  Var c = tape.constant(Mat::Zero(1, hidden));
  Var w = tape.param(ps, "dec.cell.w");
  Var b = tape.param(ps, "dec.cell.b");
  int steps = 0;
  for (int idx : order) {
    Var xi = concat({slice(nbrs.emb, idx, 0, 1, cfg.nbr_dim),
                     slice(nbrs.label_emb, idx, 0, 1, cfg.label_dim)},
                    1);
    Var gates = add(matmul(concat({h, xi}, 1), w), b);
    Var gi = sigmoid(slice(gates, 0, 0, 1, hidden));
    Var gf = sigmoid(slice(gates, 0, hidden, 1, hidden));
    Var gg = tanh(slice(gates, 0, 2 * hidden, 1, hidden));
    Var go = sigmoid(slice(gates, 0, 3 * hidden, 1, hidden));
    c = add(multiply(gf, c), multiply(gi, gg));
    h = multiply(go, tanh(c));
    ++steps;
  }
  if (stats != nullptr) stats->unroll_steps = steps;
  return output_head(tape, ps, h);
}

}  // namespace

void init_decoder(ParamStore& ps, const DecoderConfig& cfg, Rng& rng) {
  switch (cfg.kind) {
    case DecoderKind::relff: init_relff(ps, cfg, rng); return;
    case DecoderKind::rwm: init_rwm(ps, cfg, rng); return;
    case DecoderKind::lstm: init_lstm(ps, cfg, rng); return;
  }
  fail("init_decoder: bad kind");
}

Var decode(Tape& tape, ParamStore& ps, const DecoderConfig& cfg, Var query,
           const NeighborInputs& nbrs, DecodeStats* stats) {
  if (nbrs.m < 1)
    fail("decode: empty neighbor set (caller must substitute the null row)");
  if (query.rows() != 1 || query.cols() != cfg.query_dim)
    fail("decode: query shape " + shape_str(query.value()) + ", expected 1x" +
         std::to_string(cfg.query_dim));
  switch (cfg.kind) {
    case DecoderKind::relff: return relff_decode(tape, ps, cfg, query, nbrs, stats);
    case DecoderKind::rwm: return rwm_decode(tape, ps, cfg, query, nbrs, stats);
    case DecoderKind::lstm: return lstm_decode(tape, ps, cfg, query, nbrs, stats);
  }
  fail("decode: bad kind");
}

namespace {

Mat rand_mat(Rng& rng, int rows, int cols, double lo, double hi) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

GradCheckCase decoder_case(DecoderKind kind, uint64_t seed) {
  DecoderConfig cfg;
  cfg.kind = kind;
  cfg.query_dim = 10;
  cfg.nbr_dim = 10;
  cfg.label_dim = 6;
  cfg.hidden = 16;
  cfg.heads = 4;
  cfg.blocks = 8;
  cfg.num_classes = 5;
  cfg.use_flags = true;
  const int m = 4;

  auto ps = std::make_shared<ParamStore>();
  Rng rng(seed);
  init_decoder(*ps, cfg, rng);
  // The output head is zero-initialized by design, which would block
  // gradient flow into everything upstream; randomize it for the check.
  // Kept small so the cross-entropy stays clear of the probability clamp.
  ps->value("dec.out.w") = rand_mat(rng, cfg.hidden, cfg.num_classes, -0.05, 0.05);

  GradCheckCase c;
  c.name = "decoder_" + to_string(kind);
  c.params = ps;
  c.inputs = {rand_mat(rng, 1, cfg.query_dim, -1.0, 1.0), rand_mat(rng, m, cfg.nbr_dim, -1.0, 1.0),
              rand_mat(rng, m, cfg.label_dim, -1.0, 1.0), rand_mat(rng, m, 1, 0.2, 3.0),
              rand_mat(rng, m, 1, 0.0, 1.0)};
  c.coord_budget = 24;
  c.build = [cfg, ps, m](Tape& t, const std::vector<Var>& ls) {
    NeighborInputs nbrs;
    nbrs.emb = ls[1];
    nbrs.label_emb = ls[2];
    nbrs.dist = ls[3];
    nbrs.flag = ls[4];
    nbrs.m = m;
    Var logits = decode(t, *ps, cfg, ls[0], nbrs);
    return cross_entropy_with_logits(logits, {2});
  };
  return c;
}

}  // namespace

void add_decoder_cases(GradCheckSuite& suite, uint64_t seed) {
  suite.add(decoder_case(DecoderKind::relff, seed + 1));
  suite.add(decoder_case(DecoderKind::rwm, seed + 2));
  suite.add(decoder_case(DecoderKind::lstm, seed + 3));
}

}  // namespace apl
