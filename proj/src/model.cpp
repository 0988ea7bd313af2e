#include "apl/model.hpp"

#include <nlohmann/json.hpp>

namespace apl {

using json = nlohmann::ordered_json;

std::string ModelConfig::to_json() const {
  json j;
  j["task"] = apl::to_string(task);
  j["num_classes"] = num_classes;
  j["k"] = k;
  j["decoder"] = apl::to_string(decoder);
  j["enc"] = {{"in_dim", enc.in_dim},
              {"hidden1", enc.hidden1},
              {"hidden2", enc.hidden2},
              {"out_dim", enc.out_dim},
              {"ln_eps", enc.ln_eps}};
  j["sym"] = {{"alphabet", sym.alphabet}, {"dim", sym.dim}};
  j["label_dim"] = label_dim;
  j["hidden"] = hidden;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& s) {
  json j = json::parse(s);
  ModelConfig cfg;
  cfg.task = task_kind_from_string(j.at("task").get<std::string>());
  cfg.num_classes = j.at("num_classes").get<int>();
  cfg.k = j.at("k").get<int>();
  cfg.decoder = decoder_kind_from_string(j.at("decoder").get<std::string>());
  cfg.enc.in_dim = j.at("enc").at("in_dim").get<int>();
  cfg.enc.hidden1 = j.at("enc").at("hidden1").get<int>();
  cfg.enc.hidden2 = j.at("enc").at("hidden2").get<int>();
  cfg.enc.out_dim = j.at("enc").at("out_dim").get<int>();
  cfg.enc.ln_eps = j.at("enc").at("ln_eps").get<double>();
  cfg.sym.alphabet = j.at("sym").at("alphabet").get<int>();
  cfg.sym.dim = j.at("sym").at("dim").get<int>();
  cfg.label_dim = j.at("label_dim").get<int>();
  cfg.hidden = j.at("hidden").get<int>();
  return cfg;
}

StoreSchema Model::store_schema() const {
  StoreSchema s;
  s.key_columns.push_back({"img", cfg_.enc.out_dim});
  if (is_analogy(cfg_.task)) s.key_columns.push_back({"sym", cfg_.sym.dim});
  return s;
}

DecoderConfig Model::decoder_config() const {
  DecoderConfig d;
  d.kind = cfg_.decoder;
  d.query_dim = cfg_.enc.out_dim + (is_analogy(cfg_.task) ? cfg_.sym.dim : 0);
  d.nbr_dim = d.query_dim;
  d.label_dim = cfg_.label_dim;
  d.hidden = cfg_.hidden;
  d.num_classes = cfg_.num_classes;
  d.use_flags = is_analogy(cfg_.task);
  return d;
}

Model Model::init(const ModelConfig& cfg, uint64_t seed) {
  Model m;
  m.cfg_ = cfg;
  Rng root(seed);

  Rng enc_rng = root.fork(1);
  init_image_encoder(m.params_, cfg.enc, enc_rng);
  if (is_analogy(cfg.task)) {
    Rng sym_rng = root.fork(2);
    init_symbol_encoder(m.params_, cfg.sym, sym_rng);
  }

  Rng lab_rng = root.fork(3);
  double bound = std::sqrt(3.0 / static_cast<double>(cfg.label_dim));
  Mat table(cfg.num_classes, cfg.label_dim);
  for (Eigen::Index i = 0; i < table.rows(); ++i)
    for (Eigen::Index j = 0; j < table.cols(); ++j) table(i, j) = lab_rng.uniform(-bound, bound);
  m.params_.create("label.table", std::move(table));

  DecoderConfig dcfg = m.decoder_config();
  Rng dec_rng = root.fork(4);
  init_decoder(m.params_, dcfg, dec_rng);

  // One trainable null row per key column, substituted when memory is empty.
  StoreSchema schema = m.store_schema();
  Rng null_rng = root.fork(5);
  for (size_t c = 0; c < schema.key_columns.size(); ++c) {
    std::string prefix = "null.c" + std::to_string(c);
    Mat emb(1, dcfg.nbr_dim);
    for (Eigen::Index j = 0; j < emb.cols(); ++j) emb(0, j) = null_rng.uniform(-0.1, 0.1);
    m.params_.create(prefix + ".emb", std::move(emb));
    Mat lab(1, cfg.label_dim);
    for (Eigen::Index j = 0; j < lab.cols(); ++j) lab(0, j) = null_rng.uniform(-0.1, 0.1);
    m.params_.create(prefix + ".label", std::move(lab));
  }
  return m;
}

ElementForward Model::forward_element(Tape& tape, const MemoryStore& store, const Example& ex) {
  ElementForward out;

  Mat xrow(1, ex.x.size());
  xrow.row(0) = ex.x.transpose();
  Var img_emb = encode_image(tape, params_, cfg_.enc, tape.constant(std::move(xrow)));

  Var query = img_emb;
  if (is_analogy(cfg_.task)) {
    if (ex.symbol < 0) fail("forward_element: analogy example is missing its symbol");
    Var sym_emb = encode_symbol(tape, params_, cfg_.sym, {ex.symbol});
    query = concat({img_emb, sym_emb}, 1);
  }
  // Frozen copies: what gets written to memory and what queries it.
  const Mat& qv = query.value();
  out.query_keys.push_back(qv.block(0, 0, 1, cfg_.enc.out_dim).transpose());
  if (is_analogy(cfg_.task))
    out.query_keys.push_back(qv.block(0, cfg_.enc.out_dim, 1, cfg_.sym.dim).transpose());

  const DecoderConfig dcfg = decoder_config();
  const size_t num_cols = store_schema().key_columns.size();
  NeighborInputs nbrs;

  if (store.size() == 0) {
    std::vector<Var> embs;
    std::vector<Var> labs;
    for (size_t c = 0; c < num_cols; ++c) {
      std::string prefix = "null.c" + std::to_string(c);
      embs.push_back(tape.param(params_, prefix + ".emb"));
      labs.push_back(tape.param(params_, prefix + ".label"));
    }
    nbrs.m = static_cast<int>(num_cols);
    nbrs.emb = embs.size() == 1 ? embs[0] : concat(embs, 0);
    nbrs.label_emb = labs.size() == 1 ? labs[0] : concat(labs, 0);
    nbrs.dist = tape.constant(Mat::Zero(nbrs.m, 1));
    Mat flags(nbrs.m, 1);
    for (int c = 0; c < nbrs.m; ++c) flags(c, 0) = static_cast<double>(c);
    nbrs.flag = tape.constant(std::move(flags));
  } else {
    std::vector<RetrievedRow> rows;
    std::vector<double> row_flags;
    for (size_t c = 0; c < num_cols; ++c) {
      auto got = store.query_knn(out.query_keys[c], static_cast<int>(c), cfg_.k);
      for (auto& r : got) {
        rows.push_back(std::move(r));
        row_flags.push_back(static_cast<double>(c));
      }
    }
    const int m = static_cast<int>(rows.size());
    Mat emb(m, dcfg.nbr_dim);
    Mat dist(m, 1);
    Mat flags(m, 1);
    std::vector<int> labels(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i) {
      const RetrievedRow& r = rows[static_cast<size_t>(i)];
      Eigen::Index off = 0;
      for (const Vec& key : r.keys) {
        emb.block(i, off, 1, key.size()) = key.transpose();
        off += key.size();
      }
      dist(i, 0) = r.distance;
      flags(i, 0) = row_flags[static_cast<size_t>(i)];
      labels[static_cast<size_t>(i)] = r.label;
    }
    nbrs.m = m;
    nbrs.emb = tape.constant(std::move(emb));
    nbrs.label_emb = embedding_lookup(tape.param(params_, "label.table"), labels);
    nbrs.dist = tape.constant(std::move(dist));
    nbrs.flag = tape.constant(std::move(flags));
  }

  out.logits = decode(tape, params_, dcfg, query, nbrs, &out.stats);
  return out;
}

std::vector<Vec> Model::embed_keys(const Example& ex) {
  Tape tape;
  Mat xrow(1, ex.x.size());
  xrow.row(0) = ex.x.transpose();
  Var img = encode_image(tape, params_, cfg_.enc, tape.constant(std::move(xrow)));
  std::vector<Vec> keys;
  keys.push_back(img.value().row(0).transpose());
  if (is_analogy(cfg_.task)) {
    if (ex.symbol < 0) fail("embed_keys: analogy example is missing its symbol");
    Var sym = encode_symbol(tape, params_, cfg_.sym, {ex.symbol});
    keys.push_back(sym.value().row(0).transpose());
  }
  return keys;
}

void Model::save(const std::string& path, const std::string& run_json) const {
  json meta;
  meta["model"] = json::parse(cfg_.to_json());
  if (!run_json.empty()) meta["run"] = json::parse(run_json);
  params_.save(path, meta.dump());
}

Model Model::load(const std::string& path, std::string* run_json) {
  std::string meta_str;
  ParamStore ps = ParamStore::load(path, &meta_str);
  if (meta_str.empty()) fail("Model::load: checkpoint '" + path + "' has no model metadata");
  json meta = json::parse(meta_str);
  Model m;
  m.cfg_ = ModelConfig::from_json(meta.at("model").dump());
  m.params_ = std::move(ps);
  if (run_json != nullptr)
    *run_json = meta.contains("run") ? meta["run"].dump() : std::string{};
  return m;
}

}  // namespace apl
