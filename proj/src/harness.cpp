#include "apl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "apl/controller.hpp"

namespace apl {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

MetricsWriter::MetricsWriter(const std::string& path) : out_(path, std::ios::binary) {
  if (!out_) fail("MetricsWriter: cannot open '" + path + "'");
}

void MetricsWriter::write(const MetricsRecord& r) {
  json j;
  j["step"] = r.step;
  j["episode"] = r.episode;
  j["phase"] = r.phase;
  j["task"] = r.task;
  j["loss"] = r.loss;
  j["acc"] = r.acc;
  j["mem_size"] = r.mem_size;
  j["writes"] = r.writes;
  j["lr"] = r.lr;
  j["sigma"] = r.sigma;
  out_ << j.dump() << "\n";
}

double lr_schedule(int64_t step) {
  if (step < 0) fail("lr_schedule: negative step");
  double decays = static_cast<double>(step / 1000);
  return std::max(1e-5, 1e-4 * std::pow(0.9, decays));
}

namespace {

int argmax_row(const Mat& row) {
  int best = 0;
  double bv = row(0, 0);
  for (Eigen::Index j = 1; j < row.cols(); ++j)
    if (row(0, j) > bv) {
      bv = row(0, j);
      best = static_cast<int>(j);
    }
  return best;
}

}  // namespace

StepOutcome train_step(Model& model, MemoryStore& memory, const Batch& batch, int64_t step,
                       double lr, double sigma, bool update_params, bool enable_writes) {
  if (batch.empty()) fail("train_step: empty batch");
  StepOutcome out;
  out.step = step;
  out.lr = lr;

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double loss_sum = 0.0;
  int correct = 0;
  std::vector<std::pair<std::vector<Vec>, int>> pending;

  if (update_params) model.params().zero_grads();

  // Every element sees the identical step-start memory snapshot; writes are
  // collected and applied only after the parameter update.
  for (const Example& ex : batch) {
    Tape tape;
    ElementForward fwd = model.forward_element(tape, memory, ex);
    Mat probs_row = softmax_rows(fwd.logits.value());
    Vec probs = probs_row.row(0).transpose();

    int pred = argmax_row(probs_row);
    bool is_correct = pred == ex.label;
    if (is_correct) ++correct;
    out.element_correct.push_back(is_correct);
    loss_sum += -std::log(std::max(probs(ex.label), kProbClamp));

    if (update_params) {
      Var loss = cross_entropy_with_logits(fwd.logits, {ex.label});
      tape.backward(scale(loss, inv_b));
    }

    SurpriseDecision dec = should_write(probs, ex.label, sigma);
    bool writing = enable_writes && dec.write;
    out.element_written.push_back(writing);
    if (writing) pending.emplace_back(fwd.query_keys, ex.label);
    out.graph_nodes += tape.size();
  }

  if (update_params) model.params().adam_step(lr);
  for (auto& [keys, label] : pending) memory.write(keys, label, step);

  out.loss = loss_sum * inv_b;
  out.acc = static_cast<double>(correct) * inv_b;
  out.writes = static_cast<int>(pending.size());
  out.mem_size = memory.size();
  return out;
}

namespace {

int curriculum_length(int base, double trailing_acc) {
  if (trailing_acc > 0.9) return std::max(1, base / 3);
  if (trailing_acc > 0.8) return std::max(1, (2 * base) / 3);
  return base;
}

}  // namespace

TrainResult train(const RunConfig& cfg, std::ostream* progress) {
  cfg.validate();
  fs::create_directories(cfg.outdir);

  const double sigma = cfg.sigma_value();
  Model model = Model::init(cfg.model_config(), derive_seed(cfg.seed, 1));

  GlyphDataset glyphs;
  DigitSource digits;
  if (cfg.task == TaskKind::classify)
    glyphs = gen_glyph_dataset(cfg.classes, cfg.examples_per_class, derive_seed(cfg.seed, 2),
                               cfg.rotations);
  else
    digits = digit_source_from_glyphs(cfg.examples_per_class, derive_seed(cfg.seed, 2));

  const std::string metrics_path = cfg.outdir + "/metrics.jsonl";
  MetricsWriter metrics(metrics_path);

  std::deque<double> window;  // trailing per-step batch accuracy
  double window_sum = 0.0;
  auto trailing = [&]() { return window.empty() ? 0.0 : window_sum / window.size(); };

  int64_t t = 0;
  int64_t episode = 0;
  while (t < cfg.steps) {
    const int len = curriculum_length(cfg.episode_steps, cfg.curriculum ? trailing() : 0.0);
    EpisodeSpec es;
    es.task = cfg.task;
    es.nway = cfg.nway;
    es.batch = cfg.batch;
    es.steps = len;
    es.seed = derive_seed(cfg.seed, 1000 + static_cast<uint64_t>(episode));
    es.symbols = cfg.symbols;

    MemoryStore memory(model.store_schema(),
                       static_cast<size_t>(cfg.batch) * static_cast<size_t>(len));

    std::optional<ClassificationEpisode> cls;
    std::optional<AnalogyEpisode> ana;
    if (cfg.task == TaskKind::classify)
      cls.emplace(glyphs, es, /*use_train_split=*/true);
    else
      ana.emplace(digits, es, /*use_train_pool=*/true);

    for (int s = 0; s < len && t < cfg.steps; ++s, ++t) {
      Batch batch = cls ? cls->next() : ana->next();
      double lr = lr_schedule(t);
      StepOutcome so = train_step(model, memory, batch, t, lr, sigma, true, true);

      MetricsRecord r;
      r.step = t;
      r.episode = episode;
      r.phase = "train";
      r.task = to_string(cfg.task);
      r.loss = so.loss;
      r.acc = so.acc;
      r.mem_size = so.mem_size;
      r.writes = so.writes;
      r.lr = lr;
      r.sigma = sigma;
      metrics.write(r);

      window.push_back(so.acc);
      window_sum += so.acc;
      if (window.size() > 500) {
        window_sum -= window.front();
        window.pop_front();
      }

      if (cfg.checkpoint_every > 0 && (t + 1) % cfg.checkpoint_every == 0)
        model.save(cfg.outdir + "/ckpt_" + std::to_string(t + 1) + ".ckpt", cfg.to_json());

      if (progress != nullptr && (t + 1) % 200 == 0)
        (*progress) << "step " << (t + 1) << "/" << cfg.steps << " acc(500)=" << trailing()
                    << " mem=" << so.mem_size << "\n";
    }
    ++episode;
  }

  TrainResult res;
  res.checkpoint_path = cfg.outdir + "/model.ckpt";
  res.metrics_path = metrics_path;
  res.steps_run = t;
  res.final_trailing_acc = trailing();
  model.save(res.checkpoint_path, cfg.to_json());
  return res;
}

FixedContextResult eval_fixed_context(Model& model, const GlyphDataset& data, int nway, int shots,
                                      uint64_t seed) {
  if (nway > static_cast<int>(data.test_classes.size()))
    fail("eval_fixed_context: " + std::to_string(nway) + "-way but only " +
         std::to_string(data.test_classes.size()) + " test classes");

  Rng rng(seed);
  std::vector<int> classes = data.test_classes;
  rng.shuffle(classes);
  classes.resize(static_cast<size_t>(nway));
  std::vector<int> perm = rng.permutation(nway);

  MemoryStore memory(model.store_schema(),
                     static_cast<size_t>(nway) * static_cast<size_t>(shots));
  std::vector<std::pair<Example, int>> queries;  // (example, label)
  for (int pos = 0; pos < nway; ++pos) {
    int cls = classes[static_cast<size_t>(pos)];
    const auto& ex = data.examples[static_cast<size_t>(cls)];
    if (static_cast<int>(ex.size()) <= shots)
      fail("eval_fixed_context: class has " + std::to_string(ex.size()) +
           " examples, need more than " + std::to_string(shots));
    std::vector<int> order(ex.size());
    for (size_t i = 0; i < ex.size(); ++i) order[i] = static_cast<int>(i);
    rng.shuffle(order);
    int label = perm[static_cast<size_t>(pos)];
    for (int s = 0; s < shots; ++s) {
      Example e;
      e.x = ex[static_cast<size_t>(order[static_cast<size_t>(s)])];
      e.label = label;
      memory.write(model.embed_keys(e), label, s);
    }
    for (size_t qi = static_cast<size_t>(shots); qi < order.size(); ++qi) {
      Example e;
      e.x = ex[static_cast<size_t>(order[qi])];
      e.label = label;
      queries.emplace_back(std::move(e), label);
    }
  }

  FixedContextResult res;
  res.mem_size = memory.size();
  int correct = 0;
  for (auto& [ex, label] : queries) {
    Tape tape;
    ElementForward fwd = model.forward_element(tape, memory, ex);
    if (argmax_row(fwd.logits.value()) == label) ++correct;
  }
  res.evaluated = static_cast<int>(queries.size());
  res.accuracy = queries.empty() ? 0.0 : static_cast<double>(correct) / queries.size();
  return res;
}

namespace {

EvalCurve run_sequential(Model& model, std::optional<ClassificationEpisode>& cls,
                         std::optional<AnalogyEpisode>& ana, const EpisodeSpec& spec, double sigma,
                         MemoryStore* final_memory) {
  MemoryStore memory(model.store_schema(),
                     static_cast<size_t>(spec.batch) * static_cast<size_t>(spec.steps));
  EvalCurve curve;
  int64_t seen = 0;
  for (int s = 0; s < spec.steps; ++s) {
    Batch batch = cls ? cls->next() : ana->next();
    StepOutcome so = train_step(model, memory, batch, s, 0.0, sigma,
                                /*update_params=*/false, /*enable_writes=*/true);
    seen += static_cast<int64_t>(batch.size());
    curve.points.push_back({seen, so.acc, so.mem_size, so.writes});
    for (bool c : so.element_correct) curve.per_example_correct.push_back(c);
  }
  if (final_memory != nullptr) *final_memory = memory;
  return curve;
}

}  // namespace

EvalCurve eval_sequential_classify(Model& model, const GlyphDataset& data, const EpisodeSpec& spec,
                                   MemoryStore* final_memory) {
  std::optional<ClassificationEpisode> cls;
  std::optional<AnalogyEpisode> ana;
  cls.emplace(data, spec, /*use_train_split=*/false);
  return run_sequential(model, cls, ana, spec, threshold_for(spec.nway), final_memory);
}

EvalCurve eval_sequential_analogy(Model& model, const DigitSource& digits, const EpisodeSpec& spec,
                                  MemoryStore* final_memory) {
  std::optional<ClassificationEpisode> cls;
  std::optional<AnalogyEpisode> ana;
  ana.emplace(digits, spec, /*use_train_pool=*/false);
  return run_sequential(model, cls, ana, spec, threshold_for(AnalogyEpisode::kNumTargets),
                        final_memory);
}

std::vector<double> eval_continual(Model& model, const GlyphDataset& data, int num_tasks,
                                   int classes_per_task, int examples_per_task, int tail_examples,
                                   uint64_t seed) {
  const int needed = num_tasks * classes_per_task;
  if (needed > static_cast<int>(data.test_classes.size()))
    fail("eval_continual: need " + std::to_string(needed) + " unseen classes, have " +
         std::to_string(data.test_classes.size()));

  Rng rng(seed);
  std::vector<int> classes = data.test_classes;
  rng.shuffle(classes);

  // Memory persists across tasks; parameters are never updated.
  MemoryStore memory(model.store_schema(),
                     static_cast<size_t>(num_tasks) * static_cast<size_t>(examples_per_task));
  const double sigma = threshold_for(classes_per_task);

  std::vector<double> task_acc;
  int64_t step = 0;
  for (int task = 0; task < num_tasks; ++task) {
    std::vector<int> task_classes(classes.begin() + task * classes_per_task,
                                  classes.begin() + (task + 1) * classes_per_task);
    std::vector<int> perm = rng.permutation(classes_per_task);

    std::vector<std::pair<int, int>> pool;  // (class position, example index)
    for (int pos = 0; pos < classes_per_task; ++pos) {
      int cls = task_classes[static_cast<size_t>(pos)];
      for (size_t i = 0; i < data.examples[static_cast<size_t>(cls)].size(); ++i)
        pool.emplace_back(pos, static_cast<int>(i));
    }
    if (static_cast<int>(pool.size()) < examples_per_task)
      fail("eval_continual: task has only " + std::to_string(pool.size()) + " unique examples");
    rng.shuffle(pool);
    pool.resize(static_cast<size_t>(examples_per_task));

    std::vector<bool> correct;
    size_t i = 0;
    while (i < pool.size()) {
      Batch batch;
      for (int b = 0; b < 16 && i < pool.size(); ++b, ++i) {
        auto [pos, exi] = pool[i];
        Example e;
        e.x = data.examples[static_cast<size_t>(task_classes[static_cast<size_t>(pos)])]
                           [static_cast<size_t>(exi)];
        e.label = perm[static_cast<size_t>(pos)];
        batch.push_back(std::move(e));
      }
      StepOutcome so = train_step(model, memory, batch, step++, 0.0, sigma,
                                  /*update_params=*/false, /*enable_writes=*/true);
      for (bool c : so.element_correct) correct.push_back(c);
    }

    int tail = std::min<int>(tail_examples, static_cast<int>(correct.size()));
    int hits = 0;
    for (size_t j = correct.size() - static_cast<size_t>(tail); j < correct.size(); ++j)
      if (correct[j]) ++hits;
    task_acc.push_back(static_cast<double>(hits) / tail);
  }
  return task_acc;
}

double mean_first_step_kl(Model& model, const GlyphDataset& data, int nway, int episodes,
                          uint64_t seed) {
  double kl_sum = 0.0;
  int count = 0;
  const double uniform = 1.0 / static_cast<double>(model.config().num_classes);
  for (int e = 0; e < episodes; ++e) {
    EpisodeSpec spec;
    spec.task = TaskKind::classify;
    spec.nway = nway;
    spec.batch = 16;
    spec.steps = 1;
    spec.seed = derive_seed(seed, static_cast<uint64_t>(e));
    ClassificationEpisode ep(data, spec, /*use_train_split=*/false);
    Batch batch = ep.next();
    MemoryStore memory(model.store_schema(), 1);  // stays empty
    for (const Example& ex : batch) {
      Tape tape;
      ElementForward fwd = model.forward_element(tape, memory, ex);
      Mat probs = softmax_rows(fwd.logits.value());
      double kl = 0.0;
      for (Eigen::Index j = 0; j < probs.cols(); ++j) {
        double p = std::max(probs(0, j), kProbClamp);
        kl += p * std::log(p / uniform);
      }
      kl_sum += kl;
      ++count;
    }
  }
  return kl_sum / count;
}

std::vector<SigmaSweepRow> run_sigma_sweep(Model& model, const std::vector<double>& sigmas,
                                           int nway, int points, uint64_t seed) {
  // Fresh unseen classes with enough unique examples for the whole run.
  const int per_class = points / nway + 2;
  GlyphDataset data = gen_glyph_dataset(2 * nway, per_class, derive_seed(seed, 77),
                                        /*rotations=*/false, /*test_fraction=*/0.5);

  std::vector<SigmaSweepRow> rows;
  for (double sigma : sigmas) {
    EpisodeSpec spec;
    spec.task = TaskKind::classify;
    spec.nway = nway;
    spec.batch = 16;
    spec.steps = (points + spec.batch - 1) / spec.batch;
    spec.seed = derive_seed(seed, 101);  // same stream for every sigma
    ClassificationEpisode ep(data, spec, /*use_train_split=*/false);

    MemoryStore memory(model.store_schema(), static_cast<size_t>(points) + 16);
    std::vector<bool> correct;
    int64_t remaining = points;
    int64_t step = 0;
    while (remaining > 0) {
      Batch batch = ep.next();
      if (static_cast<int64_t>(batch.size()) > remaining)
        batch.resize(static_cast<size_t>(remaining));
      StepOutcome so = train_step(model, memory, batch, step++, 0.0, sigma,
                                  /*update_params=*/false, /*enable_writes=*/true);
      for (bool c : so.element_correct) correct.push_back(c);
      remaining -= static_cast<int64_t>(batch.size());
    }
    SigmaSweepRow row;
    row.sigma = sigma;
    row.final_mem = memory.size();
    int tail = std::min<int>(100, static_cast<int>(correct.size()));
    int hits = 0;
    for (size_t j = correct.size() - static_cast<size_t>(tail); j < correct.size(); ++j)
      if (correct[j]) ++hits;
    row.tail_acc = static_cast<double>(hits) / tail;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace apl
