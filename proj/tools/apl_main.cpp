// apl: train and evaluate the surprise-gated episodic learner from the
// command line. Summaries go to stdout as single-line JSON; curves and
// metrics land in files.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "apl/config.hpp"
#include "apl/gradcheck.hpp"
#include "apl/harness.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

uint64_t seed_with_env(uint64_t seed) {
  if (const char* env = std::getenv("APL_SEED")) {
    try {
      return static_cast<uint64_t>(std::stoull(env));
    } catch (const std::exception&) {
      throw apl::Error("APL_SEED must be an integer, got '" + std::string(env) + "'");
    }
  }
  return seed;
}

std::string data_dir_path(const std::string& p) {
  if (p.empty() || fs::path(p).is_absolute()) return p;
  if (const char* env = std::getenv("APL_DATA_DIR")) return (fs::path(env) / p).string();
  return p;
}

int cmd_train(const std::string& config_path) {
  apl::RunConfig cfg;
  try {
    cfg = apl::parse_config_file(config_path);
    cfg.seed = seed_with_env(cfg.seed);
  } catch (const apl::Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  }
  try {
    apl::TrainResult res = apl::train(cfg, &std::cerr);
    json j;
    j["checkpoint"] = res.checkpoint_path;
    j["metrics"] = res.metrics_path;
    j["steps"] = res.steps_run;
    j["trailing_acc"] = res.final_trailing_acc;
    std::cout << j.dump() << "\n";
    return kExitOk;
  } catch (const apl::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_eval(const std::string& ckpt, const std::string& mode, int shots, int nway, int steps,
             int tasks, uint64_t seed, const std::string& out_path,
             const std::string& dump_memory) {
  try {
    std::string run_json;
    apl::Model model = apl::Model::load(ckpt, &run_json);
    if (run_json.empty()) throw apl::Error("checkpoint has no run config");
    apl::RunConfig run = apl::RunConfig::from_json(run_json);
    seed = seed != 0 ? seed : apl::derive_seed(run.seed, 0xe7a1);
    if (nway == 0) nway = run.nway;

    json summary;
    summary["mode"] = mode;

    if (mode == "kshot") {
      if (apl::is_analogy(run.task))
        throw apl::Error("kshot eval needs a classification checkpoint, got " +
                         apl::to_string(run.task));
      apl::GlyphDataset data = apl::gen_glyph_dataset(
          run.classes, run.examples_per_class, apl::derive_seed(run.seed, 2), run.rotations);
      apl::FixedContextResult r = apl::eval_fixed_context(model, data, nway, shots, seed);
      summary["accuracy"] = r.accuracy;
      summary["mem_size"] = r.mem_size;
      summary["evaluated"] = r.evaluated;
    } else if (mode == "sequential") {
      apl::EpisodeSpec spec;
      spec.task = run.task;
      spec.nway = nway;
      spec.batch = run.batch;
      spec.steps = steps;
      spec.seed = seed;
      spec.symbols = run.symbols;
      apl::EvalCurve curve;
      apl::MemoryStore final_mem(model.store_schema(), 1);
      if (run.task == apl::TaskKind::classify) {
        apl::GlyphDataset data = apl::gen_glyph_dataset(
            run.classes, run.examples_per_class, apl::derive_seed(run.seed, 2), run.rotations);
        curve = apl::eval_sequential_classify(model, data, spec, &final_mem);
      } else {
        apl::DigitSource digits =
            apl::digit_source_from_glyphs(run.examples_per_class, apl::derive_seed(run.seed, 2));
        curve = apl::eval_sequential_analogy(model, digits, spec, &final_mem);
      }
      std::string curve_path = out_path.empty() ? "curve.jsonl" : out_path;
      std::ofstream cf(curve_path, std::ios::binary);
      if (!cf) throw apl::Error("cannot open curve file '" + curve_path + "'");
      for (const auto& p : curve.points) {
        json cj;
        cj["examples_seen"] = p.examples_seen;
        cj["acc"] = p.acc;
        cj["mem_size"] = p.mem_size;
        cj["writes"] = p.writes;
        cf << cj.dump() << "\n";
      }
      int hits = 0;
      for (bool c : curve.per_example_correct) hits += c ? 1 : 0;
      summary["accuracy"] = curve.per_example_correct.empty()
                                ? 0.0
                                : static_cast<double>(hits) / curve.per_example_correct.size();
      summary["mem_size"] = curve.points.empty() ? 0 : curve.points.back().mem_size;
      summary["curve_path"] = curve_path;
      if (!dump_memory.empty()) {
        std::ofstream mf(dump_memory, std::ios::binary);
        if (!mf) throw apl::Error("cannot open memory dump '" + dump_memory + "'");
        final_mem.dump_jsonl(mf);
        summary["memory_dump"] = dump_memory;
      }
    } else if (mode == "continual") {
      if (apl::is_analogy(run.task))
        throw apl::Error("continual eval needs a classification checkpoint");
      apl::GlyphDataset data = apl::gen_glyph_dataset(
          run.classes, run.examples_per_class, apl::derive_seed(run.seed, 2), run.rotations);
      std::vector<double> acc =
          apl::eval_continual(model, data, tasks, 10, 200, 100, seed);
      summary["task_acc"] = acc;
    } else {
      std::cerr << "usage error: unknown eval mode '" << mode << "'\n";
      return kExitUsage;
    }
    std::cout << summary.dump() << "\n";
    return kExitOk;
  } catch (const apl::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_sweep_sigma(const std::string& ckpt, const std::string& sigmas_csv, int nway, int points,
                    uint64_t seed) {
  try {
    std::vector<double> sigmas;
    std::stringstream ss(sigmas_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (tok.empty()) continue;
      sigmas.push_back(std::stod(tok));
    }
    if (sigmas.empty()) throw apl::Error("no sigma values in '" + sigmas_csv + "'");

    apl::Model model = apl::Model::load(ckpt);
    if (apl::is_analogy(model.config().task))
      throw apl::Error("sweep-sigma needs a classification checkpoint");
    auto rows = apl::run_sigma_sweep(model, sigmas, nway, points, seed);
    for (const auto& r : rows) {
      json j;
      j["sigma"] = r.sigma;
      j["final_mem"] = r.final_mem;
      j["tail_acc"] = r.tail_acc;
      std::cout << j.dump() << "\n";
    }
    return kExitOk;
  } catch (const apl::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }
}

int cmd_analogy(const std::string& mode, int k, const std::string& decoder, int64_t steps,
                uint64_t seed, const std::string& outdir, int symbols, const std::string& sigma,
                int eval_steps, const std::string& idx_images, const std::string& idx_labels) {
  apl::RunConfig cfg;
  try {
    cfg.task = mode == "fixed" ? apl::TaskKind::analogy_fixed
               : mode == "shuffled"
                   ? apl::TaskKind::analogy_shuffled
                   : throw apl::Error("analogy mode must be fixed|shuffled, got '" + mode + "'");
    cfg.decoder = apl::decoder_kind_from_string(decoder);
    cfg.k = k;
    cfg.steps = steps;
    cfg.seed = seed_with_env(seed);
    cfg.outdir = outdir;
    cfg.symbols = symbols;
    cfg.sigma = sigma;
    cfg.validate();
  } catch (const apl::Error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }
  try {
    apl::TrainResult res = apl::train(cfg, &std::cerr);
    apl::Model model = apl::Model::load(res.checkpoint_path);

    apl::DigitSource digits;
    if (!idx_images.empty())
      digits = apl::digit_source_from_idx(
          apl::load_idx(data_dir_path(idx_images), data_dir_path(idx_labels)));
    else
      digits = apl::digit_source_from_glyphs(cfg.examples_per_class, apl::derive_seed(cfg.seed, 2));

    apl::EpisodeSpec spec;
    spec.task = cfg.task;
    spec.batch = cfg.batch;
    spec.steps = eval_steps;
    spec.seed = apl::derive_seed(cfg.seed, 0xe7a1);
    spec.symbols = cfg.symbols;
    apl::EvalCurve curve = apl::eval_sequential_analogy(model, digits, spec);

    std::string curve_path = cfg.outdir + "/analogy_curve.jsonl";
    std::ofstream cf(curve_path, std::ios::binary);
    for (const auto& p : curve.points) {
      json cj;
      cj["examples_seen"] = p.examples_seen;
      cj["acc"] = p.acc;
      cj["mem_size"] = p.mem_size;
      cf << cj.dump() << "\n";
    }

    int hits = 0;
    for (bool c : curve.per_example_correct) hits += c ? 1 : 0;
    json j;
    j["mode"] = mode;
    j["k"] = k;
    j["decoder"] = decoder;
    j["accuracy"] = curve.per_example_correct.empty()
                        ? 0.0
                        : static_cast<double>(hits) / curve.per_example_correct.size();
    j["mem_size"] = curve.points.empty() ? 0 : curve.points.back().mem_size;
    j["combinations"] = 10 * symbols;
    j["curve_path"] = curve_path;
    std::cout << j.dump() << "\n";
    return kExitOk;
  } catch (const apl::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_gradcheck(bool corrupt_fixture) {
  apl::GradCheckSuite suite = apl::default_gradcheck_suite();
  if (corrupt_fixture) suite.add(apl::corrupted_gradient_fixture());
  auto reports = suite.run();
  bool all_pass = true;
  double worst = 0.0;
  for (const auto& r : reports) {
    std::cout << (r.pass ? "PASS" : "FAIL") << "  " << r.name << "  max_rel_err=" << r.max_rel_err
              << "  coords=" << r.coords_checked << "\n";
    all_pass = all_pass && r.pass;
    worst = std::max(worst, r.max_rel_err);
  }
  std::cout << (all_pass ? "OK" : "FAILED") << " " << reports.size()
            << " cases, worst rel err " << worst << "\n";
  return all_pass ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"apl: surprise-gated episodic few-shot learner"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "train from a config file");
  std::string config_path;
  train->add_option("--config", config_path, "path to key=value config")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ckpt, mode, out_path, dump_memory;
  int shots = 5, nway = 0, steps = 20, tasks = 3;
  uint64_t eval_seed = 0;
  eval->add_option("--ckpt", ckpt, "checkpoint path")->required();
  eval->add_option("--mode", mode, "kshot|sequential|continual")->required();
  eval->add_option("--shots", shots, "examples per class (kshot)");
  eval->add_option("--nway", nway, "classes per episode (default: training nway)");
  eval->add_option("--steps", steps, "episode steps (sequential)");
  eval->add_option("--tasks", tasks, "number of tasks (continual)");
  eval->add_option("--seed", eval_seed, "evaluation seed");
  eval->add_option("--out", out_path, "curve output path (sequential)");
  eval->add_option("--dump-memory", dump_memory, "write final memory as JSONL (sequential)");

  // sweep-sigma
  auto* sweep = app.add_subcommand("sweep-sigma", "threshold study on a trained checkpoint");
  std::string sweep_ckpt, sigmas_csv = "0,1.5,3.0,6.0";
  int sweep_nway = 20, sweep_points = 2000;
  uint64_t sweep_seed = 5;
  sweep->add_option("--ckpt", sweep_ckpt, "checkpoint path")->required();
  sweep->add_option("--sigmas", sigmas_csv, "comma-separated thresholds");
  sweep->add_option("--nway", sweep_nway, "classes in the sweep problem");
  sweep->add_option("--points", sweep_points, "unique data points per sigma");
  sweep->add_option("--seed", sweep_seed, "sweep seed");

  // analogy
  auto* analogy = app.add_subcommand("analogy", "train + evaluate the number-analogy task");
  std::string ana_mode = "fixed", ana_decoder = "relff", ana_outdir = "apl_analogy",
              ana_sigma = "auto", idx_images, idx_labels;
  int ana_k = 8, ana_symbols = 10, ana_eval_steps = 30;
  int64_t ana_steps = 3000;
  uint64_t ana_seed = 1;
  analogy->add_option("--mode", ana_mode, "fixed|shuffled")->required();
  analogy->add_option("--k", ana_k, "neighbors per key column");
  analogy->add_option("--decoder", ana_decoder, "relff|rwm|lstm");
  analogy->add_option("--steps", ana_steps, "training steps");
  analogy->add_option("--seed", ana_seed, "seed");
  analogy->add_option("--outdir", ana_outdir, "output directory");
  analogy->add_option("--symbols", ana_symbols, "symbol alphabet size");
  analogy->add_option("--sigma", ana_sigma, "write threshold or 'auto'");
  analogy->add_option("--eval-steps", ana_eval_steps, "sequential eval steps");
  analogy->add_option("--idx-images", idx_images, "optional IDX image file for digits");
  analogy->add_option("--idx-labels", idx_labels, "optional IDX label file for digits");

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every op");
  bool corrupt_fixture = false;
  gradcheck->add_flag("--corrupt-fixture", corrupt_fixture,
                      "include a deliberately wrong gradient (self-test)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  if (train->parsed()) return cmd_train(config_path);
  if (eval->parsed())
    return cmd_eval(ckpt, mode, shots, nway, steps, tasks, eval_seed, out_path, dump_memory);
  if (sweep->parsed())
    return cmd_sweep_sigma(sweep_ckpt, sigmas_csv, sweep_nway, sweep_points, sweep_seed);
  if (analogy->parsed())
    return cmd_analogy(ana_mode, ana_k, ana_decoder, ana_steps, ana_seed, ana_outdir, ana_symbols,
                       ana_sigma, ana_eval_steps, idx_images, idx_labels);
  if (gradcheck->parsed()) return cmd_gradcheck(corrupt_fixture);
  return kExitUsage;
}
