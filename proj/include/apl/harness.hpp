#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "apl/config.hpp"
#include "apl/model.hpp"

namespace apl {

// One training/eval step's observables.
struct StepOutcome {
  int64_t step = 0;
  double loss = 0.0;
  double acc = 0.0;
  int writes = 0;
  size_t mem_size = 0;
  double lr = 0.0;
  size_t graph_nodes = 0;  // nodes built this step, across all elements
  std::vector<bool> element_written;
  std::vector<bool> element_correct;
};

struct MetricsRecord {
  int64_t step = 0;
  int64_t episode = 0;
  std::string phase;  // train | eval
  std::string task;
  double loss = 0.0;
  double acc = 0.0;
  size_t mem_size = 0;
  int writes = 0;
  double lr = 0.0;
  double sigma = 0.0;
};

// JSONL metrics sink, one record per line, fixed key order.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path);
  void write(const MetricsRecord& r);

 private:
  std::ofstream out_;
};

// Annealed learning rate: 1e-4 down to 1e-5, multiplicative 0.9 decay
// applied every 1000 steps.
double lr_schedule(int64_t step);

// One APL step over a batch: per-element forward against the step-start
// memory snapshot, one Adam update on the batch loss, then the surprise
// gated writes (decided from pre-update probabilities). Updates and writes
// can be disabled independently for the eval protocols.
StepOutcome train_step(Model& model, MemoryStore& memory, const Batch& batch, int64_t step,
                       double lr, double sigma, bool update_params, bool enable_writes);

struct TrainResult {
  std::string checkpoint_path;
  std::string metrics_path;
  int64_t steps_run = 0;
  double final_trailing_acc = 0.0;
};

TrainResult train(const RunConfig& cfg, std::ostream* progress = nullptr);

// Fixed-context (k-shot) evaluation: memory pre-populated with shots
// examples per class, controller bypassed, parameters and memory frozen.
struct FixedContextResult {
  double accuracy = 0.0;
  size_t mem_size = 0;
  int evaluated = 0;
};
FixedContextResult eval_fixed_context(Model& model, const GlyphDataset& data, int nway, int shots,
                                      uint64_t seed);

// Sequential evaluation: writes enabled, parameter updates disabled.
struct EvalCurve {
  struct Point {
    int64_t examples_seen = 0;
    double acc = 0.0;
    size_t mem_size = 0;
    int writes = 0;
  };
  std::vector<Point> points;
  std::vector<bool> per_example_correct;
};
EvalCurve eval_sequential_classify(Model& model, const GlyphDataset& data, const EpisodeSpec& spec,
                                   MemoryStore* final_memory = nullptr);
EvalCurve eval_sequential_analogy(Model& model, const DigitSource& digits, const EpisodeSpec& spec,
                                  MemoryStore* final_memory = nullptr);

// Continual protocol: consecutive tasks of new classes, memory never reset,
// no gradient updates. Returns the mean accuracy over the last
// `tail_examples` examples of each task.
std::vector<double> eval_continual(Model& model, const GlyphDataset& data, int num_tasks,
                                   int classes_per_task, int examples_per_task, int tail_examples,
                                   uint64_t seed);

// Mean KL(first-step prediction || uniform) over fresh test episodes.
double mean_first_step_kl(Model& model, const GlyphDataset& data, int nway, int episodes,
                          uint64_t seed);

// Threshold study: frozen parameters, one long write-enabled run per sigma
// over `points` unique examples of an nway problem.
struct SigmaSweepRow {
  double sigma = 0.0;
  size_t final_mem = 0;
  double tail_acc = 0.0;  // accuracy over the last 100 examples
};
std::vector<SigmaSweepRow> run_sigma_sweep(Model& model, const std::vector<double>& sigmas,
                                           int nway, int points, uint64_t seed);

}  // namespace apl
