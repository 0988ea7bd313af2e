#pragma once

#include <cstdint>
#include <string>

#include "apl/model.hpp"

namespace apl {

// Experiment configuration. File format: flat `key = value` lines grouped
// under [sections]; unknown sections or keys are errors, not warnings.
struct RunConfig {
  // [run]
  TaskKind task = TaskKind::classify;
  DecoderKind decoder = DecoderKind::relff;
  int nway = 5;  // classify only; analogy targets are always 20-wide
  int k = 8;
  int batch = 16;
  int64_t steps = 3000;
  uint64_t seed = 1;
  std::string sigma = "auto";  // "auto" (= ln N) or a float literal
  std::string outdir = "apl_run";

  // [data]
  int classes = 60;
  int examples_per_class = 40;
  bool rotations = true;

  // [analogy]
  int symbols = 10;

  // [train]
  int episode_steps = 30;
  bool curriculum = true;
  int64_t checkpoint_every = 0;  // 0: final checkpoint only

  void validate() const;
  int num_classes() const;     // logits width
  double sigma_value() const;  // resolves "auto"
  ModelConfig model_config() const;

  std::string to_json() const;
  static RunConfig from_json(const std::string& j);
};

RunConfig parse_config_file(const std::string& path);
RunConfig parse_config_text(const std::string& text, const std::string& origin = "<config>");

}  // namespace apl
