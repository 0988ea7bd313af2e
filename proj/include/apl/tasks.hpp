#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "apl/common.hpp"
#include "apl/rng.hpp"

namespace apl {

enum class TaskKind { classify, analogy_fixed, analogy_shuffled };

TaskKind task_kind_from_string(const std::string& s);
std::string to_string(TaskKind k);
bool is_analogy(TaskKind k);

// One observation: flattened image, optional symbol index, target label.
struct Example {
  Vec x;
  int symbol = -1;
  int label = 0;
};
using Batch = std::vector<Example>;

// ---------------------------------------------------------------------------
// Synthetic glyphs: random stroke bitmaps with rotation pseudoclasses.

struct GlyphClass {
  int base_id = 0;
  int rotation_deg = 0;
  Mat base;  // image_side x image_side, entries in {0,1}
};

struct GlyphDataset {
  int image_side = 28;
  std::vector<GlyphClass> classes;            // pseudoclasses
  std::vector<std::vector<Vec>> examples;     // [class][i], flattened
  std::vector<int> train_classes;             // disjoint from test_classes
  std::vector<int> test_classes;
};

// Per class: a stroke bitmap from the class RNG; per example: +-2 px
// translation jitter and 2% pixel-flip noise. Rotated copies (90/180/270)
// are distinct pseudoclasses; a base class and its rotations always land on
// the same side of the train/test split.
GlyphDataset gen_glyph_dataset(int num_base_classes, int examples_per_class, uint64_t seed,
                               bool rotations = true, double test_fraction = 0.25);

// Counterclockwise rotation by times x 90 degrees.
Mat rotate90(const Mat& bitmap, int times);

// ---------------------------------------------------------------------------
// IDX (MNIST-style) binary files.

struct IdxDataset {
  std::vector<Vec> images;  // pixels scaled to [0,1]
  std::vector<int> labels;
  int rows = 0;
  int cols = 0;
};

IdxDataset load_idx(const std::string& images_path, const std::string& labels_path);

// ---------------------------------------------------------------------------
// Digit pool for the analogy task: 10 classes with train/eval example halves.

struct DigitSource {
  std::vector<std::vector<Vec>> train_pool;  // [digit][i]
  std::vector<std::vector<Vec>> eval_pool;
  int image_dim = 28 * 28;
};

DigitSource digit_source_from_glyphs(int examples_per_class, uint64_t seed);
DigitSource digit_source_from_idx(const IdxDataset& data);

// ---------------------------------------------------------------------------
// Episodes.

struct EpisodeSpec {
  TaskKind task = TaskKind::classify;
  int nway = 5;
  int batch = 16;
  int steps = 30;
  uint64_t seed = 0;
  int symbols = 10;  // analogy alphabet size
};

// Deterministic stream of batches for one classification episode. Classes
// come from the requested split; labels are a seeded permutation of [0, N);
// examples are drawn without replacement while available.
class ClassificationEpisode {
 public:
  ClassificationEpisode(const GlyphDataset& data, const EpisodeSpec& spec, bool use_train_split);
  Batch next();
  const std::vector<int>& chosen_classes() const { return chosen_; }
  const std::vector<int>& label_perm() const { return label_perm_; }

 private:
  const GlyphDataset& data_;
  EpisodeSpec spec_;
  std::vector<int> chosen_;
  std::vector<int> label_perm_;
  std::vector<std::pair<int, int>> pool_;  // (class position, example index)
  size_t cursor_ = 0;
  Rng rng_;
};

// Number-analogy episode: predict pi(X) + S(symbol) + 5 in [0, 20). Symbol
// values are drawn without replacement from [-5, 5]; shuffled mode also
// permutes the digit values. Sums outside the target range are rejected
// (cannot occur with these maps, kept as a guard).
class AnalogyEpisode {
 public:
  AnalogyEpisode(const DigitSource& digits, const EpisodeSpec& spec, bool use_train_pool);
  Batch next();
  const std::vector<int>& symbol_values() const { return symbol_values_; }
  const std::vector<int>& digit_values() const { return digit_values_; }

  static constexpr int kNumTargets = 20;

 private:
  const Vec& draw_digit_image(int digit);

  const DigitSource& digits_;
  EpisodeSpec spec_;
  bool train_pool_;
  std::vector<int> symbol_values_;
  std::vector<int> digit_values_;
  std::vector<std::vector<int>> order_;  // per-digit shuffled example indices
  std::vector<size_t> cursor_;
  Rng rng_;
};

}  // namespace apl
