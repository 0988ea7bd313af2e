#include "apl/tasks.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>

namespace apl {

TaskKind task_kind_from_string(const std::string& s) {
  if (s == "classify") return TaskKind::classify;
  if (s == "analogy-fixed") return TaskKind::analogy_fixed;
  if (s == "analogy-shuffled") return TaskKind::analogy_shuffled;
  fail("unknown task '" + s + "' (expected classify|analogy-fixed|analogy-shuffled)");
}

std::string to_string(TaskKind k) {
  switch (k) {
    case TaskKind::classify: return "classify";
    case TaskKind::analogy_fixed: return "analogy-fixed";
    case TaskKind::analogy_shuffled: return "analogy-shuffled";
  }
  return "?";
}

bool is_analogy(TaskKind k) { return k != TaskKind::classify; }

// ---------------------------------------------------------------------------
// Glyphs.

namespace {

void draw_segment(Mat& img, int r0, int c0, int r1, int c1, int thickness) {
  const int side = static_cast<int>(img.rows());
  const int n = std::max(std::abs(r1 - r0), std::abs(c1 - c0)) + 1;
  for (int t = 0; t < n; ++t) {
    double f = n == 1 ? 0.0 : static_cast<double>(t) / (n - 1);
    int r = r0 + static_cast<int>(std::lround(f * (r1 - r0)));
    int c = c0 + static_cast<int>(std::lround(f * (c1 - c0)));
    for (int dr = 0; dr < thickness; ++dr)
      for (int dc = 0; dc < thickness; ++dc) {
        int rr = r + dr;
        int cc = c + dc;
        if (rr >= 0 && rr < side && cc >= 0 && cc < side) img(rr, cc) = 1.0;
      }
  }
}

Mat gen_base_bitmap(int side, Rng& rng) {
  Mat img = Mat::Zero(side, side);
  const int margin = 4;
  const int strokes = 3 + rng.uniform_int(4);  // 3..6
  for (int s = 0; s < strokes; ++s) {
    int r0 = margin + rng.uniform_int(side - 2 * margin);
    int c0 = margin + rng.uniform_int(side - 2 * margin);
    int r1 = margin + rng.uniform_int(side - 2 * margin);
    int c1 = margin + rng.uniform_int(side - 2 * margin);
    draw_segment(img, r0, c0, r1, c1, 2);
  }
  return img;
}

Mat shift_bitmap(const Mat& img, int dr, int dc) {
  Mat out = Mat::Zero(img.rows(), img.cols());
  for (Eigen::Index r = 0; r < img.rows(); ++r)
    for (Eigen::Index c = 0; c < img.cols(); ++c) {
      Eigen::Index rr = r + dr;
      Eigen::Index cc = c + dc;
      if (rr >= 0 && rr < img.rows() && cc >= 0 && cc < img.cols()) out(rr, cc) = img(r, c);
    }
  return out;
}

Vec make_example(const Mat& base, Rng& rng) {
  int dr = rng.uniform_int(5) - 2;
  int dc = rng.uniform_int(5) - 2;
  Mat img = shift_bitmap(base, dr, dc);
  for (Eigen::Index r = 0; r < img.rows(); ++r)
    for (Eigen::Index c = 0; c < img.cols(); ++c)
      if (rng.uniform() < 0.02) img(r, c) = 1.0 - img(r, c);
  Vec flat(img.size());
  Eigen::Index n = 0;
  for (Eigen::Index r = 0; r < img.rows(); ++r)
    for (Eigen::Index c = 0; c < img.cols(); ++c) flat(n++) = img(r, c);
  return flat;
}

}  // namespace

Mat rotate90(const Mat& bitmap, int times) {
  times = ((times % 4) + 4) % 4;
  Mat out = bitmap;
  for (int t = 0; t < times; ++t) {
    Mat rot(out.cols(), out.rows());
    for (Eigen::Index r = 0; r < out.rows(); ++r)
      for (Eigen::Index c = 0; c < out.cols(); ++c) rot(out.cols() - 1 - c, r) = out(r, c);
    out = rot;
  }
  return out;
}

GlyphDataset gen_glyph_dataset(int num_base_classes, int examples_per_class, uint64_t seed,
                               bool rotations, double test_fraction) {
  if (num_base_classes < 2) fail("gen_glyph_dataset: need at least 2 classes");
  GlyphDataset ds;
  Rng root(seed);

  const std::vector<int> rots = rotations ? std::vector<int>{0, 90, 180, 270} : std::vector<int>{0};
  for (int b = 0; b < num_base_classes; ++b) {
    Rng crng = root.fork(static_cast<uint64_t>(b));
    Mat base = gen_base_bitmap(ds.image_side, crng);
    for (int rot : rots) {
      GlyphClass gc;
      gc.base_id = b;
      gc.rotation_deg = rot;
      gc.base = rotate90(base, rot / 90);
      ds.classes.push_back(std::move(gc));
    }
  }

  ds.examples.resize(ds.classes.size());
  for (size_t ci = 0; ci < ds.classes.size(); ++ci) {
    ds.examples[ci].reserve(static_cast<size_t>(examples_per_class));
    for (int i = 0; i < examples_per_class; ++i) {
      Rng erng = root.fork(0x10000ull + ci * 0x10000ull + static_cast<uint64_t>(i));
      ds.examples[ci].push_back(make_example(ds.classes[ci].base, erng));
    }
  }

  // Split by base class so a glyph and its rotations stay on one side.
  std::vector<int> bases(static_cast<size_t>(num_base_classes));
  for (int b = 0; b < num_base_classes; ++b) bases[static_cast<size_t>(b)] = b;
  Rng srng = root.fork(0xabcdefull);
  srng.shuffle(bases);
  int num_test_bases = std::max(1, static_cast<int>(test_fraction * num_base_classes));
  std::vector<bool> is_test(static_cast<size_t>(num_base_classes), false);
  for (int i = 0; i < num_test_bases; ++i) is_test[static_cast<size_t>(bases[static_cast<size_t>(i)])] = true;
  for (size_t ci = 0; ci < ds.classes.size(); ++ci) {
    if (is_test[static_cast<size_t>(ds.classes[ci].base_id)])
      ds.test_classes.push_back(static_cast<int>(ci));
    else
      ds.train_classes.push_back(static_cast<int>(ci));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// IDX.

namespace {

uint32_t read_be_u32(std::ifstream& f, const std::string& path) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  if (!f) fail("load_idx: truncated header in '" + path + "'");
  return (static_cast<uint32_t>(b[0]) << 24) | (static_cast<uint32_t>(b[1]) << 16) |
         (static_cast<uint32_t>(b[2]) << 8) | static_cast<uint32_t>(b[3]);
}

}  // namespace

IdxDataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream fi(images_path, std::ios::binary);
  if (!fi) fail("load_idx: cannot open '" + images_path + "'");
  uint32_t magic = read_be_u32(fi, images_path);
  if (magic != 0x00000803u)
    fail("load_idx: '" + images_path + "' has magic " + std::to_string(magic) +
         ", expected 2051 (0x00000803)");
  uint32_t count = read_be_u32(fi, images_path);
  uint32_t rows = read_be_u32(fi, images_path);
  uint32_t cols = read_be_u32(fi, images_path);

  std::ifstream fl(labels_path, std::ios::binary);
  if (!fl) fail("load_idx: cannot open '" + labels_path + "'");
  uint32_t lmagic = read_be_u32(fl, labels_path);
  if (lmagic != 0x00000801u)
    fail("load_idx: '" + labels_path + "' has magic " + std::to_string(lmagic) +
         ", expected 2049 (0x00000801)");
  uint32_t lcount = read_be_u32(fl, labels_path);
  if (count != lcount)
    fail("load_idx: " + std::to_string(count) + " images but " + std::to_string(lcount) +
         " labels");

  IdxDataset ds;
  ds.rows = static_cast<int>(rows);
  ds.cols = static_cast<int>(cols);
  const size_t pixels = static_cast<size_t>(rows) * cols;
  std::vector<unsigned char> buf(pixels);
  ds.images.reserve(count);
  ds.labels.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    fi.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(pixels));
    if (!fi) fail("load_idx: truncated image data in '" + images_path + "'");
    Vec v(static_cast<Eigen::Index>(pixels));
    for (size_t p = 0; p < pixels; ++p) v(static_cast<Eigen::Index>(p)) = buf[p] / 255.0;
    ds.images.push_back(std::move(v));
    unsigned char lab;
    fl.read(reinterpret_cast<char*>(&lab), 1);
    if (!fl) fail("load_idx: truncated label data in '" + labels_path + "'");
    ds.labels.push_back(static_cast<int>(lab));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Digit sources.

DigitSource digit_source_from_glyphs(int examples_per_class, uint64_t seed) {
  GlyphDataset glyphs = gen_glyph_dataset(10, examples_per_class, seed, /*rotations=*/false,
                                          /*test_fraction=*/0.25);
  DigitSource src;
  src.image_dim = glyphs.image_side * glyphs.image_side;
  src.train_pool.resize(10);
  src.eval_pool.resize(10);
  for (int d = 0; d < 10; ++d) {
    const auto& ex = glyphs.examples[static_cast<size_t>(d)];
    size_t half = ex.size() / 2;
    for (size_t i = 0; i < ex.size(); ++i)
      (i < half ? src.train_pool : src.eval_pool)[static_cast<size_t>(d)].push_back(ex[i]);
  }
  return src;
}

DigitSource digit_source_from_idx(const IdxDataset& data) {
  DigitSource src;
  if (data.images.empty()) fail("digit_source_from_idx: empty dataset");
  src.image_dim = static_cast<int>(data.images[0].size());
  src.train_pool.resize(10);
  src.eval_pool.resize(10);
  for (size_t i = 0; i < data.images.size(); ++i) {
    int d = data.labels[i];
    if (d < 0 || d > 9) fail("digit_source_from_idx: label " + std::to_string(d) + " not a digit");
    // alternate examples between pools
    auto& pool = (i % 2 == 0) ? src.train_pool : src.eval_pool;
    pool[static_cast<size_t>(d)].push_back(data.images[i]);
  }
  return src;
}

// ---------------------------------------------------------------------------
// Episodes.

ClassificationEpisode::ClassificationEpisode(const GlyphDataset& data, const EpisodeSpec& spec,
                                             bool use_train_split)
    : data_(data), spec_(spec), rng_(Rng(spec.seed).fork(1)) {
  const auto& split = use_train_split ? data.train_classes : data.test_classes;
  if (spec.nway > static_cast<int>(split.size()))
    fail("make_classification_episode: " + std::to_string(spec.nway) + "-way but only " +
         std::to_string(split.size()) + " classes in split");
  std::vector<int> pool = split;
  Rng pick = Rng(spec.seed).fork(2);
  pick.shuffle(pool);
  chosen_.assign(pool.begin(), pool.begin() + spec.nway);
  label_perm_ = pick.permutation(spec.nway);

  for (int pos = 0; pos < spec.nway; ++pos) {
    int cls = chosen_[static_cast<size_t>(pos)];
    for (size_t i = 0; i < data.examples[static_cast<size_t>(cls)].size(); ++i)
      pool_.emplace_back(pos, static_cast<int>(i));
  }
  rng_.shuffle(pool_);
}

Batch ClassificationEpisode::next() {
  Batch batch;
  batch.reserve(static_cast<size_t>(spec_.batch));
  for (int i = 0; i < spec_.batch; ++i) {
    if (cursor_ >= pool_.size()) {  // pool exhausted: reshuffle and continue
      rng_.shuffle(pool_);
      cursor_ = 0;
    }
    auto [pos, ex] = pool_[cursor_++];
    Example e;
    e.x = data_.examples[static_cast<size_t>(chosen_[static_cast<size_t>(pos)])]
                        [static_cast<size_t>(ex)];
    e.label = label_perm_[static_cast<size_t>(pos)];
    batch.push_back(std::move(e));
  }
  return batch;
}

AnalogyEpisode::AnalogyEpisode(const DigitSource& digits, const EpisodeSpec& spec,
                               bool use_train_pool)
    : digits_(digits), spec_(spec), train_pool_(use_train_pool), rng_(Rng(spec.seed).fork(3)) {
  if (spec.symbols < 1 || spec.symbols > 11)
    fail("make_analogy_episode: symbol count " + std::to_string(spec.symbols) +
         " outside [1,11]");
  std::vector<int> values;
  for (int v = -5; v <= 5; ++v) values.push_back(v);
  Rng vrng = Rng(spec.seed).fork(4);
  vrng.shuffle(values);
  symbol_values_.assign(values.begin(), values.begin() + spec.symbols);

  digit_values_.resize(10);
  for (int d = 0; d < 10; ++d) digit_values_[static_cast<size_t>(d)] = d;
  if (spec.task == TaskKind::analogy_shuffled) {
    Rng prng = Rng(spec.seed).fork(5);
    digit_values_ = prng.permutation(10);
  }

  const auto& pools = train_pool_ ? digits.train_pool : digits.eval_pool;
  order_.resize(10);
  cursor_.assign(10, 0);
  for (int d = 0; d < 10; ++d) {
    if (pools[static_cast<size_t>(d)].empty())
      fail("make_analogy_episode: digit " + std::to_string(d) + " has no examples");
    order_[static_cast<size_t>(d)].resize(pools[static_cast<size_t>(d)].size());
    for (size_t i = 0; i < order_[static_cast<size_t>(d)].size(); ++i)
      order_[static_cast<size_t>(d)][i] = static_cast<int>(i);
    rng_.shuffle(order_[static_cast<size_t>(d)]);
  }
}

const Vec& AnalogyEpisode::draw_digit_image(int digit) {
  const auto& pool = (train_pool_ ? digits_.train_pool : digits_.eval_pool)[static_cast<size_t>(digit)];
  auto& ord = order_[static_cast<size_t>(digit)];
  auto& cur = cursor_[static_cast<size_t>(digit)];
  if (cur >= ord.size()) {
    rng_.shuffle(ord);
    cur = 0;
  }
  return pool[static_cast<size_t>(ord[cur++])];
}

Batch AnalogyEpisode::next() {
  Batch batch;
  batch.reserve(static_cast<size_t>(spec_.batch));
  for (int i = 0; i < spec_.batch; ++i) {
    int digit = 0;
    int symbol = 0;
    int target = -1;
    // Rejection guard; with values in [-5,5] and digits in [0,9] every pair
    // is valid, so this accepts on the first draw.
    for (int tries = 0; tries < 1000; ++tries) {
      digit = rng_.uniform_int(10);
      symbol = rng_.uniform_int(spec_.symbols);
      int sum = digit_values_[static_cast<size_t>(digit)] +
                symbol_values_[static_cast<size_t>(symbol)];
      if (sum >= -5 && sum <= 14) {
        target = sum + 5;
        break;
      }
    }
    if (target < 0) fail("make_analogy_episode: no valid (digit, symbol) pair found");
    Example e;
    e.x = draw_digit_image(digit);
    e.symbol = symbol;
    e.label = target;
    batch.push_back(std::move(e));
  }
  return batch;
}

}  // namespace apl
