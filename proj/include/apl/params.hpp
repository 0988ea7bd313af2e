#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "apl/common.hpp"

namespace apl {

// Named trainable arrays plus Adam state. Entries are kept in name order so
// checkpoints and gradient reductions are order-stable.
class ParamStore {
 public:
  Mat& create(const std::string& name, Mat init);

  bool has(const std::string& name) const { return entries_.count(name) > 0; }
  Mat& value(const std::string& name);
  const Mat& value(const std::string& name) const;
  Mat& grad(const std::string& name);

  std::vector<std::string> names() const;
  size_t count() const { return entries_.size(); }
  int64_t step() const { return step_; }

  void zero_grads();

  // One Adam update (beta1=0.9, beta2=0.999, eps=1e-8) over every entry.
  // Gradients are cleared afterwards and the step counter advances by one.
  void adam_step(double lr);

  // Checkpoint container: one line of JSON (names, shapes, dtype, extra
  // metadata) followed by the float32 little-endian blocks in header order.
  void save(const std::string& path, const std::string& extra_json = "") const;
  static ParamStore load(const std::string& path, std::string* extra_json = nullptr);

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

 private:
  struct Entry {
    Mat value;
    Mat grad;
    Mat m;
    Mat v;
  };

  std::map<std::string, Entry> entries_;
  int64_t step_ = 0;
};

}  // namespace apl
