#pragma once

#include <functional>
#include <string>
#include <vector>

#include "apl/common.hpp"

namespace apl {

class Tape;
class ParamStore;

// Lightweight handle into a Tape. Values are computed eagerly at node
// creation; gradients appear after Tape::backward.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

// One forward/backward graph. Nodes are appended in topological order by
// construction, so the backward sweep is a single reverse pass.
class Tape {
 public:
  using BackFn = std::function<void(Tape&, const Mat& upstream)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf that never receives a gradient (inputs, frozen memory rows).
  Var constant(Mat value);

  // Leaf that accumulates a gradient (used by tests and gradcheck).
  Var leaf(Mat value);

  // Leaf bound to a named ParamStore entry; backward() adds into the
  // store's gradient for that entry.
  Var param(ParamStore& store, const std::string& name);

  // Interior node. needs_grad is inferred from the inputs.
  Var node(Mat value, const std::vector<Var>& inputs, BackFn back);

  // Reverse sweep from a scalar loss. Errors if the loss is not 1x1 or if
  // called a second time on the same graph.
  void backward(Var loss);

  // Gradient accumulation during the backward sweep.
  void add_grad(Var v, const Mat& g);

  const Mat& value(Var v) const;
  // Gradient of a node; zero-shaped matrix if none was accumulated.
  Mat grad(Var v) const;

  size_t size() const { return nodes_.size(); }
  bool backward_called() const { return backward_called_; }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool has_grad = false;
    bool needs_grad = false;
    BackFn back;
    ParamStore* store = nullptr;
    std::string param_name;
  };

  Var push(Node n);
  void check(Var v) const;

  std::vector<Node> nodes_;
  bool backward_called_ = false;
};

}  // namespace apl
