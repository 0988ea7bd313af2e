#include "apl/tape.hpp"

#include "apl/params.hpp"

namespace apl {

const Mat& Var::value() const {
  if (!valid()) fail("Var::value: invalid handle");
  return tape->value(*this);
}

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

void Tape::check(Var v) const {
  if (v.tape != this || v.id < 0 || static_cast<size_t>(v.id) >= nodes_.size())
    fail("Tape: Var does not belong to this tape");
}

Var Tape::constant(Mat value) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = false;
  return push(std::move(n));
}

Var Tape::leaf(Mat value) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = true;
  return push(std::move(n));
}

Var Tape::param(ParamStore& store, const std::string& name) {
  Node n;
  n.value = store.value(name);
  n.needs_grad = true;
  n.store = &store;
  n.param_name = name;
  return push(std::move(n));
}

Var Tape::node(Mat value, const std::vector<Var>& inputs, BackFn back) {
  Node n;
  n.value = std::move(value);
  for (Var in : inputs) {
    check(in);
    if (nodes_[static_cast<size_t>(in.id)].needs_grad) n.needs_grad = true;
  }
  if (n.needs_grad) n.back = std::move(back);
  return push(std::move(n));
}

void Tape::add_grad(Var v, const Mat& g) {
  check(v);
  Node& n = nodes_[static_cast<size_t>(v.id)];
  if (!n.needs_grad) return;
  if (g.rows() != n.value.rows() || g.cols() != n.value.cols())
    fail("Tape::add_grad: gradient shape " + shape_str(g) + " vs value " + shape_str(n.value));
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var loss) {
  check(loss);
  if (backward_called_) fail("Tape::backward: called twice without a new forward pass");
  const Node& ln = nodes_[static_cast<size_t>(loss.id)];
  if (ln.value.rows() != 1 || ln.value.cols() != 1)
    fail("Tape::backward: loss must be scalar, got " + shape_str(ln.value));
  backward_called_ = true;

  add_grad(loss, Mat::Ones(1, 1));
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (!n.has_grad) continue;
    if (n.back) n.back(*this, n.grad);
    if (n.store != nullptr) n.store->grad(n.param_name) += n.grad;
  }
}

const Mat& Tape::value(Var v) const {
  check(v);
  return nodes_[static_cast<size_t>(v.id)].value;
}

Mat Tape::grad(Var v) const {
  check(v);
  const Node& n = nodes_[static_cast<size_t>(v.id)];
  if (!n.has_grad) return Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

}  // namespace apl
