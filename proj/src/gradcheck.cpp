#include "apl/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "apl/ops.hpp"
#include "apl/rng.hpp"

namespace apl {

double grad_rel_err(double analytic, double numeric) {
  // Below the floor the central-difference quotient is dominated by
  // cancellation noise (ulp(loss)/2h ~ 1e-11 .. 1e-9 here), so such pairs
  // carry no signal about the backward rule.
  double denom = std::max(std::abs(analytic), std::abs(numeric));
  if (denom < 1e-4) return 0.0;
  return std::abs(analytic - numeric) / denom;
}

namespace {

double eval_loss(const GradCheckCase& c, const std::vector<Mat>& inputs) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(inputs.size());
  for (const Mat& m : inputs) leaves.push_back(tape.leaf(m));
  Var loss = c.build(tape, leaves);
  return loss.value()(0, 0);
}

// Deterministic subset of [0, n) of size <= budget.
std::vector<Eigen::Index> pick_coords(Eigen::Index n, int budget, Rng& rng) {
  std::vector<Eigen::Index> all(static_cast<size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) all[static_cast<size_t>(i)] = i;
  if (budget < 0 || n <= budget) return all;
  rng.shuffle(all);
  all.resize(static_cast<size_t>(budget));
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace

std::vector<GradCheckReport> GradCheckSuite::run(double h, double tol, uint64_t seed) const {
  std::vector<GradCheckReport> out;
  for (const GradCheckCase& c : cases_) {
    GradCheckReport rep;
    rep.name = c.name;

    // Analytic pass.
    Tape tape;
    std::vector<Var> leaves;
    for (const Mat& m : c.inputs) leaves.push_back(tape.leaf(m));
    if (c.params) c.params->zero_grads();
    Var loss = c.build(tape, leaves);
    tape.backward(loss);
    std::vector<Mat> leaf_grads;
    for (Var v : leaves) leaf_grads.push_back(tape.grad(v));

    Rng rng(seed ^ std::hash<std::string>{}(c.name));

    // Leaf coordinates.
    std::vector<Mat> work = c.inputs;
    for (size_t li = 0; li < work.size(); ++li) {
      Mat& m = work[li];
      for (Eigen::Index idx : pick_coords(m.size(), c.coord_budget, rng)) {
        Eigen::Index r = idx / m.cols();
        Eigen::Index cc = idx % m.cols();
        double orig = m(r, cc);
        m(r, cc) = orig + h;
        double fp = eval_loss(c, work);
        m(r, cc) = orig - h;
        double fm = eval_loss(c, work);
        m(r, cc) = orig;
        double numeric = (fp - fm) / (2.0 * h);
        double analytic = leaf_grads[li](r, cc);
        rep.max_rel_err = std::max(rep.max_rel_err, grad_rel_err(analytic, numeric));
        rep.coords_checked++;
      }
    }

    // Parameter coordinates.
    if (c.params) {
      for (const std::string& name : c.params->names()) {
        Mat analytic_grad = c.params->grad(name);
        Mat& pv = c.params->value(name);
        for (Eigen::Index idx : pick_coords(pv.size(), c.coord_budget, rng)) {
          Eigen::Index r = idx / pv.cols();
          Eigen::Index cc = idx % pv.cols();
          double orig = pv(r, cc);
          pv(r, cc) = orig + h;
          double fp = eval_loss(c, c.inputs);
          pv(r, cc) = orig - h;
          double fm = eval_loss(c, c.inputs);
          pv(r, cc) = orig;
          double numeric = (fp - fm) / (2.0 * h);
          rep.max_rel_err = std::max(rep.max_rel_err, grad_rel_err(analytic_grad(r, cc), numeric));
          rep.coords_checked++;
        }
      }
      c.params->zero_grads();
    }

    rep.pass = rep.max_rel_err < tol;
    out.push_back(std::move(rep));
  }
  return out;
}

namespace {

// Inputs bounded away from zero so relu/abs kinks never sit within h of a
// sample point.
Mat rand_signed(Rng& rng, int rows, int cols, double lo = 0.1, double hi = 1.5) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      double mag = rng.uniform(lo, hi);
      m(i, j) = rng.uniform() < 0.5 ? -mag : mag;
    }
  return m;
}

// Reduce an arbitrary output to a scalar that is sensitive to every entry.
Var weighted_sum(Tape& t, Var x, Rng& rng) {
  Mat w(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(0.5, 1.5);
  Var ws = t.constant(w);
  return reduce_sum(reduce_sum(multiply(x, ws), 0), 1);
}

}  // namespace

void add_op_cases(GradCheckSuite& suite, uint64_t seed) {
  Rng rng(seed);

  auto simple = [&](const std::string& name, std::vector<Mat> inputs,
                    std::function<Var(Tape&, const std::vector<Var>&)> op) {
    GradCheckCase c;
    c.name = name;
    c.inputs = std::move(inputs);
    Rng wrng = rng.fork(std::hash<std::string>{}(name));
    c.build = [op, wrng](Tape& t, const std::vector<Var>& ls) mutable {
      Rng local = wrng;
      return weighted_sum(t, op(t, ls), local);
    };
    suite.add(std::move(c));
  };

  simple("matmul", {rand_signed(rng, 3, 4), rand_signed(rng, 4, 5)},
         [](Tape&, const std::vector<Var>& ls) { return matmul(ls[0], ls[1]); });

  simple("add", {rand_signed(rng, 3, 4), rand_signed(rng, 3, 4), rand_signed(rng, 1, 4)},
         [](Tape&, const std::vector<Var>& ls) { return add(add(ls[0], ls[1]), ls[2]); });

  simple("multiply", {rand_signed(rng, 3, 4), rand_signed(rng, 3, 4)},
         [](Tape&, const std::vector<Var>& ls) { return multiply(ls[0], ls[1]); });

  simple("scale", {rand_signed(rng, 3, 4)},
         [](Tape&, const std::vector<Var>& ls) { return scale(ls[0], -2.5); });

  simple("relu", {rand_signed(rng, 4, 5)},
         [](Tape&, const std::vector<Var>& ls) { return relu(ls[0]); });

  simple("sigmoid", {rand_signed(rng, 4, 5)},
         [](Tape&, const std::vector<Var>& ls) { return sigmoid(ls[0]); });

  simple("tanh", {rand_signed(rng, 4, 5)},
         [](Tape&, const std::vector<Var>& ls) { return tanh(ls[0]); });

  simple("softmax", {rand_signed(rng, 4, 5)}, [](Tape&, const std::vector<Var>& ls) {
    return concat({softmax(ls[0], 1), softmax(ls[0], 0)}, 1);
  });

  simple("layer_norm", {rand_signed(rng, 4, 6)},
         [](Tape&, const std::vector<Var>& ls) { return layer_norm(ls[0], 1e-5); });

  simple("concat", {rand_signed(rng, 2, 4), rand_signed(rng, 3, 4), rand_signed(rng, 5, 2)},
         [](Tape&, const std::vector<Var>& ls) {
           return concat({concat({ls[0], ls[1]}, 0), ls[2]}, 1);
         });

  simple("slice", {rand_signed(rng, 5, 6)},
         [](Tape&, const std::vector<Var>& ls) { return slice(ls[0], 1, 2, 3, 3); });

  simple("transpose", {rand_signed(rng, 3, 5)},
         [](Tape&, const std::vector<Var>& ls) { return transpose(ls[0]); });

  simple("tile_rows", {rand_signed(rng, 1, 5)},
         [](Tape&, const std::vector<Var>& ls) { return tile_rows(ls[0], 4); });

  simple("embedding_lookup", {rand_signed(rng, 6, 4)},
         [](Tape&, const std::vector<Var>& ls) {
           return embedding_lookup(ls[0], {2, 0, 5, 2});
         });

  simple("reduce_sum", {rand_signed(rng, 4, 5)}, [](Tape&, const std::vector<Var>& ls) {
    return concat({reduce_sum(ls[0], 0), transpose(reduce_sum(ls[0], 1))}, 1);
  });

  simple("reduce_mean", {rand_signed(rng, 4, 5)}, [](Tape&, const std::vector<Var>& ls) {
    return concat({reduce_mean(ls[0], 0), transpose(reduce_mean(ls[0], 1))}, 1);
  });

  simple("scaled_dot_product_attention",
         {rand_signed(rng, 3, 4), rand_signed(rng, 5, 4), rand_signed(rng, 5, 6)},
         [](Tape&, const std::vector<Var>& ls) {
           return scaled_dot_product_attention(ls[0], ls[1], ls[2]);
         });

  {
    GradCheckCase c;
    c.name = "cross_entropy_with_logits";
    c.inputs = {rand_signed(rng, 4, 6)};
    c.build = [](Tape&, const std::vector<Var>& ls) {
      return cross_entropy_with_logits(ls[0], {1, 0, 5, 3});
    };
    suite.add(std::move(c));
  }
}

GradCheckCase corrupted_gradient_fixture() {
  GradCheckCase c;
  c.name = "corrupted_fixture";
  Rng rng(3);
  c.inputs = {rand_signed(rng, 3, 3)};
  c.build = [](Tape& t, const std::vector<Var>& ls) {
    Var a = ls[0];
    // Forward squares the input; backward deliberately uses the wrong factor.
    Var bad = t.node(Mat(a.value().cwiseProduct(a.value())), {a}, [a](Tape& tp, const Mat& g) {
      tp.add_grad(a, g.cwiseProduct(tp.value(a)) * 3.0);
    });
    Rng wrng(4);
    return weighted_sum(t, bad, wrng);
  };
  return c;
}

}  // namespace apl
