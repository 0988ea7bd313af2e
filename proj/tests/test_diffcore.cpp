#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "apl/gradcheck.hpp"
#include "apl/ops.hpp"
#include "apl/params.hpp"
#include "apl/rng.hpp"

using namespace apl;

namespace {

Mat row(std::initializer_list<double> xs) {
  Mat m(1, static_cast<Eigen::Index>(xs.size()));
  Eigen::Index j = 0;
  for (double x : xs) m(0, j++) = x;
  return m;
}

Mat random_mat(Rng& rng, int r, int c, double lo = -2.0, double hi = 2.0) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

}  // namespace

TEST_CASE("softmax of equal logits is uniform") {
  Tape t;
  Var s = softmax(t.leaf(row({0.0, 0.0})), 1);
  CHECK(s.value()(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s.value()(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one and stay in (0,1)") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    Tape t;
    Mat x = random_mat(rng, 4, 7, -30.0, 30.0);
    Var s = softmax(t.leaf(x), 1);
    for (Eigen::Index i = 0; i < 4; ++i) {
      double sum = 0.0;
      for (Eigen::Index j = 0; j < 7; ++j) {
        double p = s.value()(i, j);
        CHECK(p > 0.0);
        CHECK(p < 1.0);
        sum += p;
      }
      CHECK(std::abs(sum - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("cross entropy of uniform logits is ln N") {
  Tape t;
  Var logits = t.leaf(Mat::Zero(1, 20));
  Var ce = cross_entropy_with_logits(logits, {7});
  CHECK(ce.value()(0, 0) == doctest::Approx(std::log(20.0)).epsilon(1e-12));
}

TEST_CASE("cross entropy clamps tiny probabilities before the log") {
  Tape t;
  Mat logits = Mat::Zero(1, 2);
  logits(0, 0) = 200.0;  // p(label=1) underflows well past the clamp
  Var ce = cross_entropy_with_logits(t.leaf(logits), {1});
  CHECK(ce.value()(0, 0) == doctest::Approx(-std::log(1e-12)).epsilon(1e-9));
  CHECK(std::isfinite(ce.value()(0, 0)));
}

TEST_CASE("layer_norm maps constant rows to zero") {
  Tape t;
  Var y = layer_norm(t.leaf(row({3.0, 3.0, 3.0})), 1e-5);
  for (Eigen::Index j = 0; j < 3; ++j) CHECK(std::abs(y.value()(0, j)) < 1e-9);
}

TEST_CASE("layer_norm output is standardized for non-degenerate rows") {
  Rng rng(12);
  Tape t;
  Mat x = random_mat(rng, 6, 32, -4.0, 4.0);
  Var y = layer_norm(t.leaf(x), 1e-5);
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    double mu = y.value().row(i).mean();
    double var = 0.0;
    for (Eigen::Index j = 0; j < y.cols(); ++j) var += std::pow(y.value()(i, j) - mu, 2);
    var /= static_cast<double>(y.cols());
    CHECK(std::abs(mu) < 1e-7);
    CHECK(std::abs(var - 1.0) < 1e-5);
  }
}

TEST_CASE("shape mismatches name the op and both shapes") {
  Tape t;
  Var a = t.leaf(Mat::Zero(2, 3));
  Var b = t.leaf(Mat::Zero(4, 5));
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("matmul"), Error);
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("2x3"), Error);
  CHECK_THROWS_AS(multiply(a, b), Error);
  CHECK_THROWS_AS(concat({a, b}, 0), Error);
}

TEST_CASE("empty axis reduction is an error") {
  Tape t;
  Var a = t.leaf(Mat::Zero(0, 3));
  CHECK_THROWS_WITH_AS(reduce_sum(a, 0), doctest::Contains("empty axis"), Error);
  CHECK_THROWS_AS(reduce_mean(a, 0), Error);
}

TEST_CASE("linear case: d(sum(w*x))/dw equals x") {
  Tape t;
  Rng rng(13);
  Mat xv = random_mat(rng, 3, 4);
  Var w = t.leaf(random_mat(rng, 3, 4));
  Var x = t.constant(xv);
  Var loss = reduce_sum(reduce_sum(multiply(w, x), 0), 1);
  t.backward(loss);
  CHECK((t.grad(w) - xv).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("parameters off the loss path get exactly zero gradient") {
  ParamStore ps;
  Rng rng(14);
  ps.create("used", random_mat(rng, 2, 2));
  ps.create("unused", random_mat(rng, 2, 2));
  Tape t;
  Var w = t.param(ps, "used");
  Var loss = reduce_sum(reduce_sum(multiply(w, w), 0), 1);
  t.backward(loss);
  CHECK(ps.grad("used").cwiseAbs().maxCoeff() > 0.0);
  CHECK(ps.grad("unused").cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("backward twice without a new forward is an error") {
  Tape t;
  Var a = t.leaf(Mat::Ones(1, 1));
  Var loss = scale(a, 2.0);
  t.backward(loss);
  CHECK_THROWS_WITH_AS(t.backward(loss), doctest::Contains("twice"), Error);
}

TEST_CASE("backward requires a scalar loss") {
  Tape t;
  Var a = t.leaf(Mat::Ones(2, 2));
  CHECK_THROWS_WITH_AS(t.backward(a), doctest::Contains("scalar"), Error);
}

TEST_CASE("finite differences validate every op") {
  GradCheckSuite suite;
  add_op_cases(suite);
  auto reports = suite.run(1e-5, 1e-4, 99);
  CHECK(reports.size() >= 18);
  for (const auto& r : reports) {
    INFO(r.name, " max_rel_err=", r.max_rel_err);
    CHECK(r.pass);
  }
}

TEST_CASE("the checker rejects a corrupted gradient") {
  GradCheckSuite suite;
  suite.add(corrupted_gradient_fixture());
  auto reports = suite.run(1e-5, 1e-4, 99);
  REQUIRE(reports.size() == 1);
  CHECK_FALSE(reports[0].pass);
}

TEST_CASE("forward and backward are deterministic") {
  auto run = [](std::vector<double>* grads) {
    Rng rng(55);
    Tape t;
    Var a = t.leaf(random_mat(rng, 5, 8));
    Var b = t.leaf(random_mat(rng, 8, 3));
    Var h = layer_norm(relu(matmul(a, b)), 1e-5);
    Var loss = cross_entropy_with_logits(h, {0, 2, 1, 0, 2});
    t.backward(loss);
    Mat g = t.grad(a);
    for (Eigen::Index i = 0; i < g.rows(); ++i)
      for (Eigen::Index j = 0; j < g.cols(); ++j) grads->push_back(g(i, j));
    grads->push_back(loss.value()(0, 0));
  };
  std::vector<double> g1, g2;
  run(&g1);
  run(&g2);
  REQUIRE(g1.size() == g2.size());
  for (size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == g2[i]);  // bit-identical
}

// ---------------------------------------------------------------------------
// Adam

TEST_CASE("adam leaves parameters untouched when gradients are zero") {
  ParamStore ps;
  Rng rng(16);
  Mat w0 = random_mat(rng, 3, 3);
  ps.create("w", w0);
  ps.adam_step(1e-3);
  CHECK((ps.value("w") - w0).cwiseAbs().maxCoeff() == 0.0);
  CHECK(ps.step() == 1);
}

TEST_CASE("first adam step with unit gradient moves by about lr") {
  ParamStore ps;
  Mat w(1, 1);
  w(0, 0) = 0.7;
  ps.create("w", w);
  ps.grad("w")(0, 0) = 1.0;
  ps.adam_step(1e-4);
  double moved = 0.7 - ps.value("w")(0, 0);
  CHECK(moved == doctest::Approx(1e-4).epsilon(1e-6));
  CHECK(ps.grad("w")(0, 0) == 0.0);  // gradients cleared by the step
}

TEST_CASE("adam rejects non-positive learning rates") {
  ParamStore ps;
  ps.create("w", Mat::Ones(1, 1));
  CHECK_THROWS_AS(ps.adam_step(0.0), Error);
  CHECK_THROWS_AS(ps.adam_step(-1.0), Error);
}

namespace {

// Scalar Adam reference, written out longhand and kept independent of
// ParamStore::adam_step.
struct ScalarAdamRef {
  double m = 0.0, v = 0.0;
  int t = 0;
  double step(double w, double g, double lr) {
    ++t;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    double mhat = m / (1.0 - std::pow(0.9, t));
    double vhat = v / (1.0 - std::pow(0.999, t));
    return w - lr * mhat / (std::sqrt(vhat) + 1e-8);
  }
};

}  // namespace

TEST_CASE("adam matches the scalar reference on a quadratic and approaches the minimum") {
  ParamStore ps;
  ps.create("w", Mat::Zero(1, 1));
  ScalarAdamRef ref;
  double ref_w = 0.0;
  double prev_dist = 3.0;
  for (int i = 0; i < 100; ++i) {
    double w = ps.value("w")(0, 0);
    double g = 2.0 * (w - 3.0);  // d/dw (w-3)^2
    ps.grad("w")(0, 0) = g;
    ps.adam_step(0.01);
    ref_w = ref.step(ref_w, g, 0.01);
    CHECK(ps.value("w")(0, 0) == doctest::Approx(ref_w).epsilon(1e-12));
    if (i >= 5) {  // monotone approach after burn-in
      double dist = std::abs(ps.value("w")(0, 0) - 3.0);
      CHECK(dist <= prev_dist + 1e-12);
      prev_dist = dist;
    }
  }
  CHECK(std::abs(ps.value("w")(0, 0) - 3.0) < 3.0);
  CHECK(ps.step() == 100);
}

// ---------------------------------------------------------------------------
// Checkpoints

TEST_CASE("checkpoint round-trips values at float32 precision") {
  ParamStore ps;
  Rng rng(17);
  ps.create("a.w", random_mat(rng, 4, 6));
  ps.create("b.w", random_mat(rng, 1, 3));
  std::string path = "ckpt_roundtrip.bin";
  ps.save(path, R"({"note":"test"})");

  std::string extra;
  ParamStore loaded = ParamStore::load(path, &extra);
  CHECK(extra.find("note") != std::string::npos);
  REQUIRE(loaded.names() == ps.names());
  for (const auto& name : ps.names()) {
    const Mat& a = ps.value(name);
    const Mat& b = loaded.value(name);
    REQUIRE(a.rows() == b.rows());
    REQUIRE(a.cols() == b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index j = 0; j < a.cols(); ++j)
        CHECK(b(i, j) == doctest::Approx(a(i, j)).epsilon(1e-6));
  }
  std::remove(path.c_str());
}

TEST_CASE("checkpoint layout: one JSON header line then little-endian f32 blocks") {
  ParamStore ps;
  Mat w(1, 2);
  w(0, 0) = 1.0;
  w(0, 1) = -2.5;
  ps.create("w", w);
  std::string path = "ckpt_layout.bin";
  ps.save(path);

  std::ifstream f(path, std::ios::binary);
  std::string header;
  std::getline(f, header);
  CHECK(header.find("\"apl-checkpoint\"") != std::string::npos);
  CHECK(header.find("\"f32\"") != std::string::npos);
  unsigned char bytes[8];
  f.read(reinterpret_cast<char*>(bytes), 8);
  REQUIRE(bool(f));
  // 1.0f little-endian = 00 00 80 3f; -2.5f = 00 00 20 c0
  CHECK(bytes[0] == 0x00);
  CHECK(bytes[1] == 0x00);
  CHECK(bytes[2] == 0x80);
  CHECK(bytes[3] == 0x3f);
  CHECK(bytes[4] == 0x00);
  CHECK(bytes[5] == 0x00);
  CHECK(bytes[6] == 0x20);
  CHECK(bytes[7] == 0xc0);
  std::remove(path.c_str());
}

TEST_CASE("loading a non-checkpoint fails cleanly") {
  std::string path = "not_a_ckpt.bin";
  {
    std::ofstream f(path);
    f << "hello world\n";
  }
  CHECK_THROWS_AS(ParamStore::load(path), Error);
  std::remove(path.c_str());
}
