#include "apl/ops.hpp"

#include <cmath>

namespace apl {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) fail(msg);
}

// Sequential column sums, fixed order (rows outer, columns inner).
Mat col_sums(const Mat& g) {
  Mat out = Mat::Zero(1, g.cols());
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    for (Eigen::Index j = 0; j < g.cols(); ++j) out(0, j) += g(i, j);
  return out;
}

Mat row_sums(const Mat& g) {
  Mat out = Mat::Zero(g.rows(), 1);
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < g.cols(); ++j) s += g(i, j);
    out(i, 0) = s;
  }
  return out;
}

}  // namespace

Var matmul(Var a, Var b) {
  const Mat& A = a.value();
  const Mat& B = b.value();
  require(A.cols() == B.rows(),
          "matmul: shape mismatch " + shape_str(A) + " * " + shape_str(B));
  Mat out = A * B;
  return a.tape->node(std::move(out), {a, b}, [a, b](Tape& t, const Mat& g) {
    t.add_grad(a, g * t.value(b).transpose());
    t.add_grad(b, t.value(a).transpose() * g);
  });
}

Var add(Var a, Var b) {
  const Mat& A = a.value();
  const Mat& B = b.value();
  if (A.rows() == B.rows() && A.cols() == B.cols()) {
    return a.tape->node(A + B, {a, b}, [a, b](Tape& t, const Mat& g) {
      t.add_grad(a, g);
      t.add_grad(b, g);
    });
  }
  if (B.rows() == 1 && B.cols() == A.cols()) {
    Mat out = A;
    out.rowwise() += B.row(0);
    return a.tape->node(std::move(out), {a, b}, [a, b](Tape& t, const Mat& g) {
      t.add_grad(a, g);
      t.add_grad(b, col_sums(g));
    });
  }
  if (B.rows() == 1 && B.cols() == 1) {
    Mat out = A.array() + B(0, 0);
    return a.tape->node(std::move(out), {a, b}, [a, b](Tape& t, const Mat& g) {
      t.add_grad(a, g);
      Mat s(1, 1);
      s(0, 0) = col_sums(g).sum();
      t.add_grad(b, s);
    });
  }
  fail("add: shape mismatch " + shape_str(A) + " + " + shape_str(B));
}

Var multiply(Var a, Var b) {
  const Mat& A = a.value();
  const Mat& B = b.value();
  require(A.rows() == B.rows() && A.cols() == B.cols(),
          "multiply: shape mismatch " + shape_str(A) + " vs " + shape_str(B));
  return a.tape->node(A.cwiseProduct(B), {a, b}, [a, b](Tape& t, const Mat& g) {
    t.add_grad(a, g.cwiseProduct(t.value(b)));
    t.add_grad(b, g.cwiseProduct(t.value(a)));
  });
}

Var scale(Var a, double c) {
  return a.tape->node(a.value() * c, {a}, [a, c](Tape& t, const Mat& g) {
    t.add_grad(a, g * c);
  });
}

Var relu(Var a) {
  const Mat& A = a.value();
  return a.tape->node(A.cwiseMax(0.0), {a}, [a](Tape& t, const Mat& g) {
    const Mat& x = t.value(a);
    t.add_grad(a, (x.array() > 0.0).select(g, Mat::Zero(g.rows(), g.cols())));
  });
}

Var sigmoid(Var a) {
  Mat s = a.value().unaryExpr([](double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  });
  return a.tape->node(s, {a}, [a, s](Tape& t, const Mat& g) {
    t.add_grad(a, g.cwiseProduct(s.cwiseProduct(Mat::Ones(s.rows(), s.cols()) - s)));
  });
}

Var tanh(Var a) {
  Mat v = a.value().array().tanh();
  return a.tape->node(v, {a}, [a, v](Tape& t, const Mat& g) {
    t.add_grad(a, g.cwiseProduct(Mat(Mat::Ones(v.rows(), v.cols()) - v.cwiseProduct(v))));
  });
}

Var softmax(Var a, int axis) {
  require(axis == 0 || axis == 1, "softmax: axis must be 0 or 1");
  const Mat& A = a.value();
  require(A.rows() > 0 && A.cols() > 0, "softmax: empty input " + shape_str(A));
  Mat p(A.rows(), A.cols());
  if (axis == 1) {
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
      double mx = A.row(i).maxCoeff();
      double denom = 0.0;
      for (Eigen::Index j = 0; j < A.cols(); ++j) {
        p(i, j) = std::exp(A(i, j) - mx);
        denom += p(i, j);
      }
      p.row(i) /= denom;
    }
  } else {
    for (Eigen::Index j = 0; j < A.cols(); ++j) {
      double mx = A.col(j).maxCoeff();
      double denom = 0.0;
      for (Eigen::Index i = 0; i < A.rows(); ++i) {
        p(i, j) = std::exp(A(i, j) - mx);
        denom += p(i, j);
      }
      p.col(j) /= denom;
    }
  }
  return a.tape->node(p, {a}, [a, p, axis](Tape& t, const Mat& g) {
    Mat dx(p.rows(), p.cols());
    if (axis == 1) {
      for (Eigen::Index i = 0; i < p.rows(); ++i) {
        double dot = 0.0;
        for (Eigen::Index j = 0; j < p.cols(); ++j) dot += g(i, j) * p(i, j);
        for (Eigen::Index j = 0; j < p.cols(); ++j) dx(i, j) = p(i, j) * (g(i, j) - dot);
      }
    } else {
      for (Eigen::Index j = 0; j < p.cols(); ++j) {
        double dot = 0.0;
        for (Eigen::Index i = 0; i < p.rows(); ++i) dot += g(i, j) * p(i, j);
        for (Eigen::Index i = 0; i < p.rows(); ++i) dx(i, j) = p(i, j) * (g(i, j) - dot);
      }
    }
    t.add_grad(a, dx);
  });
}

Var layer_norm(Var a, double eps) {
  require(eps > 0.0, "layer_norm: eps must be positive");
  const Mat& A = a.value();
  require(A.cols() > 0, "layer_norm: empty rows " + shape_str(A));
  const double n = static_cast<double>(A.cols());
  Mat y(A.rows(), A.cols());
  Vec inv(A.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    double mu = 0.0;
    for (Eigen::Index j = 0; j < A.cols(); ++j) mu += A(i, j);
    mu /= n;
    double var = 0.0;
    for (Eigen::Index j = 0; j < A.cols(); ++j) {
      double d = A(i, j) - mu;
      var += d * d;
    }
    var /= n;
    inv(i) = 1.0 / std::sqrt(var + eps);
    for (Eigen::Index j = 0; j < A.cols(); ++j) y(i, j) = (A(i, j) - mu) * inv(i);
  }
  return a.tape->node(y, {a}, [a, y, inv](Tape& t, const Mat& g) {
    const double n = static_cast<double>(y.cols());
    Mat dx(y.rows(), y.cols());
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      double gsum = 0.0;
      double gysum = 0.0;
      for (Eigen::Index j = 0; j < y.cols(); ++j) {
        gsum += g(i, j);
        gysum += g(i, j) * y(i, j);
      }
      for (Eigen::Index j = 0; j < y.cols(); ++j)
        dx(i, j) = inv(i) * (g(i, j) - gsum / n - y(i, j) * gysum / n);
    }
    t.add_grad(a, dx);
  });
}

Var concat(const std::vector<Var>& xs, int axis) {
  require(!xs.empty(), "concat: no inputs");
  require(axis == 0 || axis == 1, "concat: axis must be 0 or 1");
  Tape* tape = xs[0].tape;
  Eigen::Index rows = xs[0].value().rows();
  Eigen::Index cols = xs[0].value().cols();
  for (size_t i = 1; i < xs.size(); ++i) {
    const Mat& m = xs[i].value();
    if (axis == 0) {
      require(m.cols() == cols, "concat: column mismatch " + shape_str(m) + " vs " +
                                    shape_str(xs[0].value()));
      rows += m.rows();
    } else {
      require(m.rows() == rows, "concat: row mismatch " + shape_str(m) + " vs " +
                                    shape_str(xs[0].value()));
      cols += m.cols();
    }
  }
  Mat out(rows, cols);
  Eigen::Index off = 0;
  for (const Var& x : xs) {
    const Mat& m = x.value();
    if (axis == 0) {
      out.middleRows(off, m.rows()) = m;
      off += m.rows();
    } else {
      out.middleCols(off, m.cols()) = m;
      off += m.cols();
    }
  }
  std::vector<Var> inputs = xs;
  return tape->node(std::move(out), inputs, [inputs, axis](Tape& t, const Mat& g) {
    Eigen::Index off = 0;
    for (const Var& x : inputs) {
      const Mat& m = t.value(x);
      if (axis == 0) {
        t.add_grad(x, g.middleRows(off, m.rows()));
        off += m.rows();
      } else {
        t.add_grad(x, g.middleCols(off, m.cols()));
        off += m.cols();
      }
    }
  });
}

Var slice(Var a, int r0, int c0, int rows, int cols) {
  const Mat& A = a.value();
  require(r0 >= 0 && c0 >= 0 && rows > 0 && cols > 0 && r0 + rows <= A.rows() &&
              c0 + cols <= A.cols(),
          "slice: block [" + std::to_string(r0) + "," + std::to_string(c0) + "," +
              std::to_string(rows) + "," + std::to_string(cols) + "] out of " + shape_str(A));
  Mat out = A.block(r0, c0, rows, cols);
  return a.tape->node(std::move(out), {a}, [a, r0, c0, rows, cols](Tape& t, const Mat& g) {
    const Mat& A = t.value(a);
    Mat full = Mat::Zero(A.rows(), A.cols());
    full.block(r0, c0, rows, cols) = g;
    t.add_grad(a, full);
  });
}

Var transpose(Var a) {
  return a.tape->node(a.value().transpose(), {a}, [a](Tape& t, const Mat& g) {
    t.add_grad(a, g.transpose());
  });
}

Var tile_rows(Var a, int m) {
  const Mat& A = a.value();
  require(A.rows() == 1, "tile_rows: expected 1xN input, got " + shape_str(A));
  require(m >= 1, "tile_rows: m must be positive");
  Mat out(m, A.cols());
  for (int i = 0; i < m; ++i) out.row(i) = A.row(0);
  return a.tape->node(std::move(out), {a}, [a](Tape& t, const Mat& g) {
    t.add_grad(a, col_sums(g));
  });
}

Var embedding_lookup(Var table, const std::vector<int>& indices) {
  const Mat& T = table.value();
  require(!indices.empty(), "embedding_lookup: no indices");
  for (int ix : indices)
    require(ix >= 0 && ix < T.rows(), "embedding_lookup: index " + std::to_string(ix) +
                                          " out of table " + shape_str(T));
  Mat out(static_cast<Eigen::Index>(indices.size()), T.cols());
  for (size_t i = 0; i < indices.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = T.row(indices[i]);
  return table.tape->node(std::move(out), {table}, [table, indices](Tape& t, const Mat& g) {
    const Mat& T = t.value(table);
    Mat dT = Mat::Zero(T.rows(), T.cols());
    for (size_t i = 0; i < indices.size(); ++i)
      dT.row(indices[i]) += g.row(static_cast<Eigen::Index>(i));
    t.add_grad(table, dT);
  });
}

Var reduce_sum(Var a, int axis) {
  require(axis == 0 || axis == 1, "reduce_sum: axis must be 0 or 1");
  const Mat& A = a.value();
  require(axis == 0 ? A.rows() > 0 : A.cols() > 0,
          "reduce_sum: empty axis reduction over " + shape_str(A));
  Mat out = axis == 0 ? col_sums(A) : row_sums(A);
  return a.tape->node(std::move(out), {a}, [a, axis](Tape& t, const Mat& g) {
    const Mat& A = t.value(a);
    Mat dx(A.rows(), A.cols());
    if (axis == 0) {
      for (Eigen::Index i = 0; i < A.rows(); ++i) dx.row(i) = g.row(0);
    } else {
      for (Eigen::Index j = 0; j < A.cols(); ++j) dx.col(j) = g.col(0);
    }
    t.add_grad(a, dx);
  });
}

Var reduce_mean(Var a, int axis) {
  require(axis == 0 || axis == 1, "reduce_mean: axis must be 0 or 1");
  const Mat& A = a.value();
  Eigen::Index len = axis == 0 ? A.rows() : A.cols();
  require(len > 0, "reduce_mean: empty axis reduction over " + shape_str(A));
  Var s = reduce_sum(a, axis);
  return scale(s, 1.0 / static_cast<double>(len));
}

Var scaled_dot_product_attention(Var q, Var k, Var v) {
  const Mat& Q = q.value();
  const Mat& K = k.value();
  const Mat& V = v.value();
  require(Q.cols() == K.cols(), "scaled_dot_product_attention: key width mismatch " +
                                    shape_str(Q) + " vs " + shape_str(K));
  require(K.rows() == V.rows(), "scaled_dot_product_attention: key/value row mismatch " +
                                    shape_str(K) + " vs " + shape_str(V));
  Var scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(Q.cols())));
  Var weights = softmax(scores, 1);
  return matmul(weights, v);
}

Var cross_entropy_with_logits(Var logits, const std::vector<int>& labels) {
  const Mat& L = logits.value();
  require(static_cast<Eigen::Index>(labels.size()) == L.rows(),
          "cross_entropy_with_logits: " + std::to_string(labels.size()) + " labels for " +
              shape_str(L) + " logits");
  require(L.rows() > 0 && L.cols() > 0, "cross_entropy_with_logits: empty logits");
  for (int y : labels)
    require(y >= 0 && y < L.cols(),
            "cross_entropy_with_logits: label " + std::to_string(y) + " out of range [0," +
                std::to_string(L.cols()) + ")");
  Mat p = softmax_rows(L);
  const double b = static_cast<double>(L.rows());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < L.rows(); ++i)
    loss += -std::log(std::max(p(i, labels[static_cast<size_t>(i)]), kProbClamp));
  loss /= b;
  Mat out(1, 1);
  out(0, 0) = loss;
  return logits.tape->node(std::move(out), {logits}, [logits, p, labels, b](Tape& t, const Mat& g) {
    Mat dl = Mat::Zero(p.rows(), p.cols());
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      int y = labels[static_cast<size_t>(i)];
      if (p(i, y) <= kProbClamp) continue;  // clamp active: locally constant
      dl.row(i) = p.row(i);
      dl(i, y) -= 1.0;
    }
    t.add_grad(logits, dl * (g(0, 0) / b));
  });
}

Mat softmax_rows(const Mat& logits) {
  Mat p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    double mx = logits.row(i).maxCoeff();
    double denom = 0.0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      p(i, j) = std::exp(logits(i, j) - mx);
      denom += p(i, j);
    }
    p.row(i) /= denom;
  }
  return p;
}

}  // namespace apl
