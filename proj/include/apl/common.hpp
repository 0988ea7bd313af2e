#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace apl {

// All numerics run in double precision; checkpoints downcast to float on disk.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

inline std::string shape_str(Eigen::Index rows, Eigen::Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

inline std::string shape_str(const Mat& m) { return shape_str(m.rows(), m.cols()); }

}  // namespace apl
