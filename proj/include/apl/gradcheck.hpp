#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "apl/params.hpp"
#include "apl/tape.hpp"

namespace apl {

// Central finite-difference checking of analytic gradients. Each case builds
// a scalar loss from grad-enabled leaves (and optionally a ParamStore); the
// checker compares tape gradients against (f(x+h) - f(x-h)) / 2h.
struct GradCheckCase {
  std::string name;
  std::vector<Mat> inputs;
  std::shared_ptr<ParamStore> params;  // may be null
  std::function<Var(Tape&, const std::vector<Var>&)> build;
  // Max coordinates checked per tensor; -1 checks all of them.
  int coord_budget = -1;
};

struct GradCheckReport {
  std::string name;
  double max_rel_err = 0.0;
  int coords_checked = 0;
  bool pass = false;
};

class GradCheckSuite {
 public:
  void add(GradCheckCase c) { cases_.push_back(std::move(c)); }
  std::vector<GradCheckReport> run(double h = 1e-5, double tol = 1e-4,
                                   uint64_t seed = 99) const;
  size_t size() const { return cases_.size(); }

 private:
  std::vector<GradCheckCase> cases_;
};

// Relative error with an absolute guard for near-zero pairs.
double grad_rel_err(double analytic, double numeric);

// Every diffcore op, one case each.
void add_op_cases(GradCheckSuite& suite, uint64_t seed = 7);

// The three decoders end-to-end (implemented alongside the decoders).
// The default seed picks an evaluation point away from relu kinks, where
// h = 1e-5 central differences are inside their truncation budget.
void add_decoder_cases(GradCheckSuite& suite, uint64_t seed = 20);

// Fixture with a deliberately wrong backward rule; used to verify that the
// checker actually rejects bad gradients.
GradCheckCase corrupted_gradient_fixture();

inline GradCheckSuite default_gradcheck_suite() {
  GradCheckSuite s;
  add_op_cases(s);
  add_decoder_cases(s);
  return s;
}

}  // namespace apl
