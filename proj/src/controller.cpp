#include "apl/controller.hpp"

#include <cmath>

#include "apl/ops.hpp"

namespace apl {

double surprise(const Vec& probs, int true_label) {
  if (true_label < 0 || true_label >= probs.size())
    fail("surprise: label " + std::to_string(true_label) + " out of range [0," +
         std::to_string(probs.size()) + ")");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) sum += probs(i);
  if (std::abs(sum - 1.0) > 1e-6)
    fail("surprise: probabilities sum to " + std::to_string(sum) + ", expected 1");
  return -std::log(std::max(probs(true_label), kProbClamp));
}

double threshold_for(int num_classes) {
  if (num_classes < 2) fail("threshold_for: need at least 2 classes");
  return -std::log(1.0 / static_cast<double>(num_classes));
}

SurpriseDecision should_write(const Vec& probs, int true_label, double sigma) {
  SurpriseDecision d;
  d.surprise = surprise(probs, true_label);
  d.threshold = sigma;
  d.write = d.surprise > sigma;
  return d;
}

}  // namespace apl
