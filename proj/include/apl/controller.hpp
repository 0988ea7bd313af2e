#pragma once

#include "apl/common.hpp"

namespace apl {

// Surprise-gated write controller. Surprise is the negative log-probability
// the model assigned to the true label; an observation is written when it
// exceeds the threshold sigma strictly.
struct SurpriseDecision {
  double surprise = 0.0;
  double threshold = 0.0;
  bool write = false;
};

// -ln(max(p_true, 1e-12)). probs must sum to 1 within 1e-6.
double surprise(const Vec& probs, int true_label);

// Default threshold: the surprise of a uniform prediction over N classes.
// Computed as -ln(1.0/N) so that the boundary case p_true == 1/N lands on
// exact float equality with the threshold and never writes.
double threshold_for(int num_classes);

SurpriseDecision should_write(const Vec& probs, int true_label, double sigma);

}  // namespace apl
