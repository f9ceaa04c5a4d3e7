#pragma once

#include <span>
#include <vector>

#include "family/family.hpp"
#include "nn/autograd.hpp"
#include "trainer/model.hpp"

namespace kinscope {

struct LossWeights {
  double lambda1 = 1.0;  // family losses on x and x~
  double lambda2 = 1.0;  // detection
  double lambda3 = 0.5;  // contrastive

  bool operator==(const LossWeights&) const = default;
};

struct LossBundle {
  double total = 0.0;
  double l_f = 0.0;
  double l_f_aug = 0.0;
  double l_b = 0.0;
  double l_c = 0.0;
  LossWeights weights;
};

/// total = l1 (L_F + L~_F) + l2 L_B + l3 L_C. A NaN component raises
/// NumericError naming it.
LossBundle total_loss(double l_f, double l_f_aug, double l_b, double l_c, const LossWeights& weights);

/// Graph of one training step's joint loss plus the component values.
struct BatchLoss {
  ag::Var total;
  LossBundle values;
};

/// originals[i] is paired with augmented[i]. Family losses cover generated
/// samples only; L_B covers the originals; L_C is averaged over the batch.
/// The no_cl variant keeps the pairing (for L~_F) but has no contrastive term.
BatchLoss compute_batch_loss(const DetectorModel& model, std::span<const PreparedSample* const> originals,
                             std::span<const PreparedSample* const> augmented, const LossWeights& weights);

}  // namespace kinscope
