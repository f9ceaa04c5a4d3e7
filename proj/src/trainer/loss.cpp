#include "trainer/loss.hpp"

#include <cmath>

#include "core/errors.hpp"

namespace kinscope {

LossBundle total_loss(double l_f, double l_f_aug, double l_b, double l_c, const LossWeights& w) {
  const std::pair<const char*, double> parts[] = {{"L_F", l_f}, {"L~_F", l_f_aug}, {"L_B", l_b}, {"L_C", l_c}};
  for (const auto& [name, v] : parts)
    if (std::isnan(v)) throw NumericError(std::string("loss component ") + name + " is NaN");
  LossBundle b{0.0, l_f, l_f_aug, l_b, l_c, w};
  b.total = w.lambda1 * (l_f + l_f_aug) + w.lambda2 * l_b + w.lambda3 * l_c;
  return b;
}

BatchLoss compute_batch_loss(const DetectorModel& model, std::span<const PreparedSample* const> originals,
                             std::span<const PreparedSample* const> augmented, const LossWeights& weights) {
  if (originals.empty() || originals.size() != augmented.size())
    throw ShapeError("batch loss needs equally many originals and augmentations");
  const int n = static_cast<int>(originals.size());
  std::vector<const PreparedSample*> all(originals.begin(), originals.end());
  all.insert(all.end(), augmented.begin(), augmented.end());

  std::vector<int> family(all.size()), targets(originals.size());
  std::vector<double> generated(all.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    family[i] = std::max(all[i]->family, 0);
    generated[i] = all[i]->label == BinaryLabel::generated ? 1.0 : 0.0;
  }
  for (std::size_t i = 0; i < originals.size(); ++i) targets[i] = originals[i]->label == BinaryLabel::generated;

  auto flat = model.features(all);
  auto probs = model.family_probs(flat);
  const std::span<const int> fam(family);
  const std::span<const double> gen(generated);
  auto l_f = ag::nll_from_probs(ag::slice_rows(probs, 0, n), fam.first(n), gen.first(n));
  auto l_f_aug = ag::nll_from_probs(ag::slice_rows(probs, n, 2 * n), fam.subspan(n), gen.subspan(n));
  auto flat_orig = ag::slice_rows(flat, 0, n);
  auto y = model.detect(flat_orig, ag::slice_rows(probs, 0, n));
  auto l_b = ag::bce_from_probs(y, targets);

  BatchLoss out;
  if (model.config().variant == Variant::no_cl) {
    out.total = ag::weighted_sum({l_f, l_f_aug, l_b}, {weights.lambda1, weights.lambda1, weights.lambda2});
    out.values = total_loss(l_f->value[0], l_f_aug->value[0], l_b->value[0], 0.0,
                            {weights.lambda1, weights.lambda2, 0.0});
  } else {
    auto l_c = ag::scale(ag::contrastive_loss(model.project(flat), model.config().contrastive.temperature),
                         1.0 / static_cast<double>(n));
    // L_C goes last so that a zero weight leaves the other gradients bitwise unchanged.
    out.total = ag::weighted_sum({l_f, l_f_aug, l_b, l_c},
                                 {weights.lambda1, weights.lambda1, weights.lambda2, weights.lambda3});
    out.values = total_loss(l_f->value[0], l_f_aug->value[0], l_b->value[0], l_c->value[0], weights);
  }
  return out;
}

}  // namespace kinscope
