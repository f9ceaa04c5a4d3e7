#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "core/types.hpp"

namespace kinscope {

/// Vector space in which rows are compared.
enum class SimilaritySpace : std::uint8_t { logprob, prob };

const char* to_string(SimilaritySpace space) noexcept;
SimilaritySpace parse_similarity_space(std::string_view text);

/// Cosine over positions valid in both masks (empty mask = all valid).
/// Zero-norm inputs give 0.
double masked_cosine(std::span<const double> a, std::span<const double> b, std::span<const std::uint8_t> mask_a = {},
                     std::span<const std::uint8_t> mask_b = {});

/// Position-wise mean row of model `model` over the given aligned matrices;
/// positions valid in no matrix are masked out.
struct CentroidRow {
  std::vector<double> values;
  std::vector<std::uint8_t> mask;
};
CentroidRow centroid_row(std::span<const TokenProbMatrix* const> matrices, std::size_t model, SimilaritySpace space);

/// K x M matrix: entry (a, b) is the mean, over samples labelled a, of the
/// cosine between the sample's row under model b and the centroid of model
/// b's own reference samples (reference rows labelled b, scored by b).
/// All matrices must be aligned to one length. A family without samples, or a
/// model without reference samples, raises DataError.
std::vector<std::vector<double>> family_similarity_matrix(std::span<const TokenProbMatrix> matrices,
                                                          std::span<const std::size_t> labels,
                                                          std::span<const TokenProbMatrix> reference,
                                                          std::span<const std::size_t> reference_labels,
                                                          std::size_t n_families,
                                                          SimilaritySpace space = SimilaritySpace::logprob);

/// Mean of the diagonal minus mean of the off-diagonal entries (square part).
double diagonal_gap(const std::vector<std::vector<double>>& matrix);

}  // namespace kinscope
