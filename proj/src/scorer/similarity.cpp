#include "scorer/similarity.hpp"

#include <cmath>

#include "core/errors.hpp"

namespace kinscope {

const char* to_string(SimilaritySpace space) noexcept {
  return space == SimilaritySpace::prob ? "prob" : "logprob";
}

SimilaritySpace parse_similarity_space(std::string_view text) {
  if (text == "logprob") return SimilaritySpace::logprob;
  if (text == "prob") return SimilaritySpace::prob;
  throw ConfigError("unknown similarity space '" + std::string(text) + "'");
}

double masked_cosine(std::span<const double> a, std::span<const double> b, std::span<const std::uint8_t> mask_a,
                     std::span<const std::uint8_t> mask_b) {
  if (a.size() != b.size()) throw ShapeError("cosine of vectors with different lengths");
  if ((!mask_a.empty() && mask_a.size() != a.size()) || (!mask_b.empty() && mask_b.size() != b.size()))
    throw ShapeError("mask length does not match vector length");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if ((!mask_a.empty() && !mask_a[i]) || (!mask_b.empty() && !mask_b[i])) continue;
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace {

double transform(double v, SimilaritySpace space) { return space == SimilaritySpace::prob ? std::exp(v) : v; }

std::vector<double> row_in_space(const TokenProbMatrix& m, std::size_t model, SimilaritySpace space) {
  std::vector<double> out(m.logprobs[model].size());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = transform(m.logprobs[model][j], space);
  return out;
}

void require_aligned(const TokenProbMatrix& m, std::size_t length, std::size_t models) {
  if (!m.is_aligned()) throw ShapeError("similarity needs aligned matrices ('" + m.sample_id + "' is not)");
  if (m.aligned_length != length) throw ShapeError("matrices are aligned to different lengths");
  if (m.model_count() != models) throw ShapeError("matrices have different model counts");
}

}  // namespace

CentroidRow centroid_row(std::span<const TokenProbMatrix* const> matrices, std::size_t model, SimilaritySpace space) {
  if (matrices.empty()) throw DataError("centroid of an empty set");
  const std::size_t length = matrices.front()->aligned_length;
  std::vector<double> sum(length, 0.0);
  std::vector<std::size_t> count(length, 0);
  for (const auto* m : matrices) {
    require_aligned(*m, length, matrices.front()->model_count());
    for (std::size_t j = 0; j < length; ++j)
      if (m->mask[model][j]) {
        sum[j] += transform(m->logprobs[model][j], space);
        ++count[j];
      }
  }
  CentroidRow c{std::vector<double>(length, 0.0), std::vector<std::uint8_t>(length, 0)};
  for (std::size_t j = 0; j < length; ++j)
    if (count[j]) {
      c.values[j] = sum[j] / static_cast<double>(count[j]);
      c.mask[j] = 1;
    }
  return c;
}

std::vector<std::vector<double>> family_similarity_matrix(std::span<const TokenProbMatrix> matrices,
                                                          std::span<const std::size_t> labels,
                                                          std::span<const TokenProbMatrix> reference,
                                                          std::span<const std::size_t> reference_labels,
                                                          std::size_t n_families, SimilaritySpace space) {
  if (matrices.size() != labels.size() || reference.size() != reference_labels.size())
    throw ShapeError("one label per matrix is required");
  if (matrices.empty() || reference.empty()) throw DataError("similarity matrix of an empty sample set");
  const std::size_t models = reference.front().model_count();
  const std::size_t length = reference.front().aligned_length;

  std::vector<CentroidRow> centroids;
  for (std::size_t b = 0; b < models; ++b) {
    std::vector<const TokenProbMatrix*> own;
    for (std::size_t i = 0; i < reference.size(); ++i)
      if (reference_labels[i] == b) own.push_back(&reference[i]);
    if (own.empty()) throw DataError("no reference samples for model " + std::to_string(b));
    centroids.push_back(centroid_row(own, b, space));
  }

  std::vector<std::vector<double>> sim(n_families, std::vector<double>(models, 0.0));
  std::vector<std::size_t> count(n_families, 0);
  for (std::size_t i = 0; i < matrices.size(); ++i) {
    const auto& m = matrices[i];
    require_aligned(m, length, models);
    if (labels[i] >= n_families) throw LabelError("family label out of range in similarity matrix");
    for (std::size_t b = 0; b < models; ++b)
      sim[labels[i]][b] += masked_cosine(row_in_space(m, b, space), centroids[b].values, m.mask[b], centroids[b].mask);
    ++count[labels[i]];
  }
  for (std::size_t a = 0; a < n_families; ++a) {
    if (!count[a]) throw DataError("family " + std::to_string(a) + " has no samples");
    for (auto& v : sim[a]) v /= static_cast<double>(count[a]);
  }
  return sim;
}

double diagonal_gap(const std::vector<std::vector<double>>& matrix) {
  const std::size_t k = std::min(matrix.size(), matrix.empty() ? 0 : matrix.front().size());
  if (k < 2) throw DataError("diagonal gap needs at least a 2 x 2 matrix");
  double diag = 0.0, off = 0.0;
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b) (a == b ? diag : off) += matrix[a][b];
  return diag / static_cast<double>(k) - off / static_cast<double>(k * (k - 1));
}

}  // namespace kinscope
