#pragma once

#include <span>
#include <string>

#include "heml/matrix.hpp"

namespace heml {

enum class Metric { euclidean, neg_cosine };

Metric metric_from_string(const std::string& name);
std::string to_string(Metric m);

// ||a - b||_2. Throws std::invalid_argument on dimension mismatch.
double euclidean_distance(std::span<const double> a, std::span<const double> b);

// -(a/||a||) . (b/||b||), in [-1, 1]. Throws on zero-norm input.
double negative_cosine_similarity(std::span<const double> a, std::span<const double> b);

// One distance per key row, unsorted, sample_indices = 0..rows-1.
// Under Metric::neg_cosine the values are shifted to 1 + neg_cos in [0, 2]
// (cosine distance), so distance lists stay non-negative; the shift is
// order-preserving and leaves boundary-search losses unchanged.
DistanceList pairwise_distances(std::span<const double> query,
                                const EmbeddingMatrix& keys,
                                Metric metric = Metric::euclidean);

// Batched all-pairs kernel over the norms + dot-products route. Must agree
// with the per-pair kernels to 1e-12 on non-degenerate inputs; kept as an
// independent second route rather than a replacement.
EmbeddingMatrix pairwise_distance_matrix(const EmbeddingMatrix& queries,
                                         const EmbeddingMatrix& keys,
                                         Metric metric = Metric::euclidean);

// d(metric) gradients for the trainer; d must be the already-computed
// distance between query and sample under `metric`.
void distance_grad_wrt_query(std::span<const double> query, std::span<const double> sample,
                             double distance, Metric metric, std::span<double> out);
void distance_grad_wrt_sample(std::span<const double> query, std::span<const double> sample,
                              double distance, Metric metric, std::span<double> out);

}  // namespace heml
