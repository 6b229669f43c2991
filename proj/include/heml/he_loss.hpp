#pragma once

#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "heml/distance.hpp"
#include "heml/matrix.hpp"

namespace heml {

// Raised when a hard sample coincides exactly with the query, which makes the
// distance gradient direction undefined. Callers may perturb and retry.
struct degenerate_geometry_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Outcome of the optimal-boundary search for one query.
//
// The hard sets are the ones the two-pointer walk counted: the positives
// still above the final boundary and the negatives crossed on the way there.
// The sample whose distance defines t_star belongs to the corresponding set
// when the walk's last move crossed a negative; its loss term is zero, but
// keeping it in the set is what makes the counts equal and the detached-t*
// gradient formula exact.
struct BoundaryResult {
    double t_star = 0.0;
    double loss = 0.0;
    std::vector<std::size_t> hard_positive_indices;
    std::vector<std::size_t> hard_negative_indices;
    std::size_t iterations = 0;  // two-pointer loop count; always |positives|
};

// Loss at an arbitrary boundary t:
//   sum_p max(d_pq - t, 0) + sum_n max(t - d_nq, 0).
// Either list may be empty; negative distances are rejected.
double he_loss_at(double t, const DistanceList& pos_dists, const DistanceList& neg_dists);

// Two-pointer search for the boundary minimizing he_loss_at. Both lists must
// be sorted ascending; positives must be non-empty. When a pointer runs off
// its list its current distance becomes +inf, so shorter-than-usual negative
// lists (or an empty one) stay well-defined. When the minimum is a flat
// interval the walk's natural output — its left endpoint, the |P|-th smallest
// distance overall — is returned.
BoundaryResult find_optimal_boundary(const DistanceList& pos_dists,
                                     const DistanceList& neg_dists);

// Distances from batch row `query_index` to the labeled sets, sorted, then
// find_optimal_boundary. Hard indices refer to rows of positives/negatives.
BoundaryResult he_loss_per_query(std::size_t query_index,
                                 const EmbeddingMatrix& batch_features,
                                 const EmbeddingMatrix& positives,
                                 const EmbeddingMatrix& negatives,
                                 Metric metric = Metric::euclidean);

// Mean of per-query losses, one positive/negative set per query.
double he_loss_batch(const GroupedBatch& queries,
                     std::span<const EmbeddingMatrix> positive_sets,
                     std::span<const EmbeddingMatrix> negative_sets,
                     Metric metric = Metric::euclidean);

// Subgradient of the per-query loss with t* held fixed (valid because
// the hard counts cancel in dL/dt at the optimum):
//   dL/de_q = sum_{hard p} (e_q - e_p)/d_pq - sum_{hard n} (e_q - e_n)/d_nq
// under the Euclidean metric; hard-sample gradients are the negations of
// their query-side terms, non-hard samples receive zero. A hard sample at
// distance exactly zero raises degenerate_geometry_error.
struct HeLossGradient {
    BoundaryResult boundary;
    std::vector<double> query;  // dense, length dim
    std::vector<std::pair<std::size_t, std::vector<double>>> positives;  // keyed by hard index
    std::vector<std::pair<std::size_t, std::vector<double>>> negatives;
};

HeLossGradient he_loss_gradient(std::size_t query_index,
                                const EmbeddingMatrix& batch_features,
                                const EmbeddingMatrix& positives,
                                const EmbeddingMatrix& negatives,
                                Metric metric = Metric::euclidean);

}  // namespace heml
