#pragma once

#include <optional>
#include <span>
#include <vector>

#include "heml/matrix.hpp"

namespace heml {

struct RetrievalResult {
    std::vector<double> per_query_ap;  // one entry per evaluated query
    double map = 0.0;
    double rank1 = 0.0;
    std::vector<double> cmc;  // cmc[k] = fraction matched within top k+1
    std::size_t skipped_queries = 0;
};

struct EvalOptions {
    // Remove gallery item i from query i's ranking; requires queries and
    // gallery to be the same index-aligned set.
    bool exclude_self = false;
};

// Gallery indices by ascending Euclidean distance, ties by ascending index.
std::vector<std::size_t> rank_gallery(std::span<const double> query,
                                      const EmbeddingMatrix& gallery);

// Non-interpolated AP: mean of precision@k over ranks k holding a relevant
// item. nullopt when the ranking holds no relevant item (caller skips).
std::optional<double> average_precision(std::span<const std::size_t> ranking,
                                        const std::vector<bool>& relevance);

RetrievalResult evaluate(const EmbeddingMatrix& queries,
                         std::span<const IdentityLabel> query_labels,
                         const EmbeddingMatrix& gallery,
                         std::span<const IdentityLabel> gallery_labels,
                         const EvalOptions& options = {});

}  // namespace heml
