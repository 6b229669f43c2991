#include "heml/evaluator.hpp"

#include <algorithm>
#include <iostream>
#include <numeric>
#include <stdexcept>

#include "heml/distance.hpp"
#include "heml/parallel.hpp"

namespace heml {

std::vector<std::size_t> rank_gallery(std::span<const double> query,
                                      const EmbeddingMatrix& gallery) {
    DistanceList dists = pairwise_distances(query, gallery, Metric::euclidean);
    std::vector<std::size_t> order(gallery.rows);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (dists.values[a] != dists.values[b]) return dists.values[a] < dists.values[b];
        return a < b;
    });
    return order;
}

std::optional<double> average_precision(std::span<const std::size_t> ranking,
                                        const std::vector<bool>& relevance) {
    std::size_t total_relevant = 0;
    for (std::size_t idx : ranking)
        if (relevance[idx]) ++total_relevant;
    if (total_relevant == 0) return std::nullopt;

    double sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t k = 0; k < ranking.size(); ++k) {
        if (relevance[ranking[k]]) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(k + 1);
        }
    }
    return sum / static_cast<double>(total_relevant);
}

RetrievalResult evaluate(const EmbeddingMatrix& queries,
                         std::span<const IdentityLabel> query_labels,
                         const EmbeddingMatrix& gallery,
                         std::span<const IdentityLabel> gallery_labels,
                         const EvalOptions& options) {
    if (queries.rows != query_labels.size() || gallery.rows != gallery_labels.size())
        throw std::invalid_argument("evaluate: labels do not match matrix rows");
    if (queries.rows > 0 && gallery.rows > 0 && queries.dim != gallery.dim)
        throw std::invalid_argument("evaluate: dimension mismatch");
    if (options.exclude_self && queries.rows != gallery.rows)
        throw std::invalid_argument("evaluate: exclude_self needs query set == gallery set");

    struct QueryOutcome {
        bool skipped = true;
        double ap = 0.0;
        std::size_t first_match_rank = 0;  // 1-based
    };
    std::vector<QueryOutcome> outcomes(queries.rows);

    parallel_for(queries.rows, [&](std::size_t q) {
        std::vector<std::size_t> ranking = rank_gallery(queries.row(q), gallery);
        if (options.exclude_self)
            std::erase(ranking, q);
        std::vector<bool> relevance(gallery.rows);
        for (std::size_t j = 0; j < gallery.rows; ++j)
            relevance[j] = gallery_labels[j] == query_labels[q];
        auto ap = average_precision(ranking, relevance);
        if (!ap) return;  // no reachable match; skipped by convention
        QueryOutcome& out = outcomes[q];
        out.skipped = false;
        out.ap = *ap;
        for (std::size_t k = 0; k < ranking.size(); ++k) {
            if (relevance[ranking[k]]) {
                out.first_match_rank = k + 1;
                break;
            }
        }
    });

    RetrievalResult result;
    result.cmc.assign(gallery.rows, 0.0);
    for (std::size_t q = 0; q < queries.rows; ++q) {
        const auto& out = outcomes[q];
        if (out.skipped) {
            ++result.skipped_queries;
            continue;
        }
        result.per_query_ap.push_back(out.ap);
        for (std::size_t k = out.first_match_rank - 1; k < result.cmc.size(); ++k)
            result.cmc[k] += 1.0;
    }
    if (result.skipped_queries > 0)
        std::cerr << "evaluate: skipped " << result.skipped_queries
                  << " queries with no gallery match\n";
    if (result.per_query_ap.empty())
        throw std::invalid_argument("evaluate: no query has a gallery match");

    double n = static_cast<double>(result.per_query_ap.size());
    result.map = std::accumulate(result.per_query_ap.begin(), result.per_query_ap.end(), 0.0) / n;
    for (auto& c : result.cmc) c /= n;
    result.rank1 = result.cmc.empty() ? 0.0 : result.cmc.front();
    return result;
}

}  // namespace heml
