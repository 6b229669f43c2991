#include "heml/he_loss.hpp"

#include <algorithm>
#include <limits>

#include "heml/parallel.hpp"

namespace heml {

namespace {

void require_non_negative(const DistanceList& d, const char* who) {
    for (double v : d.values)
        if (!(v >= 0.0))
            throw std::invalid_argument(std::string(who) + ": negative distance");
}

}  // namespace

double he_loss_at(double t, const DistanceList& pos_dists, const DistanceList& neg_dists) {
    require_non_negative(pos_dists, "he_loss_at");
    require_non_negative(neg_dists, "he_loss_at");
    double loss = 0.0;
    for (double d : pos_dists.values) loss += std::max(d - t, 0.0);
    for (double d : neg_dists.values) loss += std::max(t - d, 0.0);
    return loss;
}

BoundaryResult find_optimal_boundary(const DistanceList& pos_dists,
                                     const DistanceList& neg_dists) {
    if (pos_dists.values.empty())
        throw std::invalid_argument("find_optimal_boundary: positive set is empty");
    if (!pos_dists.sorted || (!neg_dists.sorted && !neg_dists.values.empty()))
        throw std::invalid_argument("find_optimal_boundary: inputs must be sorted ascending");
    if (pos_dists.values.front() < 0.0 ||
        (!neg_dists.values.empty() && neg_dists.values.front() < 0.0))
        throw std::invalid_argument("find_optimal_boundary: negative distance");

    const auto& pos = pos_dists.values;
    const auto& neg = neg_dists.values;
    const std::size_t n_pos = pos.size();
    const std::size_t n_neg = neg.size();
    const double inf = std::numeric_limits<double>::infinity();

    // Walk boundary candidates in merged ascending order. Crossing a positive
    // takes it off the hard side, crossing a negative puts it on; the gap
    // the hard-count gap starts at |P| and shrinks by one per move, so the loop runs
    // exactly |P| times. An exhausted list parks its cursor at +inf.
    std::size_t hard_pos = n_pos;
    std::size_t hard_neg = 0;
    double pos_cur = pos[0];
    double neg_cur = n_neg > 0 ? neg[0] : inf;
    double t = 0.0;
    std::size_t iterations = 0;
    while (true) {
        if (pos_cur <= neg_cur) {
            t = pos_cur;
            --hard_pos;
            std::size_t next = n_pos - hard_pos;
            pos_cur = next < n_pos ? pos[next] : inf;
        } else {
            t = neg_cur;
            ++hard_neg;
            neg_cur = hard_neg < n_neg ? neg[hard_neg] : inf;
        }
        ++iterations;
        if (hard_pos == hard_neg) break;
    }

    BoundaryResult r;
    r.t_star = t;
    r.iterations = iterations;
    r.loss = he_loss_at(t, pos_dists, neg_dists);
    r.hard_positive_indices.reserve(hard_pos);
    for (std::size_t i = n_pos - hard_pos; i < n_pos; ++i)
        r.hard_positive_indices.push_back(pos_dists.sample_indices[i]);
    r.hard_negative_indices.reserve(hard_neg);
    for (std::size_t i = 0; i < hard_neg; ++i)
        r.hard_negative_indices.push_back(neg_dists.sample_indices[i]);
    std::sort(r.hard_positive_indices.begin(), r.hard_positive_indices.end());
    std::sort(r.hard_negative_indices.begin(), r.hard_negative_indices.end());
    return r;
}

BoundaryResult he_loss_per_query(std::size_t query_index, const EmbeddingMatrix& batch_features,
                                 const EmbeddingMatrix& positives,
                                 const EmbeddingMatrix& negatives, Metric metric) {
    if (query_index >= batch_features.rows)
        throw std::invalid_argument("he_loss_per_query: query index out of range");
    auto query = batch_features.row(query_index);
    DistanceList pos = pairwise_distances(query, positives, metric);
    DistanceList neg = pairwise_distances(query, negatives, metric);
    pos.sort_ascending();
    neg.sort_ascending();
    return find_optimal_boundary(pos, neg);
}

double he_loss_batch(const GroupedBatch& queries,
                     std::span<const EmbeddingMatrix> positive_sets,
                     std::span<const EmbeddingMatrix> negative_sets, Metric metric) {
    const std::size_t n = queries.features.rows;
    if (positive_sets.size() != n || negative_sets.size() != n)
        throw std::invalid_argument("he_loss_batch: one positive/negative set per query");
    if (n == 0) return 0.0;
    std::vector<double> losses(n);
    parallel_for(n, [&](std::size_t i) {
        losses[i] =
            he_loss_per_query(i, queries.features, positive_sets[i], negative_sets[i], metric)
                .loss;
    });
    double sum = 0.0;
    for (double l : losses) sum += l;
    return sum / static_cast<double>(n);
}

HeLossGradient he_loss_gradient(std::size_t query_index, const EmbeddingMatrix& batch_features,
                                const EmbeddingMatrix& positives,
                                const EmbeddingMatrix& negatives, Metric metric) {
    HeLossGradient g;
    g.boundary = he_loss_per_query(query_index, batch_features, positives, negatives, metric);
    auto query = batch_features.row(query_index);
    const std::size_t dim = batch_features.dim;
    g.query.assign(dim, 0.0);

    std::vector<double> term(dim);
    auto accumulate = [&](const EmbeddingMatrix& samples, std::size_t sample_index,
                          double sign_on_query,
                          std::vector<std::pair<std::size_t, std::vector<double>>>& out) {
        auto sample = samples.row(sample_index);
        double d = metric == Metric::euclidean
                       ? euclidean_distance(query, sample)
                       : 1.0 + negative_cosine_similarity(query, sample);
        if (metric == Metric::euclidean && d == 0.0)
            throw degenerate_geometry_error("he_loss_gradient: hard sample at zero distance");
        distance_grad_wrt_query(query, sample, d, metric, term);
        for (std::size_t k = 0; k < dim; ++k) g.query[k] += sign_on_query * term[k];
        distance_grad_wrt_sample(query, sample, d, metric, term);
        std::vector<double> sample_grad(dim);
        for (std::size_t k = 0; k < dim; ++k) sample_grad[k] = sign_on_query * term[k];
        out.emplace_back(sample_index, std::move(sample_grad));
    };

    for (std::size_t idx : g.boundary.hard_positive_indices)
        accumulate(positives, idx, +1.0, g.positives);
    for (std::size_t idx : g.boundary.hard_negative_indices)
        accumulate(negatives, idx, -1.0, g.negatives);
    return g;
}

}  // namespace heml
