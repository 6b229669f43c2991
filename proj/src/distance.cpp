#include "heml/distance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace heml {

Metric metric_from_string(const std::string& name) {
    if (name == "euclidean") return Metric::euclidean;
    if (name == "neg_cosine") return Metric::neg_cosine;
    throw std::invalid_argument("unknown metric: " + name);
}

std::string to_string(Metric m) {
    return m == Metric::euclidean ? "euclidean" : "neg_cosine";
}

double euclidean_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw std::invalid_argument("euclidean_distance: dimension mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        sum += d * d;
    }
    return std::sqrt(sum);
}

namespace {

double norm2(std::span<const double> a) {
    double sum = 0.0;
    for (double x : a) sum += x * x;
    return std::sqrt(sum);
}

double dot(std::span<const double> a, std::span<const double> b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
    return sum;
}

}  // namespace

double negative_cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw std::invalid_argument("negative_cosine_similarity: dimension mismatch");
    double na = norm2(a);
    double nb = norm2(b);
    if (na == 0.0 || nb == 0.0)
        throw std::invalid_argument("negative_cosine_similarity: zero-norm input");
    return -dot(a, b) / (na * nb);
}

DistanceList pairwise_distances(std::span<const double> query, const EmbeddingMatrix& keys,
                                Metric metric) {
    if (keys.rows > 0 && query.size() != keys.dim)
        throw std::invalid_argument("pairwise_distances: dimension mismatch");
    DistanceList out;
    out.values.resize(keys.rows);
    out.sample_indices.resize(keys.rows);
    for (std::size_t i = 0; i < keys.rows; ++i) {
        out.values[i] = metric == Metric::euclidean
                            ? euclidean_distance(query, keys.row(i))
                            : 1.0 + negative_cosine_similarity(query, keys.row(i));
        out.sample_indices[i] = i;
    }
    return out;
}

EmbeddingMatrix pairwise_distance_matrix(const EmbeddingMatrix& queries,
                                         const EmbeddingMatrix& keys, Metric metric) {
    if (queries.rows > 0 && keys.rows > 0 && queries.dim != keys.dim)
        throw std::invalid_argument("pairwise_distance_matrix: dimension mismatch");
    EmbeddingMatrix out(queries.rows, keys.rows);
    std::vector<double> qnorm(queries.rows), knorm(keys.rows);
    for (std::size_t i = 0; i < queries.rows; ++i) qnorm[i] = norm2(queries.row(i));
    for (std::size_t j = 0; j < keys.rows; ++j) knorm[j] = norm2(keys.row(j));
    for (std::size_t i = 0; i < queries.rows; ++i) {
        for (std::size_t j = 0; j < keys.rows; ++j) {
            double qk = dot(queries.row(i), keys.row(j));
            if (metric == Metric::euclidean) {
                double sq = qnorm[i] * qnorm[i] + knorm[j] * knorm[j] - 2.0 * qk;
                out.row(i)[j] = std::sqrt(std::max(sq, 0.0));
            } else {
                if (qnorm[i] == 0.0 || knorm[j] == 0.0)
                    throw std::invalid_argument("pairwise_distance_matrix: zero-norm input");
                out.row(i)[j] = 1.0 - qk / (qnorm[i] * knorm[j]);
            }
        }
    }
    return out;
}

void distance_grad_wrt_query(std::span<const double> query, std::span<const double> sample,
                             double distance, Metric metric, std::span<double> out) {
    if (metric == Metric::euclidean) {
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = (query[i] - sample[i]) / distance;
        return;
    }
    // d = 1 - q.s / (|q||s|);  dd/dq = -(s_hat - (q_hat.s_hat) q_hat) / |q|
    double nq = norm2(query);
    double ns = norm2(sample);
    if (nq == 0.0 || ns == 0.0)
        throw std::invalid_argument("distance_grad_wrt_query: zero-norm input");
    double cos_qs = dot(query, sample) / (nq * ns);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = -(sample[i] / ns - cos_qs * query[i] / nq) / nq;
}

void distance_grad_wrt_sample(std::span<const double> query, std::span<const double> sample,
                              double distance, Metric metric, std::span<double> out) {
    if (metric == Metric::euclidean) {
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = (sample[i] - query[i]) / distance;
        return;
    }
    double nq = norm2(query);
    double ns = norm2(sample);
    if (nq == 0.0 || ns == 0.0)
        throw std::invalid_argument("distance_grad_wrt_sample: zero-norm input");
    double cos_qs = dot(query, sample) / (nq * ns);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = -(query[i] / nq - cos_qs * sample[i] / ns) / ns;
}

}  // namespace heml
