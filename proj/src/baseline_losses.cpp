#include "heml/baseline_losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace heml {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
    return sum;
}

double distance_to(std::span<const double> query, std::span<const double> sample, Metric metric) {
    return metric == Metric::euclidean ? euclidean_distance(query, sample)
                                       : 1.0 + negative_cosine_similarity(query, sample);
}

// Adds c * d(dist(q, sample))/dq; a zero Euclidean distance contributes the
// zero subgradient rather than NaN.
void add_distance_grad(std::span<const double> query, std::span<const double> sample,
                       double distance, Metric metric, double c, std::span<double> grad) {
    if (metric == Metric::euclidean && distance == 0.0) return;
    std::vector<double> term(query.size());
    distance_grad_wrt_query(query, sample, distance, metric, term);
    for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += c * term[k];
}

// Indices of the `count` largest similarities, ties by ascending index.
std::vector<std::size_t> top_by_similarity(const std::vector<double>& sims, std::size_t count) {
    std::vector<std::size_t> order(sims.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (sims[a] != sims[b]) return sims[a] > sims[b];
        return a < b;
    });
    order.resize(std::min(count, order.size()));
    return order;
}

}  // namespace

double triplet_loss_grad(std::span<const double> query, const EmbeddingMatrix& positives,
                         const EmbeddingMatrix& negatives, const TripletConfig& cfg,
                         Metric metric, std::span<double> query_grad) {
    if (cfg.margin < 0.0) throw std::invalid_argument("triplet_loss: margin must be >= 0");
    if (positives.rows == 0 || negatives.rows == 0)
        throw std::invalid_argument("triplet_loss: empty sample set");
    std::fill(query_grad.begin(), query_grad.end(), 0.0);

    std::vector<double> dp(positives.rows), dn(negatives.rows);
    for (std::size_t i = 0; i < positives.rows; ++i)
        dp[i] = distance_to(query, positives.row(i), metric);
    for (std::size_t i = 0; i < negatives.rows; ++i)
        dn[i] = distance_to(query, negatives.row(i), metric);

    double rep_p, rep_n;
    std::size_t hard_p = 0, hard_n = 0;
    if (cfg.mining == TripletConfig::Mining::hard) {
        hard_p = static_cast<std::size_t>(std::max_element(dp.begin(), dp.end()) - dp.begin());
        hard_n = static_cast<std::size_t>(std::min_element(dn.begin(), dn.end()) - dn.begin());
        rep_p = dp[hard_p];
        rep_n = dn[hard_n];
    } else {
        rep_p = std::accumulate(dp.begin(), dp.end(), 0.0) / static_cast<double>(dp.size());
        rep_n = std::accumulate(dn.begin(), dn.end(), 0.0) / static_cast<double>(dn.size());
    }

    double loss = std::max(rep_p - rep_n + cfg.margin, 0.0);
    if (loss > 0.0 && !query_grad.empty()) {
        if (cfg.mining == TripletConfig::Mining::hard) {
            add_distance_grad(query, positives.row(hard_p), dp[hard_p], metric, 1.0, query_grad);
            add_distance_grad(query, negatives.row(hard_n), dn[hard_n], metric, -1.0, query_grad);
        } else {
            for (std::size_t i = 0; i < positives.rows; ++i)
                add_distance_grad(query, positives.row(i), dp[i], metric,
                                  1.0 / static_cast<double>(dp.size()), query_grad);
            for (std::size_t i = 0; i < negatives.rows; ++i)
                add_distance_grad(query, negatives.row(i), dn[i], metric,
                                  -1.0 / static_cast<double>(dn.size()), query_grad);
        }
    }
    return loss;
}

double triplet_loss(std::span<const double> query, const EmbeddingMatrix& positives,
                    const EmbeddingMatrix& negatives, const TripletConfig& cfg, Metric metric) {
    return triplet_loss_grad(query, positives, negatives, cfg, metric, {});
}

double npair_loss_grad(std::span<const double> query, const EmbeddingMatrix& positives,
                       const EmbeddingMatrix& negatives, int hard_count,
                       std::span<double> query_grad) {
    if (hard_count < 1) throw std::invalid_argument("npair_loss: hard_count must be >= 1");
    if (positives.rows == 0) throw std::invalid_argument("npair_loss: empty positive set");
    if (negatives.rows < static_cast<std::size_t>(hard_count))
        throw std::invalid_argument("npair_loss: fewer negatives than hard_count");
    std::fill(query_grad.begin(), query_grad.end(), 0.0);

    // Hardest positive = lowest similarity; mined negatives = most similar.
    std::vector<double> sp(positives.rows), sn(negatives.rows);
    for (std::size_t i = 0; i < positives.rows; ++i) sp[i] = dot(query, positives.row(i));
    for (std::size_t i = 0; i < negatives.rows; ++i) sn[i] = dot(query, negatives.row(i));
    std::size_t hardest =
        static_cast<std::size_t>(std::min_element(sp.begin(), sp.end()) - sp.begin());
    std::vector<std::size_t> mined = top_by_similarity(sn, static_cast<std::size_t>(hard_count));

    // log(1 + sum_n exp(s_n - s_p)), max-shifted.
    double shift = 0.0;
    for (std::size_t idx : mined) shift = std::max(shift, sn[idx] - sp[hardest]);
    double z = std::exp(-shift);  // the "1 +" term
    for (std::size_t idx : mined) z += std::exp(sn[idx] - sp[hardest] - shift);
    double loss = shift + std::log(z);

    if (!query_grad.empty()) {
        auto hp = positives.row(hardest);
        for (std::size_t idx : mined) {
            double w = std::exp(sn[idx] - sp[hardest] - shift) / z;
            auto n = negatives.row(idx);
            for (std::size_t k = 0; k < query_grad.size(); ++k)
                query_grad[k] += w * (n[k] - hp[k]);
        }
    }
    return loss;
}

double npair_loss(std::span<const double> query, const EmbeddingMatrix& positives,
                  const EmbeddingMatrix& negatives, int hard_count) {
    return npair_loss_grad(query, positives, negatives, hard_count, {});
}

double ranked_list_loss_grad(std::span<const double> query, const EmbeddingMatrix& positives,
                             const EmbeddingMatrix& negatives, const RankedListConfig& cfg,
                             Metric metric, std::span<double> query_grad) {
    if (!(cfg.alpha > cfg.beta) || cfg.beta < 0.0)
        throw std::invalid_argument("ranked_list_loss: need alpha > beta >= 0");
    std::fill(query_grad.begin(), query_grad.end(), 0.0);
    const double pos_bound = cfg.alpha - cfg.beta;

    std::vector<std::size_t> hard_p, hard_n;
    std::vector<double> dp(positives.rows), dn(negatives.rows);
    for (std::size_t i = 0; i < positives.rows; ++i) {
        dp[i] = distance_to(query, positives.row(i), metric);
        if (dp[i] > pos_bound) hard_p.push_back(i);
    }
    for (std::size_t i = 0; i < negatives.rows; ++i) {
        dn[i] = distance_to(query, negatives.row(i), metric);
        if (dn[i] < cfg.alpha) hard_n.push_back(i);
    }

    double loss = 0.0;
    if (!hard_p.empty()) {
        double sum = 0.0;
        for (std::size_t i : hard_p) sum += dp[i] - pos_bound;
        loss += sum / static_cast<double>(hard_p.size());
        if (!query_grad.empty())
            for (std::size_t i : hard_p)
                add_distance_grad(query, positives.row(i), dp[i], metric,
                                  1.0 / static_cast<double>(hard_p.size()), query_grad);
    }
    if (!hard_n.empty()) {
        double sum = 0.0;
        for (std::size_t i : hard_n) sum += cfg.alpha - dn[i];
        loss += sum / static_cast<double>(hard_n.size());
        if (!query_grad.empty())
            for (std::size_t i : hard_n)
                add_distance_grad(query, negatives.row(i), dn[i], metric,
                                  -1.0 / static_cast<double>(hard_n.size()), query_grad);
    }
    return loss;
}

double ranked_list_loss(std::span<const double> query, const EmbeddingMatrix& positives,
                        const EmbeddingMatrix& negatives, const RankedListConfig& cfg,
                        Metric metric) {
    return ranked_list_loss_grad(query, positives, negatives, cfg, metric, {});
}

double infonce_loss_grad(std::span<const double> query, const EmbeddingMatrix& positives,
                         const EmbeddingMatrix& negatives, const InfoNceConfig& cfg,
                         std::span<double> query_grad) {
    if (!(cfg.temperature > 0.0))
        throw std::invalid_argument("infonce_loss: temperature must be > 0");
    if (cfg.hard_count < 1) throw std::invalid_argument("infonce_loss: hard_count must be >= 1");
    if (cfg.variant == InfoNceConfig::Variant::single && positives.rows != 1)
        throw std::invalid_argument("infonce_loss: variant single requires exactly one positive");
    if (positives.rows == 0) throw std::invalid_argument("infonce_loss: empty positive set");
    std::fill(query_grad.begin(), query_grad.end(), 0.0);
    const double tau = cfg.temperature;

    std::vector<double> sp(positives.rows), sn(negatives.rows);
    for (std::size_t i = 0; i < positives.rows; ++i) sp[i] = dot(query, positives.row(i)) / tau;
    for (std::size_t i = 0; i < negatives.rows; ++i) sn[i] = dot(query, negatives.row(i)) / tau;

    std::vector<std::size_t> mined(negatives.rows);
    std::iota(mined.begin(), mined.end(), std::size_t{0});
    if (cfg.hard_mining)
        mined = top_by_similarity(sn, static_cast<std::size_t>(cfg.hard_count));

    // logsumexp over the key set (all positives plus the kept negatives).
    double shift = sp[0];
    for (double s : sp) shift = std::max(shift, s);
    for (std::size_t i : mined) shift = std::max(shift, sn[i]);
    double z = 0.0;
    for (double s : sp) z += std::exp(s - shift);
    double z_pos = z;
    for (std::size_t i : mined) z += std::exp(sn[i] - shift);
    double log_z = shift + std::log(z);

    double loss = 0.0;
    double pos_weight = 0.0;  // coefficient on the softmax mean of keys
    switch (cfg.variant) {
        case InfoNceConfig::Variant::single:
            loss = -sp[0] + log_z;
            pos_weight = 1.0;
            break;
        case InfoNceConfig::Variant::multi_in:
            loss = -(shift + std::log(z_pos)) + log_z;
            pos_weight = 1.0;
            break;
        case InfoNceConfig::Variant::multi_out:
            for (double s : sp) loss += -s + log_z;
            pos_weight = static_cast<double>(positives.rows);
            break;
    }

    if (!query_grad.empty()) {
        auto add_scaled = [&](std::span<const double> v, double c) {
            for (std::size_t k = 0; k < query_grad.size(); ++k) query_grad[k] += c * v[k];
        };
        // d(log_z)/dq = sum_k softmax_k * k / tau, entering pos_weight times.
        for (std::size_t i = 0; i < positives.rows; ++i)
            add_scaled(positives.row(i), pos_weight * std::exp(sp[i] - shift) / z / tau);
        for (std::size_t i : mined)
            add_scaled(negatives.row(i), pos_weight * std::exp(sn[i] - shift) / z / tau);
        // The positive-side terms.
        if (cfg.variant == InfoNceConfig::Variant::single) {
            add_scaled(positives.row(0), -1.0 / tau);
        } else if (cfg.variant == InfoNceConfig::Variant::multi_in) {
            for (std::size_t i = 0; i < positives.rows; ++i)
                add_scaled(positives.row(i), -std::exp(sp[i] - shift) / z_pos / tau);
        } else {
            for (std::size_t i = 0; i < positives.rows; ++i)
                add_scaled(positives.row(i), -1.0 / tau);
        }
    }
    return loss;
}

double infonce_loss(std::span<const double> query, const EmbeddingMatrix& positives,
                    const EmbeddingMatrix& negatives, const InfoNceConfig& cfg) {
    return infonce_loss_grad(query, positives, negatives, cfg, {});
}

}  // namespace heml
