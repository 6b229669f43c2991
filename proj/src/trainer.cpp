#include "heml/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

namespace heml {

LossKind loss_from_string(const std::string& name) {
    if (name == "he") return LossKind::he;
    if (name == "tri_all") return LossKind::tri_all;
    if (name == "tri_hard") return LossKind::tri_hard;
    if (name == "npair") return LossKind::npair;
    if (name == "ranked_list") return LossKind::ranked_list;
    if (name == "infonce_single") return LossKind::infonce_single;
    if (name == "infonce_in") return LossKind::infonce_in;
    if (name == "infonce_out") return LossKind::infonce_out;
    throw std::invalid_argument("unknown loss: " + name);
}

std::string to_string(LossKind kind) {
    switch (kind) {
        case LossKind::he: return "he";
        case LossKind::tri_all: return "tri_all";
        case LossKind::tri_hard: return "tri_hard";
        case LossKind::npair: return "npair";
        case LossKind::ranked_list: return "ranked_list";
        case LossKind::infonce_single: return "infonce_single";
        case LossKind::infonce_in: return "infonce_in";
        case LossKind::infonce_out: return "infonce_out";
    }
    return "?";
}

void TrainConfig::validate() const {
    if (groups_c < 2 || per_group_n < 2)
        throw std::invalid_argument("TrainConfig: need groups_c >= 2 and per_group_n >= 2");
    if (!(base_lr > 0.0)) throw std::invalid_argument("TrainConfig: base_lr must be > 0");
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (!(ema_momentum >= 0.0 && ema_momentum < 1.0))
        throw std::invalid_argument("TrainConfig: ema_momentum must be in [0, 1)");
    if (!(sgd_momentum >= 0.0 && sgd_momentum < 1.0))
        throw std::invalid_argument("TrainConfig: sgd_momentum must be in [0, 1)");
    if (weight_decay < 0.0) throw std::invalid_argument("TrainConfig: weight_decay must be >= 0");
    if (dict_capacity < groups_c * per_group_n)
        throw std::invalid_argument("TrainConfig: dict_capacity must hold at least one batch");
    if (embed_dim == 0) throw std::invalid_argument("TrainConfig: embed_dim must be > 0");
    if (triplet_margin < 0.0)
        throw std::invalid_argument("TrainConfig: triplet_margin must be >= 0");
    if (!(infonce_temperature > 0.0))
        throw std::invalid_argument("TrainConfig: infonce_temperature must be > 0");
    if (hard_count < 1) throw std::invalid_argument("TrainConfig: hard_count must be >= 1");
    if (loss == LossKind::infonce_single && per_group_n != 2)
        throw std::invalid_argument(
            "TrainConfig: infonce_single needs per_group_n == 2 (one positive per query)");
}

double lr_schedule(std::size_t step, std::size_t total_steps, double base_lr) {
    if (total_steps == 0) throw std::invalid_argument("lr_schedule: total_steps must be > 0");
    double half = static_cast<double>(total_steps) / 2.0;
    double s = static_cast<double>(step);
    if (s < half) return base_lr;
    if (step >= total_steps) return 0.0;
    return base_lr * 0.5 * (1.0 + std::cos(M_PI * (s - half) / half));
}

double optimal_lr_for_size(double dataset_size) {
    if (!(dataset_size > 4e3))
        throw std::domain_error("optimal_lr_for_size: dataset size must exceed 4e3");
    return 0.02 * (std::log(dataset_size) - std::log(4e3)) / (std::log(3e5) - std::log(4e3));
}

GroupedBatch sample_batch(const Dataset& dataset, std::size_t groups_c,
                          std::size_t per_group_n, Rng& rng) {
    std::vector<std::vector<std::size_t>> rows_by_id(dataset.num_ids);
    for (std::size_t i = 0; i < dataset.labels.size(); ++i)
        rows_by_id[dataset.labels[i].id].push_back(i);

    std::vector<std::size_t> eligible;
    for (std::size_t id = 0; id < rows_by_id.size(); ++id)
        if (rows_by_id[id].size() >= per_group_n) eligible.push_back(id);
    if (eligible.size() < groups_c)
        throw std::invalid_argument("sample_batch: fewer than C identities with N samples");

    // Partial Fisher-Yates: first C entries become the chosen identities.
    for (std::size_t i = 0; i < groups_c; ++i) {
        std::size_t j = i + rng.uniform_index(eligible.size() - i);
        std::swap(eligible[i], eligible[j]);
    }

    GroupedBatch batch;
    batch.groups = groups_c;
    batch.per_group = per_group_n;
    batch.features = EmbeddingMatrix(groups_c * per_group_n, dataset.inputs.dim);
    batch.labels.reserve(groups_c * per_group_n);
    std::size_t row = 0;
    for (std::size_t g = 0; g < groups_c; ++g) {
        auto& candidates = rows_by_id[eligible[g]];
        for (std::size_t i = 0; i < per_group_n; ++i) {
            std::size_t j = i + rng.uniform_index(candidates.size() - i);
            std::swap(candidates[i], candidates[j]);
        }
        for (std::size_t i = 0; i < per_group_n; ++i, ++row) {
            batch.features.set_row(row, dataset.inputs.row(candidates[i]));
            batch.labels.push_back(dataset.labels[candidates[i]]);
        }
    }
    batch.validate();
    return batch;
}

void sgd_update(EncoderParams& params, const EncoderGrads& grads, EncoderGrads& velocity,
                double lr, double momentum, double weight_decay) {
    auto update = [&](std::vector<double>& theta, const std::vector<double>& g,
                      std::vector<double>& v, double decay) {
        for (std::size_t i = 0; i < theta.size(); ++i) {
            v[i] = momentum * v[i] + g[i] + decay * theta[i];
            theta[i] -= lr * v[i];
        }
    };
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        update(params.layers[l].weight.data, grads.layers[l].weight.data,
               velocity.layers[l].weight.data, weight_decay);
        update(params.layers[l].bias, grads.layers[l].bias, velocity.layers[l].bias, 0.0);
    }
    update(params.id_head.weight.data, grads.id_head.weight.data, velocity.id_head.weight.data,
           weight_decay);
    update(params.id_head.bias, grads.id_head.bias, velocity.id_head.bias, 0.0);
}

Trainer::Trainer(TrainConfig cfg, Dataset dataset)
    : cfg_(cfg),
      dataset_(std::move(dataset)),
      main_(EncoderParams()),
      ema_(EncoderParams()),
      dict_(cfg.dict_capacity, cfg.embed_dim),
      sampler_rng_(Rng(cfg.seed).substream("sampler")),
      noise_rng_(Rng(cfg.seed).substream("degenerate-noise")) {
    cfg_.validate();
    std::size_t batch_size = cfg_.groups_c * cfg_.per_group_n;
    steps_per_epoch_ = dataset_.size() / batch_size;  // partial batches dropped
    if (steps_per_epoch_ == 0)
        throw std::invalid_argument("Trainer: dataset smaller than one C x N batch");

    Rng init_rng = Rng(cfg_.seed).substream("init");
    main_ = EncoderParams::init(dataset_.inputs.dim, cfg_.hidden_dims, cfg_.embed_dim,
                                dataset_.num_ids, init_rng);
    ema_ = main_;  // forward-only twin starts as a copy
    velocity_ = EncoderGrads::zeros_like(main_);
}

double Trainer::metric_loss_and_grad(std::span<const double> query, const LabeledSets& sets,
                                     std::span<double> query_grad) const {
    switch (cfg_.loss) {
        case LossKind::he: {
            EmbeddingMatrix one_row(1, query.size());
            one_row.set_row(0, query);
            HeLossGradient g =
                he_loss_gradient(0, one_row, sets.positives, sets.negatives, cfg_.metric);
            std::copy(g.query.begin(), g.query.end(), query_grad.begin());
            return g.boundary.loss;
        }
        case LossKind::tri_all:
        case LossKind::tri_hard: {
            TripletConfig tc;
            tc.margin = cfg_.triplet_margin;
            tc.mining = cfg_.loss == LossKind::tri_hard ? TripletConfig::Mining::hard
                                                        : TripletConfig::Mining::all;
            return triplet_loss_grad(query, sets.positives, sets.negatives, tc, cfg_.metric,
                                     query_grad);
        }
        case LossKind::npair:
            return npair_loss_grad(query, sets.positives, sets.negatives, cfg_.hard_count,
                                   query_grad);
        case LossKind::ranked_list:
            return ranked_list_loss_grad(query, sets.positives, sets.negatives, cfg_.ranked_list,
                                         cfg_.metric, query_grad);
        case LossKind::infonce_single:
        case LossKind::infonce_in:
        case LossKind::infonce_out: {
            InfoNceConfig ic;
            ic.temperature = cfg_.infonce_temperature;
            ic.hard_mining = cfg_.infonce_hard_mining;
            ic.hard_count = cfg_.hard_count;
            ic.variant = cfg_.loss == LossKind::infonce_single
                             ? InfoNceConfig::Variant::single
                             : (cfg_.loss == LossKind::infonce_in
                                    ? InfoNceConfig::Variant::multi_in
                                    : InfoNceConfig::Variant::multi_out);
            return infonce_loss_grad(query, sets.positives, sets.negatives, ic, query_grad);
        }
    }
    throw std::logic_error("metric_loss_and_grad: unhandled loss kind");
}

std::optional<StepMetrics> Trainer::step() {
    const std::size_t batch_size = cfg_.groups_c * cfg_.per_group_n;
    const double lr = lr_schedule(step_, total_steps(), cfg_.base_lr);

    GroupedBatch batch = sample_batch(dataset_, cfg_.groups_c, cfg_.per_group_n, sampler_rng_);
    ForwardCache cache;
    EmbeddingMatrix queries = encode(main_, batch.features, cache);
    EmbeddingMatrix keys = encode(ema_, batch.features);
    dict_.enqueue_batch(keys, batch.labels);
    const std::size_t batch_base = dict_.count() - batch_size;

    EmbeddingMatrix embed_grad(queries.rows, queries.dim);
    std::vector<double> query_grad(queries.dim);
    double loss_metric_sum = 0.0;
    std::size_t valid_queries = 0;
    for (std::size_t i = 0; i < batch_size; ++i) {
        LabeledSets sets =
            dict_.label_dictionary(batch.labels[i], batch_base + i, cfg_.include_past_positives);
        if (sets.positives.rows == 0 || sets.negatives.rows == 0) continue;
        double loss;
        try {
            loss = metric_loss_and_grad(queries.row(i), sets, query_grad);
        } catch (const degenerate_geometry_error&) {
            // retry once with noise on the offending embedding, then give up
            auto row = queries.row(i);
            for (auto& v : row) v += noise_rng_.uniform(-1e-8, 1e-8);
            try {
                loss = metric_loss_and_grad(queries.row(i), sets, query_grad);
            } catch (const degenerate_geometry_error&) {
                std::cerr << "trainer: degenerate geometry persisted after retry; "
                             "skipping step " << step_ << "\n";
                ++step_;
                return std::nullopt;
            }
        }
        loss_metric_sum += loss;
        embed_grad.set_row(i, query_grad);
        ++valid_queries;
    }

    double loss_metric = valid_queries > 0
                             ? loss_metric_sum / static_cast<double>(valid_queries)
                             : 0.0;
    if (valid_queries > 0) {
        double inv = 1.0 / static_cast<double>(valid_queries);
        for (auto& v : embed_grad.data) v *= inv;
    }

    EmbeddingMatrix logits = id_logits(main_, queries);
    EmbeddingMatrix logit_grad(logits.rows, logits.dim);
    double loss_id_sum = 0.0;
    for (std::size_t i = 0; i < logits.rows; ++i)
        loss_id_sum += id_cross_entropy(logits.row(i), batch.labels[i], logit_grad.row(i));
    double loss_id = loss_id_sum / static_cast<double>(logits.rows);
    for (auto& v : logit_grad.data) v /= static_cast<double>(logits.rows);

    EncoderGrads grads = backward(main_, cache, embed_grad, logit_grad);
    double grad_norm = std::sqrt(grads.squared_norm());

    sgd_update(main_, grads, velocity_, lr, cfg_.sgd_momentum, cfg_.weight_decay);
    ema_update(main_, ema_, MomentumConfig{cfg_.ema_momentum});

    StepMetrics metrics;
    metrics.step = step_;
    metrics.epoch = step_ / steps_per_epoch_;
    metrics.lr = lr;
    metrics.loss_he = loss_metric;
    metrics.loss_id = loss_id;
    metrics.grad_norm = grad_norm;
    ++step_;
    return metrics;
}

std::vector<StepMetrics> Trainer::run(const MetricsSink& sink) {
    std::vector<StepMetrics> all;
    all.reserve(total_steps());
    while (step_ < total_steps()) {
        auto metrics = step();
        if (!metrics) continue;
        if (sink) sink(*metrics);
        all.push_back(*metrics);
    }
    return all;
}

}  // namespace heml
