#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "heml/trainer.hpp"
#include "oracles.hpp"

using namespace heml;

namespace {

Dataset tiny_dataset(std::size_t num_ids = 8, std::size_t samples = 8, std::uint64_t seed = 1) {
    SynthConfig cfg;
    cfg.num_ids = num_ids;
    cfg.samples_per_id = samples;
    cfg.input_dim = 8;
    cfg.noise_sigma = 0.4;
    cfg.seed = seed;
    return generate(cfg);
}

TrainConfig smoke_config() {
    TrainConfig cfg;
    cfg.epochs = 50;  // 8x8 dataset, 4x4 batches -> 4 steps/epoch -> 200 steps
    cfg.groups_c = 4;
    cfg.per_group_n = 4;
    cfg.base_lr = 0.05;
    cfg.dict_capacity = 64;
    cfg.hidden_dims = {16};
    cfg.embed_dim = 8;
    cfg.seed = 7;
    return cfg;
}

}  // namespace

TEST_CASE("sample_batch: shape, label multiplicity, determinism, errors") {
    Dataset ds = tiny_dataset(16, 16);
    Rng rng1 = Rng(5).substream("sampler");
    Rng rng2 = Rng(5).substream("sampler");
    auto a = sample_batch(ds, 16, 16, rng1);
    auto b = sample_batch(ds, 16, 16, rng2);
    CHECK(a.features.rows == 256);
    CHECK(a.features.data == b.features.data);  // deterministic under the seed

    std::map<std::uint32_t, int> counts;
    for (auto l : a.labels) ++counts[l.id];
    CHECK(counts.size() == 16);
    for (const auto& [id, n] : counts) CHECK(n == 16);

    // within a group the N samples are drawn without replacement
    for (std::size_t g = 0; g < a.groups; ++g) {
        std::set<std::vector<double>> unique_rows;
        for (std::size_t i = 0; i < a.per_group; ++i) {
            auto row = a.features.row(g * a.per_group + i);
            unique_rows.insert(std::vector<double>(row.begin(), row.end()));
        }
        CHECK(unique_rows.size() == a.per_group);
    }

    CHECK_THROWS_AS(sample_batch(ds, 17, 4, rng1), std::invalid_argument);
    CHECK_THROWS_AS(sample_batch(ds, 4, 17, rng1), std::invalid_argument);
}

TEST_CASE("lr_schedule: flat first half, cosine to zero") {
    const double base = 0.8;
    CHECK(lr_schedule(0, 100, base) == base);
    CHECK(lr_schedule(49, 100, base) == base);
    CHECK(lr_schedule(50, 100, base) == base);  // cosine starts here at cos(0)
    CHECK(lr_schedule(75, 100, base) == doctest::Approx(base / 2.0).epsilon(1e-12));
    CHECK(lr_schedule(100, 100, base) == 0.0);

    double prev = base;
    for (std::size_t s = 0; s <= 100; ++s) {
        double lr = lr_schedule(s, 100, base);
        CHECK(lr <= prev + 1e-15);
        prev = lr;
    }
    // continuity at the midpoint
    CHECK(lr_schedule(50, 100, base) == doctest::Approx(lr_schedule(49, 100, base)).epsilon(1e-12));
}

TEST_CASE("optimal_lr_for_size anchors") {
    CHECK(optimal_lr_for_size(3e5) == 0.02);  // exact: numerator == denominator
    double veri776 = optimal_lr_for_size(37775);
    CHECK(veri776 == doctest::Approx(0.0104012012909).epsilon(1e-9));
    CHECK(veri776 >= 0.0100);
    CHECK(veri776 <= 0.0108);
    // log-space midpoint: s = 4e3 * sqrt(75)
    CHECK(optimal_lr_for_size(4e3 * std::sqrt(75.0)) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK_THROWS_AS(optimal_lr_for_size(4000.0), std::domain_error);
    CHECK_THROWS_AS(optimal_lr_for_size(10.0), std::domain_error);
}

TEST_CASE("sgd_update matches the scalar reference formula") {
    Rng rng(70);
    auto p = EncoderParams::init(3, {4}, 2, 5, rng);
    auto grads = EncoderGrads::zeros_like(p);
    auto velocity = EncoderGrads::zeros_like(p);
    for (auto& v : grads.layers[0].weight.data) v = rng.normal(0.0, 1.0);
    for (auto& v : grads.layers[0].bias) v = rng.normal(0.0, 1.0);

    const double lr = 0.1, mu = 0.9, wd = 0.0005;
    // scalar oracle over two consecutive updates
    double theta = p.layers[0].weight.data[0];
    double g = grads.layers[0].weight.data[0];
    double v_ref = 0.0;
    double theta_ref = theta;
    for (int step = 0; step < 2; ++step) {
        v_ref = mu * v_ref + g + wd * theta_ref;
        theta_ref -= lr * v_ref;
    }
    double bias_ref = p.layers[0].bias[0];
    double bias_g = grads.layers[0].bias[0];
    double bias_v = 0.0;
    for (int step = 0; step < 2; ++step) {
        bias_v = mu * bias_v + bias_g;  // no decay on biases
        bias_ref -= lr * bias_v;
    }

    sgd_update(p, grads, velocity, lr, mu, wd);
    sgd_update(p, grads, velocity, lr, mu, wd);
    CHECK(p.layers[0].weight.data[0] == doctest::Approx(theta_ref).epsilon(1e-15));
    CHECK(p.layers[0].bias[0] == doctest::Approx(bias_ref).epsilon(1e-15));
}

TEST_CASE("train_step with zero learning rate leaves main and EMA untouched") {
    TrainConfig cfg = smoke_config();
    cfg.base_lr = 1e-300;  // must be > 0; indistinguishable from zero for params
    Trainer trainer(cfg, tiny_dataset());
    auto before = trainer.params();
    auto ema_before = trainer.ema_params();
    CHECK(before.layers[0].weight.data == ema_before.layers[0].weight.data);

    trainer.step();
    // 1e-300 * finite velocity underflows to exactly 0 in the subtraction
    CHECK(trainer.params().layers[0].weight.data == before.layers[0].weight.data);
    CHECK(trainer.ema_params().layers[0].weight.data == before.layers[0].weight.data);
}

TEST_CASE("one step moves the EMA twin by exactly the momentum blend") {
    TrainConfig cfg = smoke_config();
    cfg.ema_momentum = 0.997;
    Trainer trainer(cfg, tiny_dataset());
    auto ema_before = trainer.ema_params();
    trainer.step();
    const auto& main_after = trainer.params();
    const auto& ema_after = trainer.ema_params();
    for (std::size_t l = 0; l < main_after.layers.size(); ++l)
        for (std::size_t i = 0; i < main_after.layers[l].weight.data.size(); ++i) {
            double expected = 0.997 * ema_before.layers[l].weight.data[i] +
                              (1.0 - 0.997) * main_after.layers[l].weight.data[i];
            CHECK(ema_after.layers[l].weight.data[i] == expected);
        }
}

TEST_CASE("the forward-only encoder is mutated only by its momentum update") {
    // run the step pieces by hand: everything except ema_update must leave
    // the twin bitwise unchanged
    TrainConfig cfg = smoke_config();
    Dataset ds = tiny_dataset();
    Trainer trainer(cfg, ds);
    auto ema_snapshot = trainer.ema_params();

    Rng rng = Rng(cfg.seed).substream("probe");
    auto batch = sample_batch(ds, cfg.groups_c, cfg.per_group_n, rng);
    ForwardCache cache;
    auto p = trainer.params();
    EmbeddingMatrix q = encode(p, batch.features, cache);
    EmbeddingMatrix ones(q.rows, q.dim);
    for (auto& v : ones.data) v = 1.0;
    auto grads = backward(p, cache, ones, EmbeddingMatrix(0, 0));
    auto velocity = EncoderGrads::zeros_like(p);
    sgd_update(p, grads, velocity, 0.1, 0.9, 0.0005);

    CHECK(trainer.ema_params().layers[0].weight.data == ema_snapshot.layers[0].weight.data);
    CHECK(trainer.ema_params().id_head.weight.data == ema_snapshot.id_head.weight.data);
}

TEST_CASE("200-step smoke run: loss drops and the stream is reproducible bitwise") {
    TrainConfig cfg = smoke_config();
    Trainer a(cfg, tiny_dataset());
    auto metrics_a = a.run();
    REQUIRE(metrics_a.size() == 200);

    // HE batch loss at the end is below the starting loss
    double head = 0.0, tail = 0.0;
    for (int i = 0; i < 10; ++i) {
        head += metrics_a[i].loss_he;
        tail += metrics_a[metrics_a.size() - 1 - i].loss_he;
    }
    CHECK(tail < head);

    Trainer b(cfg, tiny_dataset());
    auto metrics_b = b.run();
    REQUIRE(metrics_b.size() == metrics_a.size());
    for (std::size_t i = 0; i < metrics_a.size(); ++i) {
        CHECK(metrics_a[i].loss_he == metrics_b[i].loss_he);
        CHECK(metrics_a[i].loss_id == metrics_b[i].loss_id);
        CHECK(metrics_a[i].grad_norm == metrics_b[i].grad_norm);
        CHECK(metrics_a[i].lr == metrics_b[i].lr);
    }
    CHECK(a.params().layers[0].weight.data == b.params().layers[0].weight.data);
}

TEST_CASE("dictionary age invariant: capacity b*batch holds the min(k, b) newest batches") {
    TrainConfig cfg = smoke_config();
    cfg.dict_capacity = 3 * 16;  // b = 3 batches of C*N = 16
    Trainer trainer(cfg, tiny_dataset());
    for (int k = 1; k <= 7; ++k) {
        trainer.step();
        CHECK(trainer.dictionary().count() ==
              std::min<std::size_t>(static_cast<std::size_t>(k) * 16, 48));
        // entries span exactly the min(k, 3) most recent batch sequence numbers
        std::set<std::uint64_t> seqs;
        for (std::size_t i = 0; i < trainer.dictionary().count(); ++i)
            seqs.insert(trainer.dictionary().batch_seq_of(i));
        CHECK(seqs.size() == std::min<std::size_t>(k, 3));
        CHECK(*seqs.rbegin() == trainer.dictionary().current_batch_seq());
    }
}

TEST_CASE("every configured loss kind trains without error") {
    for (LossKind kind :
         {LossKind::he, LossKind::tri_all, LossKind::tri_hard, LossKind::npair,
          LossKind::ranked_list, LossKind::infonce_in, LossKind::infonce_out}) {
        TrainConfig cfg = smoke_config();
        cfg.epochs = 2;
        cfg.loss = kind;
        cfg.hard_count = 10;
        Trainer trainer(cfg, tiny_dataset());
        auto metrics = trainer.run();
        CHECK(metrics.size() == 8);
        for (const auto& m : metrics) CHECK(std::isfinite(m.loss_he));
    }

    // infonce_single demands one positive per query (N == 2)
    TrainConfig bad = smoke_config();
    bad.loss = LossKind::infonce_single;
    CHECK_THROWS_AS(Trainer(bad, tiny_dataset()), std::invalid_argument);
    TrainConfig ok = smoke_config();
    ok.loss = LossKind::infonce_single;
    ok.per_group_n = 2;
    ok.epochs = 2;
    Trainer single(ok, tiny_dataset());
    CHECK(single.run().size() == 16);  // 8-row batches over 64 samples, 2 epochs
}

TEST_CASE("degenerate geometry: retry with noise rescues the step") {
    // identity 0 and identity 1 share an identical input row, so their
    // embeddings coincide exactly and the colliding negative sits at
    // distance zero from the query
    Dataset ds;
    ds.num_ids = 2;
    ds.inputs = EmbeddingMatrix(4, 2, {1.0, 2.0, 3.0, 4.0, 1.0, 2.0, 5.0, 6.0});
    ds.labels = {IdentityLabel(0), IdentityLabel(0), IdentityLabel(1), IdentityLabel(1)};

    TrainConfig cfg;
    cfg.groups_c = 2;
    cfg.per_group_n = 2;
    cfg.dict_capacity = 4;
    cfg.epochs = 1;
    cfg.base_lr = 0.01;
    cfg.hidden_dims = {};
    cfg.embed_dim = 3;
    cfg.seed = 3;
    Trainer trainer(cfg, ds);
    auto metrics = trainer.step();
    CHECK(metrics.has_value());  // the 1e-8 perturbation resolved the collision
    CHECK(std::isfinite(metrics->loss_he));
    CHECK(std::isfinite(metrics->grad_norm));
}

TEST_CASE("momentum m=0 keeps the EMA equal to main after every step") {
    TrainConfig cfg = smoke_config();
    cfg.ema_momentum = 0.0;
    cfg.epochs = 2;
    Trainer trainer(cfg, tiny_dataset());
    for (int i = 0; i < 8; ++i) {
        trainer.step();
        CHECK(trainer.ema_params().layers[0].weight.data ==
              trainer.params().layers[0].weight.data);
    }
}
