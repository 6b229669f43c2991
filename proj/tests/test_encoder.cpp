#include <doctest.h>

#include <cmath>
#include <sstream>

#include "heml/encoder.hpp"
#include "heml/rng.hpp"
#include "oracles.hpp"

using namespace heml;

namespace {

EncoderParams random_params(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                            std::size_t embed_dim, std::size_t num_ids, std::uint64_t seed) {
    Rng rng(seed);
    return EncoderParams::init(input_dim, hidden, embed_dim, num_ids, rng);
}

// naive re-implementation of the forward pass with independent loop structure
EmbeddingMatrix forward_oracle(const EncoderParams& p, const EmbeddingMatrix& x) {
    EmbeddingMatrix cur = x;
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        const auto& layer = p.layers[l];
        EmbeddingMatrix next(cur.rows, layer.out_dim());
        for (std::size_t r = 0; r < cur.rows; ++r)
            for (std::size_t j = 0; j < layer.out_dim(); ++j) {
                double acc = layer.bias[j];
                for (std::size_t i = 0; i < layer.in_dim(); ++i)
                    acc += cur.row(r)[i] * layer.weight.row(i)[j];
                bool last = l + 1 == p.layers.size();
                next.row(r)[j] = last ? acc : (acc > 0.0 ? acc : 0.0);
            }
        cur = next;
    }
    return cur;
}

double total_loss(const EncoderParams& p, const EmbeddingMatrix& x,
                  const std::vector<IdentityLabel>& labels) {
    // scalar probe loss: sum of embeddings plus identity cross-entropy
    EmbeddingMatrix e = encode(p, x);
    double loss = 0.0;
    for (double v : e.data) loss += v;
    EmbeddingMatrix logits = id_logits(p, e);
    for (std::size_t r = 0; r < logits.rows; ++r)
        loss += id_cross_entropy(logits.row(r), labels[r]);
    return loss;
}

}  // namespace

TEST_CASE("encode: identity layer and zero weights") {
    EncoderParams p;
    LinearLayer layer;
    layer.weight = EmbeddingMatrix(2, 2, {1.0, 0.0, 0.0, 1.0});
    layer.bias = {0.0, 0.0};
    p.layers.push_back(layer);
    p.id_head.weight = EmbeddingMatrix(2, 3);
    p.id_head.bias = {0.0, 0.0, 0.0};

    EmbeddingMatrix x(2, 2, {1.5, -2.0, 0.25, 4.0});
    auto y = encode(p, x);
    CHECK(y.data == x.data);

    p.layers[0].weight = EmbeddingMatrix(2, 2);  // zeros
    p.layers[0].bias = {3.0, -1.0};
    auto b = encode(p, x);
    CHECK(b.row(0)[0] == 3.0);
    CHECK(b.row(0)[1] == -1.0);
    CHECK(b.row(1)[0] == 3.0);
    CHECK(b.row(1)[1] == -1.0);

    EmbeddingMatrix bad(1, 3);
    CHECK_THROWS_AS(encode(p, bad), std::invalid_argument);
}

TEST_CASE("encode matches an independently coded matrix-multiply chain to 1e-12") {
    Rng rng(50);
    auto p = random_params(6, {10, 7}, 4, 5, 51);
    auto x = oracle::random_matrix(rng, 9, 6);
    auto fast = encode(p, x);
    auto slow = forward_oracle(p, x);
    REQUIRE(fast.rows == slow.rows);
    for (std::size_t i = 0; i < fast.data.size(); ++i)
        CHECK(fast.data[i] == doctest::Approx(slow.data[i]).epsilon(1e-12));
}

TEST_CASE("ema_update: m=0 copies, small m moves proportionally") {
    auto main = random_params(4, {5}, 3, 4, 52);
    auto ema = random_params(4, {5}, 3, 4, 53);

    auto ema0 = ema;
    ema_update(main, ema0, MomentumConfig{0.0});
    CHECK(ema0.layers[0].weight.data == main.layers[0].weight.data);
    CHECK(ema0.id_head.bias == main.id_head.bias);

    auto ema999 = ema;
    ema_update(main, ema999, MomentumConfig{0.999});
    for (std::size_t i = 0; i < 5; ++i) {
        double expected =
            0.999 * ema.layers[0].weight.data[i] + 0.001 * main.layers[0].weight.data[i];
        CHECK(ema999.layers[0].weight.data[i] == doctest::Approx(expected).epsilon(1e-15));
    }

    CHECK_THROWS_AS(ema_update(main, ema999, MomentumConfig{1.0}), std::invalid_argument);
    auto wrong_shape = random_params(4, {6}, 3, 4, 54);
    CHECK_THROWS_AS(ema_update(main, wrong_shape, MomentumConfig{0.9}), std::invalid_argument);
}

TEST_CASE("ema gap closes geometrically: |gap_k| = m^k |gap_0| with frozen main") {
    auto main = random_params(4, {5}, 3, 4, 55);
    auto ema = random_params(4, {5}, 3, 4, 56);
    const double m = 0.9;

    auto gap_norm = [&](const EncoderParams& a, const EncoderParams& b) {
        double s = 0.0;
        for (std::size_t l = 0; l < a.layers.size(); ++l)
            for (std::size_t i = 0; i < a.layers[l].weight.data.size(); ++i) {
                double d = a.layers[l].weight.data[i] - b.layers[l].weight.data[i];
                s += d * d;
            }
        return std::sqrt(s);
    };

    double gap0 = gap_norm(main, ema);
    for (int k = 1; k <= 100; ++k) {
        ema_update(main, ema, MomentumConfig{m});
        double expected = std::pow(m, k) * gap0;
        CHECK(gap_norm(main, ema) == doctest::Approx(expected).epsilon(1e-9));
    }
}

TEST_CASE("backward: zero upstream gives zero gradients; sum-loss gives outer products") {
    auto p = random_params(3, {}, 2, 4, 57);
    Rng rng(58);
    auto x = oracle::random_matrix(rng, 5, 3);
    ForwardCache cache;
    encode(p, x, cache);

    auto zero_grads =
        backward(p, cache, EmbeddingMatrix(5, 2), EmbeddingMatrix(5, 4));
    CHECK(zero_grads.squared_norm() == 0.0);

    // loss = sum of outputs of a single linear layer: dW = sum_r x_r (outer) 1
    EmbeddingMatrix ones(5, 2);
    for (auto& v : ones.data) v = 1.0;
    auto grads = backward(p, cache, ones, EmbeddingMatrix(0, 0));
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
            double expected = 0.0;
            for (std::size_t r = 0; r < 5; ++r) expected += x.row(r)[i];
            CHECK(grads.layers[0].weight.row(i)[j] == doctest::Approx(expected).epsilon(1e-12));
        }
    for (std::size_t j = 0; j < 2; ++j)
        CHECK(grads.layers[0].bias[j] == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("backward matches finite differences across the layer-count / width matrix") {
    const std::vector<std::size_t> dims = {4, 16, 64};
    const double h = 1e-6;
    Rng data_rng(59);
    std::uint64_t seed = 60;
    for (std::size_t n_layers = 1; n_layers <= 3; ++n_layers) {
        for (std::size_t dim : dims) {
            std::vector<std::size_t> hidden(n_layers - 1, dim);
            auto p = random_params(dim, hidden, dim, 5, seed++);
            auto x = oracle::random_matrix(data_rng, 4, dim);
            std::vector<IdentityLabel> labels = {IdentityLabel(0), IdentityLabel(2),
                                                 IdentityLabel(4), IdentityLabel(1)};

            // analytic gradients for the probe loss
            ForwardCache cache;
            EmbeddingMatrix e = encode(p, x, cache);
            EmbeddingMatrix ones(e.rows, e.dim);
            for (auto& v : ones.data) v = 1.0;
            EmbeddingMatrix logits = id_logits(p, e);
            EmbeddingMatrix dlogits(logits.rows, logits.dim);
            for (std::size_t r = 0; r < logits.rows; ++r)
                id_cross_entropy(logits.row(r), labels[r], dlogits.row(r));
            auto grads = backward(p, cache, ones, dlogits);

            // rectifier kinks make the loss non-differentiable; only probe
            // parameters whose +/- h perturbation keeps every activation sign
            auto activation_pattern = [&]() {
                ForwardCache c;
                encode(p, x, c);
                std::vector<char> pattern;
                for (std::size_t l = 0; l + 1 < p.layers.size(); ++l)
                    for (double v : c.pre_activations[l].data)
                        pattern.push_back(v > 0.0 ? 1 : 0);
                return pattern;
            };
            auto stable_at = [&](double* theta) {
                double saved = *theta;
                auto base = activation_pattern();
                *theta = saved + h;
                bool ok = activation_pattern() == base;
                *theta = saved - h;
                ok = ok && activation_pattern() == base;
                *theta = saved;
                return ok;
            };

            // a deterministic subset of parameters per layer keeps this quick
            std::size_t probed = 0;
            auto check_param = [&](double* theta, double analytic) {
                if (!stable_at(theta)) return;
                ++probed;
                double saved = *theta;
                auto f = [&](double v) {
                    *theta = v;
                    double l = total_loss(p, x, labels);
                    *theta = saved;
                    return l;
                };
                double fd = oracle::central_diff(f, saved, h);
                CHECK(std::abs(fd - analytic) <=
                      1e-4 * std::max({std::abs(fd), std::abs(analytic), 1e-6}));
            };
            for (std::size_t l = 0; l < p.layers.size(); ++l) {
                auto& w = p.layers[l].weight.data;
                for (std::size_t i = 0; i < w.size(); i += std::max<std::size_t>(w.size() / 7, 1))
                    check_param(&w[i], grads.layers[l].weight.data[i]);
                check_param(&p.layers[l].bias[0], grads.layers[l].bias[0]);
            }
            auto& hw = p.id_head.weight.data;
            for (std::size_t i = 0; i < hw.size(); i += std::max<std::size_t>(hw.size() / 7, 1))
                check_param(&hw[i], grads.id_head.weight.data[i]);
            check_param(&p.id_head.bias[1], grads.id_head.bias[1]);
            CHECK(probed >= 10);
        }
    }
}

TEST_CASE("id_cross_entropy: uniform logits, peaked logits, direct formula") {
    std::vector<double> uniform(7, 0.42);
    CHECK(id_cross_entropy(uniform, IdentityLabel(3)) ==
          doctest::Approx(std::log(7.0)).epsilon(1e-12));

    std::vector<double> peaked(5, 0.0);
    peaked[2] = 60.0;
    CHECK(id_cross_entropy(peaked, IdentityLabel(2)) == doctest::Approx(0.0).epsilon(1e-10));

    Rng rng(61);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<double> logits(6);
        for (auto& v : logits) v = rng.normal(0.0, 2.0);
        IdentityLabel label(static_cast<std::uint32_t>(rng.uniform_index(6)));
        double z = 0.0;
        for (double v : logits) z += std::exp(v);
        double expected = -std::log(std::exp(logits[label.id]) / z);
        CHECK(id_cross_entropy(logits, label) == doctest::Approx(expected).epsilon(1e-12));
    }

    CHECK_THROWS_AS(id_cross_entropy(uniform, IdentityLabel(7)), std::invalid_argument);

    // gradient = softmax - onehot
    std::vector<double> logits{1.0, 2.0, 0.5};
    std::vector<double> grad(3);
    id_cross_entropy(logits, IdentityLabel(1), grad);
    double z = std::exp(1.0) + std::exp(2.0) + std::exp(0.5);
    CHECK(grad[0] == doctest::Approx(std::exp(1.0) / z).epsilon(1e-12));
    CHECK(grad[1] == doctest::Approx(std::exp(2.0) / z - 1.0).epsilon(1e-12));
    CHECK(grad[2] == doctest::Approx(std::exp(0.5) / z).epsilon(1e-12));
}

TEST_CASE("checkpoint round-trip is bit-exact and carries the MRCK header") {
    auto p = random_params(6, {8, 5}, 4, 9, 62);
    std::stringstream buf;
    save_checkpoint(p, buf);
    std::string bytes = buf.str();
    CHECK(bytes.substr(0, 4) == "MRCK");
    CHECK(static_cast<unsigned char>(bytes[4]) == 4);  // 3 MLP layers + id head

    auto loaded = load_checkpoint(buf);
    REQUIRE(loaded.layers.size() == p.layers.size());
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        CHECK(loaded.layers[l].weight.data == p.layers[l].weight.data);
        CHECK(loaded.layers[l].bias == p.layers[l].bias);
    }
    CHECK(loaded.id_head.weight.data == p.id_head.weight.data);
    CHECK(loaded.id_head.bias == p.id_head.bias);
}
