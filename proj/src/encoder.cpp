#include "heml/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "binary_io.hpp"

namespace heml {

namespace {

LinearLayer init_layer(std::size_t in_dim, std::size_t out_dim, Rng& rng) {
    LinearLayer layer;
    layer.weight = EmbeddingMatrix(in_dim, out_dim);
    double a = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
    for (auto& w : layer.weight.data) w = rng.uniform(-a, a);
    layer.bias.assign(out_dim, 0.0);
    return layer;
}

// y = x W + b over all rows.
EmbeddingMatrix affine(const EmbeddingMatrix& x, const LinearLayer& layer) {
    if (x.dim != layer.in_dim())
        throw std::invalid_argument("encoder: input dimension mismatch");
    EmbeddingMatrix y(x.rows, layer.out_dim());
    for (std::size_t r = 0; r < x.rows; ++r) {
        auto xin = x.row(r);
        auto yout = y.row(r);
        for (std::size_t j = 0; j < layer.out_dim(); ++j) yout[j] = layer.bias[j];
        for (std::size_t i = 0; i < layer.in_dim(); ++i) {
            double xi = xin[i];
            auto wrow = layer.weight.row(i);
            for (std::size_t j = 0; j < layer.out_dim(); ++j) yout[j] += xi * wrow[j];
        }
    }
    return y;
}

EmbeddingMatrix relu(const EmbeddingMatrix& x) {
    EmbeddingMatrix y = x;
    for (auto& v : y.data) v = std::max(v, 0.0);
    return y;
}

}  // namespace

bool EncoderParams::same_shape(const EncoderParams& other) const {
    if (layers.size() != other.layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i)
        if (layers[i].in_dim() != other.layers[i].in_dim() ||
            layers[i].out_dim() != other.layers[i].out_dim())
            return false;
    return id_head.in_dim() == other.id_head.in_dim() &&
           id_head.out_dim() == other.id_head.out_dim();
}

EncoderParams EncoderParams::init(std::size_t input_dim,
                                  const std::vector<std::size_t>& hidden_dims,
                                  std::size_t embed_dim, std::size_t num_ids, Rng& rng) {
    if (input_dim == 0 || embed_dim == 0 || num_ids == 0)
        throw std::invalid_argument("EncoderParams::init: zero dimension");
    EncoderParams p;
    std::size_t in = input_dim;
    for (std::size_t h : hidden_dims) {
        p.layers.push_back(init_layer(in, h, rng));
        in = h;
    }
    p.layers.push_back(init_layer(in, embed_dim, rng));
    p.id_head = init_layer(embed_dim, num_ids, rng);
    return p;
}

EncoderGrads EncoderGrads::zeros_like(const EncoderParams& params) {
    EncoderGrads g;
    for (const auto& layer : params.layers) {
        LinearLayer zl;
        zl.weight = EmbeddingMatrix(layer.in_dim(), layer.out_dim());
        zl.bias.assign(layer.out_dim(), 0.0);
        g.layers.push_back(std::move(zl));
    }
    g.id_head.weight = EmbeddingMatrix(params.id_head.in_dim(), params.id_head.out_dim());
    g.id_head.bias.assign(params.id_head.out_dim(), 0.0);
    return g;
}

double EncoderGrads::squared_norm() const {
    double sum = 0.0;
    for (const auto& layer : layers) {
        for (double v : layer.weight.data) sum += v * v;
        for (double v : layer.bias) sum += v * v;
    }
    for (double v : id_head.weight.data) sum += v * v;
    for (double v : id_head.bias) sum += v * v;
    return sum;
}

EmbeddingMatrix encode(const EncoderParams& params, const EmbeddingMatrix& inputs,
                       ForwardCache& cache) {
    cache.activations.clear();
    cache.pre_activations.clear();
    cache.activations.push_back(inputs);
    EmbeddingMatrix x = inputs;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        EmbeddingMatrix pre = affine(x, params.layers[l]);
        cache.pre_activations.push_back(pre);
        x = (l + 1 < params.layers.size()) ? relu(pre) : pre;
        cache.activations.push_back(x);
    }
    return x;
}

EmbeddingMatrix encode(const EncoderParams& params, const EmbeddingMatrix& inputs) {
    EmbeddingMatrix x = inputs;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        x = affine(x, params.layers[l]);
        if (l + 1 < params.layers.size()) x = relu(x);
    }
    return x;
}

EmbeddingMatrix id_logits(const EncoderParams& params, const EmbeddingMatrix& embeddings) {
    return affine(embeddings, params.id_head);
}

void ema_update(const EncoderParams& main, EncoderParams& ema, const MomentumConfig& cfg) {
    if (!(cfg.m >= 0.0 && cfg.m < 1.0))
        throw std::invalid_argument("ema_update: momentum must be in [0, 1)");
    if (!main.same_shape(ema)) throw std::invalid_argument("ema_update: shape mismatch");
    const double m = cfg.m;
    const double w = 1.0 - m;
    auto blend = [m, w](const LinearLayer& src, LinearLayer& dst) {
        for (std::size_t i = 0; i < dst.weight.data.size(); ++i)
            dst.weight.data[i] = m * dst.weight.data[i] + w * src.weight.data[i];
        for (std::size_t i = 0; i < dst.bias.size(); ++i)
            dst.bias[i] = m * dst.bias[i] + w * src.bias[i];
    };
    for (std::size_t l = 0; l < main.layers.size(); ++l) blend(main.layers[l], ema.layers[l]);
    blend(main.id_head, ema.id_head);
}

namespace {

// Accumulates dPre through one affine layer: dW += a^T dPre, db += colsum,
// and returns dA = dPre W^T.
EmbeddingMatrix backprop_affine(const EmbeddingMatrix& activation_in, const LinearLayer& layer,
                                const EmbeddingMatrix& d_pre, LinearLayer& grad) {
    for (std::size_t r = 0; r < d_pre.rows; ++r) {
        auto a = activation_in.row(r);
        auto dp = d_pre.row(r);
        for (std::size_t j = 0; j < layer.out_dim(); ++j) grad.bias[j] += dp[j];
        for (std::size_t i = 0; i < layer.in_dim(); ++i) {
            double ai = a[i];
            auto grow = grad.weight.row(i);
            for (std::size_t j = 0; j < layer.out_dim(); ++j) grow[j] += ai * dp[j];
        }
    }
    EmbeddingMatrix d_act(d_pre.rows, layer.in_dim());
    for (std::size_t r = 0; r < d_pre.rows; ++r) {
        auto dp = d_pre.row(r);
        auto da = d_act.row(r);
        for (std::size_t i = 0; i < layer.in_dim(); ++i) {
            auto wrow = layer.weight.row(i);
            double sum = 0.0;
            for (std::size_t j = 0; j < layer.out_dim(); ++j) sum += wrow[j] * dp[j];
            da[i] = sum;
        }
    }
    return d_act;
}

}  // namespace

EncoderGrads backward(const EncoderParams& params, const ForwardCache& cache,
                      const EmbeddingMatrix& upstream_embed_grad,
                      const EmbeddingMatrix& upstream_logit_grad) {
    const EmbeddingMatrix& embeddings = cache.activations.back();
    if (upstream_embed_grad.rows != embeddings.rows ||
        upstream_embed_grad.dim != embeddings.dim)
        throw std::invalid_argument("backward: embedding gradient shape mismatch");
    EncoderGrads grads = EncoderGrads::zeros_like(params);

    EmbeddingMatrix d_embed = upstream_embed_grad;
    if (upstream_logit_grad.rows > 0) {
        if (upstream_logit_grad.rows != embeddings.rows ||
            upstream_logit_grad.dim != params.id_head.out_dim())
            throw std::invalid_argument("backward: logit gradient shape mismatch");
        EmbeddingMatrix d_from_head =
            backprop_affine(embeddings, params.id_head, upstream_logit_grad, grads.id_head);
        for (std::size_t i = 0; i < d_embed.data.size(); ++i)
            d_embed.data[i] += d_from_head.data[i];
    }

    EmbeddingMatrix d_act = std::move(d_embed);
    for (std::size_t l = params.layers.size(); l-- > 0;) {
        EmbeddingMatrix d_pre = std::move(d_act);
        if (l + 1 < params.layers.size()) {
            // rectifier: subgradient 0 at 0
            const EmbeddingMatrix& pre = cache.pre_activations[l];
            for (std::size_t i = 0; i < d_pre.data.size(); ++i)
                if (pre.data[i] <= 0.0) d_pre.data[i] = 0.0;
        }
        d_act = backprop_affine(cache.activations[l], params.layers[l], d_pre, grads.layers[l]);
    }
    return grads;
}

double id_cross_entropy(std::span<const double> logits, IdentityLabel label,
                        std::span<double> grad) {
    if (label.id >= logits.size())
        throw std::invalid_argument("id_cross_entropy: label out of range");
    double shift = logits[0];
    for (double v : logits) shift = std::max(shift, v);
    double z = 0.0;
    for (double v : logits) z += std::exp(v - shift);
    double log_z = shift + std::log(z);
    double loss = log_z - logits[label.id];
    if (!grad.empty()) {
        if (grad.size() != logits.size())
            throw std::invalid_argument("id_cross_entropy: gradient size mismatch");
        for (std::size_t i = 0; i < logits.size(); ++i)
            grad[i] = std::exp(logits[i] - shift) / z;
        grad[label.id] -= 1.0;
    }
    return loss;
}

void save_checkpoint(const EncoderParams& params, std::ostream& out) {
    io::write_magic(out, "MRCK");
    auto layer_count = static_cast<std::uint32_t>(params.layers.size() + 1);
    io::write_raw<std::uint32_t>(out, layer_count);
    auto write_shape = [&](const LinearLayer& l) {
        io::write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(l.in_dim()));
        io::write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(l.out_dim()));
    };
    for (const auto& l : params.layers) write_shape(l);
    write_shape(params.id_head);
    auto write_payload = [&](const LinearLayer& l) {
        for (double v : l.weight.data) io::write_raw<double>(out, v);
        for (double v : l.bias) io::write_raw<double>(out, v);
    };
    for (const auto& l : params.layers) write_payload(l);
    write_payload(params.id_head);
}

void save_checkpoint(const EncoderParams& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    save_checkpoint(params, out);
}

EncoderParams load_checkpoint(std::istream& in) {
    io::expect_magic(in, "MRCK");
    auto layer_count = io::read_raw<std::uint32_t>(in);
    if (layer_count < 2) throw std::runtime_error("load_checkpoint: too few layers");
    std::vector<std::pair<std::uint32_t, std::uint32_t>> shapes(layer_count);
    for (auto& [r, c] : shapes) {
        r = io::read_raw<std::uint32_t>(in);
        c = io::read_raw<std::uint32_t>(in);
    }
    EncoderParams p;
    auto read_layer = [&](std::uint32_t in_dim, std::uint32_t out_dim) {
        LinearLayer l;
        l.weight = EmbeddingMatrix(in_dim, out_dim);
        for (auto& v : l.weight.data) v = io::read_raw<double>(in);
        l.bias.resize(out_dim);
        for (auto& v : l.bias) v = io::read_raw<double>(in);
        return l;
    };
    for (std::uint32_t i = 0; i + 1 < layer_count; ++i)
        p.layers.push_back(read_layer(shapes[i].first, shapes[i].second));
    p.id_head = read_layer(shapes[layer_count - 1].first, shapes[layer_count - 1].second);
    return p;
}

EncoderParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    return load_checkpoint(in);
}

}  // namespace heml
