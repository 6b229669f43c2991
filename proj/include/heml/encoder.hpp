#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "heml/matrix.hpp"
#include "heml/rng.hpp"

namespace heml {

struct LinearLayer {
    EmbeddingMatrix weight;  // in_dim x out_dim
    std::vector<double> bias;

    std::size_t in_dim() const { return weight.rows; }
    std::size_t out_dim() const { return weight.dim; }
};

// Tiny MLP encoder (rectifier between layers) plus a linear identity
// prediction head on the embedding. Stands in for the full backbone; the
// training scheme around it does not care what the encoder is.
struct EncoderParams {
    std::vector<LinearLayer> layers;  // input_dim -> hidden... -> embed_dim
    LinearLayer id_head;              // embed_dim x num_ids

    std::size_t input_dim() const { return layers.front().in_dim(); }
    std::size_t embed_dim() const { return layers.back().out_dim(); }
    std::size_t num_ids() const { return id_head.out_dim(); }

    bool same_shape(const EncoderParams& other) const;

    // Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)), seeded.
    static EncoderParams init(std::size_t input_dim, const std::vector<std::size_t>& hidden_dims,
                              std::size_t embed_dim, std::size_t num_ids, Rng& rng);
};

struct MomentumConfig {
    double m = 0.997;  // in [0, 1)
};

// Gradients shaped like EncoderParams.
struct EncoderGrads {
    std::vector<LinearLayer> layers;
    LinearLayer id_head;

    static EncoderGrads zeros_like(const EncoderParams& params);
    double squared_norm() const;
};

// Forward activations kept for the backward pass.
struct ForwardCache {
    std::vector<EmbeddingMatrix> activations;  // activations[0] = inputs, back() = embeddings
    std::vector<EmbeddingMatrix> pre_activations;
};

EmbeddingMatrix encode(const EncoderParams& params, const EmbeddingMatrix& inputs);
EmbeddingMatrix encode(const EncoderParams& params, const EmbeddingMatrix& inputs,
                       ForwardCache& cache);

// Logits of the identity head for already-encoded embeddings.
EmbeddingMatrix id_logits(const EncoderParams& params, const EmbeddingMatrix& embeddings);

// p_ema' = m * p_ema + (1 - m) * p_main, elementwise.
void ema_update(const EncoderParams& main, EncoderParams& ema, const MomentumConfig& cfg);

// Reverse-mode gradients of the composite forward pass. upstream_embed_grad
// is d(loss)/d(embeddings); upstream_logit_grad is d(loss)/d(logits) and may
// be empty (zero rows) when no identity loss is attached.
EncoderGrads backward(const EncoderParams& params, const ForwardCache& cache,
                      const EmbeddingMatrix& upstream_embed_grad,
                      const EmbeddingMatrix& upstream_logit_grad);

// Softmax cross-entropy for one sample; writes softmax(logits) - onehot into
// grad when non-null. Throws when the label is out of range.
double id_cross_entropy(std::span<const double> logits, IdentityLabel label,
                        std::span<double> grad = {});

// Checkpoint format: "MRCK", u32 layer count (MLP layers + id head last),
// per-layer u32 in/out shape, then float64 payload per layer (row-major
// weight, then bias), little-endian.
void save_checkpoint(const EncoderParams& params, std::ostream& out);
void save_checkpoint(const EncoderParams& params, const std::string& path);
EncoderParams load_checkpoint(std::istream& in);
EncoderParams load_checkpoint(const std::string& path);

}  // namespace heml
