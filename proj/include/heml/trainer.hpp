#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "heml/baseline_losses.hpp"
#include "heml/encoder.hpp"
#include "heml/he_loss.hpp"
#include "heml/key_dictionary.hpp"
#include "heml/rng.hpp"
#include "heml/synth_data.hpp"

namespace heml {

enum class LossKind {
    he,
    tri_all,
    tri_hard,
    npair,
    ranked_list,
    infonce_single,
    infonce_in,
    infonce_out,
};

LossKind loss_from_string(const std::string& name);
std::string to_string(LossKind kind);

struct TrainConfig {
    std::size_t epochs = 10;
    std::size_t groups_c = 16;
    std::size_t per_group_n = 16;
    double base_lr = 0.01;
    double weight_decay = 0.0005;
    double sgd_momentum = 0.9;
    std::size_t dict_capacity = 1024;
    double ema_momentum = 0.997;
    std::uint64_t seed = 1;
    LossKind loss = LossKind::he;
    bool include_past_positives = false;
    Metric metric = Metric::euclidean;

    std::vector<std::size_t> hidden_dims = {32};
    std::size_t embed_dim = 16;

    double triplet_margin = 0.3;
    RankedListConfig ranked_list;
    double infonce_temperature = 0.07;
    bool infonce_hard_mining = false;
    int hard_count = 15;  // shared by npair and mined infonce

    void validate() const;
};

struct StepMetrics {
    std::size_t step = 0;
    std::size_t epoch = 0;
    double lr = 0.0;
    double loss_he = 0.0;  // the tripletwise loss for whichever LossKind runs
    double loss_id = 0.0;
    double grad_norm = 0.0;
};

// Constant at base_lr for the first half of training, then cosine decay to
// exactly zero at the final step boundary.
double lr_schedule(std::size_t step, std::size_t total_steps, double base_lr);

// Reference learning rate for a dataset of size s:
//   0.02 * (log s - log 4e3) / (log 3e5 - log 4e3),  s > 4e3.
double optimal_lr_for_size(double dataset_size);

// C distinct identities, N instances each, without replacement within a
// group. Requires the dataset to offer >= C identities with >= N samples.
GroupedBatch sample_batch(const Dataset& dataset, std::size_t groups_c,
                          std::size_t per_group_n, Rng& rng);

// v' = momentum * v + g + weight_decay * theta; theta' = theta - lr * v'.
// Weight decay applies to weights only, not biases.
void sgd_update(EncoderParams& params, const EncoderGrads& grads, EncoderGrads& velocity,
                double lr, double momentum, double weight_decay);

// The training loop: sample a C x N batch, encode it with the main and the
// forward-only encoders, enqueue the forward-only keys, label the dictionary
// per query, combine the tripletwise loss with the identity cross-entropy,
// backprop through the main encoder only, SGD step, then move the
// forward-only encoder by its momentum update.
class Trainer {
  public:
    Trainer(TrainConfig cfg, Dataset dataset);

    // One step; nullopt when the step was skipped after a degenerate-geometry
    // retry (a warning is printed, parameters stay untouched).
    std::optional<StepMetrics> step();

    using MetricsSink = std::function<void(const StepMetrics&)>;
    std::vector<StepMetrics> run(const MetricsSink& sink = {});

    std::size_t steps_per_epoch() const { return steps_per_epoch_; }
    std::size_t total_steps() const { return steps_per_epoch_ * cfg_.epochs; }
    std::size_t global_step() const { return step_; }

    const TrainConfig& config() const { return cfg_; }
    const Dataset& dataset() const { return dataset_; }
    const EncoderParams& params() const { return main_; }
    const EncoderParams& ema_params() const { return ema_; }
    const KeyDictionary& dictionary() const { return dict_; }

  private:
    double metric_loss_and_grad(std::span<const double> query, const LabeledSets& sets,
                                std::span<double> query_grad) const;

    TrainConfig cfg_;
    Dataset dataset_;
    std::size_t steps_per_epoch_ = 0;
    EncoderParams main_;
    EncoderParams ema_;
    EncoderGrads velocity_;
    KeyDictionary dict_;
    Rng sampler_rng_;
    Rng noise_rng_;
    std::size_t step_ = 0;
};

}  // namespace heml
