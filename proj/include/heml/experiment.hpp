#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "heml/evaluator.hpp"
#include "heml/synth_data.hpp"
#include "heml/trainer.hpp"

namespace heml {

// Configuration / usage problems; the CLI maps these to exit code 2.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Flat key=value experiment configuration. Unknown keys are rejected; every
// key has a documented default so sweep files stay minimal and diffable.
class ExperimentConfig {
  public:
    ExperimentConfig();

    static ExperimentConfig from_file(const std::string& path);
    static ExperimentConfig from_text(const std::string& text);

    // "key=value" override; applied after file values.
    void set(const std::string& assignment);
    void set(const std::string& key, const std::string& value);

    const std::string& get(const std::string& key) const;
    double get_double(const std::string& key) const;
    std::size_t get_size(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::vector<std::string> get_list(const std::string& key) const;

    SynthConfig synth_config() const;
    TrainConfig train_config() const;

    const std::map<std::string, std::string>& values() const { return values_; }

  private:
    std::map<std::string, std::string> values_;
};

struct TrainOutputs {
    std::vector<StepMetrics> metrics;
    RetrievalResult eval;
    std::string metrics_path;
    std::string checkpoint_path;
    std::string eval_path;
};

// Trains per config, then evaluates the main encoder on the dataset with the
// query set doubling as the gallery (self-match excluded). Writes
// out_dir/metrics.jsonl, out_dir/checkpoint.mrck and out_dir/eval.json.
TrainOutputs run_train(const ExperimentConfig& cfg);

// Loads the checkpoint, re-generates the dataset from the config, evaluates,
// writes out_dir/eval.json (and the optional per-query CSV).
RetrievalResult run_eval(const ExperimentConfig& cfg);

struct AblateRow {
    std::string setting;
    bool ok = false;
    double map = 0.0;
    double rank1 = 0.0;
    double final_loss = 0.0;
    std::string error;
};

// One train+eval run per grid point of `dimension`; failures are recorded
// and the sweep continues. Writes out_dir/ablate_<dimension>.csv.
std::vector<AblateRow> run_ablate(const ExperimentConfig& cfg, const std::string& dimension);

std::vector<std::string> ablate_default_grid(const std::string& dimension);

struct BenchRow {
    std::string loss;
    std::size_t dict_size = 0;
    double mean_us = 0.0;
};

// Wall time of each loss against growing key-set sizes; writes
// out_dir/bench_loss.csv.
std::vector<BenchRow> run_bench_loss(const ExperimentConfig& cfg);

// Shared helper: encode the dataset with `params` and run the
// queries-as-gallery evaluation protocol.
RetrievalResult evaluate_encoder(const EncoderParams& params, const Dataset& dataset);

}  // namespace heml
