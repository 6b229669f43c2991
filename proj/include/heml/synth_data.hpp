#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "heml/matrix.hpp"

namespace heml {

struct SynthConfig {
    std::size_t num_ids = 8;
    std::size_t samples_per_id = 8;
    std::size_t input_dim = 16;
    double center_scale = 1.0;
    double noise_sigma = 0.5;
    std::uint64_t seed = 1;
};

struct Dataset {
    EmbeddingMatrix inputs;
    std::vector<IdentityLabel> labels;
    std::size_t num_ids = 0;

    std::size_t size() const { return inputs.rows; }
};

// Gaussian identity clusters: per identity a center uniform in
// [-center_scale, center_scale]^input_dim, samples = center + N(0, sigma).
// Rows are grouped by identity; everything is a pure function of the seed.
Dataset generate(const SynthConfig& cfg);

// Same binary layout as the dictionary snapshot (batch_seq written as 0).
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace heml
