#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace heml {

// Deterministic random source. All experiment randomness flows from one root
// seed; independent named sub-streams (e.g. "sampler", "init", "data") are
// derived from the root seed so that changing one consumer cannot shift the
// draws seen by another.
class Rng {
  public:
    explicit Rng(std::uint64_t seed);

    // Derives an independent stream from this stream's seed and a name.
    Rng substream(std::string_view name) const;

    std::uint64_t next_u64();

    // Uniform in [a, b).
    double uniform(double a, double b);

    // Gaussian via the polar Box-Muller transform (no trig, one cached spare).
    double normal(double mean, double sigma);

    // Unbiased index in [0, n); n must be > 0.
    std::size_t uniform_index(std::size_t n);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = uniform_index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    std::uint64_t seed() const { return seed_; }

  private:
    std::uint64_t seed_;
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// splitmix64 step; used for seed derivation.
std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace heml
