#include "heml/synth_data.hpp"

#include <fstream>
#include <stdexcept>

#include "binary_io.hpp"
#include "heml/rng.hpp"

namespace heml {

Dataset generate(const SynthConfig& cfg) {
    if (cfg.num_ids < 2 || cfg.samples_per_id < 2)
        throw std::invalid_argument("generate: need num_ids >= 2 and samples_per_id >= 2");
    if (cfg.noise_sigma < 0.0)
        throw std::invalid_argument("generate: noise_sigma must be >= 0");
    if (cfg.input_dim == 0) throw std::invalid_argument("generate: input_dim must be > 0");

    Rng rng = Rng(cfg.seed).substream("data");
    Dataset ds;
    ds.num_ids = cfg.num_ids;
    ds.inputs = EmbeddingMatrix(cfg.num_ids * cfg.samples_per_id, cfg.input_dim);
    ds.labels.reserve(ds.inputs.rows);

    std::vector<double> center(cfg.input_dim);
    std::size_t row = 0;
    for (std::size_t id = 0; id < cfg.num_ids; ++id) {
        for (auto& c : center) c = rng.uniform(-cfg.center_scale, cfg.center_scale);
        for (std::size_t s = 0; s < cfg.samples_per_id; ++s, ++row) {
            auto out = ds.inputs.row(row);
            for (std::size_t d = 0; d < cfg.input_dim; ++d)
                out[d] = center[d] + rng.normal(0.0, cfg.noise_sigma);
            ds.labels.push_back(IdentityLabel(static_cast<std::uint32_t>(id)));
        }
    }
    return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_dataset: cannot open " + path);
    io::write_magic(out, "MRID");
    io::write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(ds.inputs.dim));
    io::write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(ds.inputs.rows));
    for (std::size_t i = 0; i < ds.inputs.rows; ++i) {
        for (double v : ds.inputs.row(i)) io::write_raw<float>(out, static_cast<float>(v));
        io::write_raw<std::uint32_t>(out, ds.labels[i].id);
        io::write_raw<std::uint64_t>(out, 0);
    }
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_dataset: cannot open " + path);
    io::expect_magic(in, "MRID");
    auto dim = io::read_raw<std::uint32_t>(in);
    auto count = io::read_raw<std::uint32_t>(in);
    Dataset ds;
    ds.inputs = EmbeddingMatrix(count, dim);
    ds.labels.reserve(count);
    std::uint32_t max_id = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        auto row = ds.inputs.row(i);
        for (auto& v : row) v = io::read_raw<float>(in);
        auto id = io::read_raw<std::uint32_t>(in);
        io::read_raw<std::uint64_t>(in);  // batch_seq, unused for datasets
        ds.labels.push_back(IdentityLabel(id));
        max_id = std::max(max_id, id);
    }
    ds.num_ids = count == 0 ? 0 : max_id + 1;
    return ds;
}

}  // namespace heml
