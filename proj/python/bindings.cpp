#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "heml/baseline_losses.hpp"
#include "heml/distance.hpp"
#include "heml/encoder.hpp"
#include "heml/evaluator.hpp"
#include "heml/experiment.hpp"
#include "heml/he_loss.hpp"
#include "heml/key_dictionary.hpp"
#include "heml/synth_data.hpp"
#include "heml/trainer.hpp"

namespace py = pybind11;

namespace {

heml::EmbeddingMatrix to_matrix(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    if (arr.ndim() != 2) throw std::invalid_argument("expected a 2-D array");
    heml::EmbeddingMatrix m(static_cast<std::size_t>(arr.shape(0)),
                            static_cast<std::size_t>(arr.shape(1)));
    std::copy(arr.data(), arr.data() + arr.size(), m.data.begin());
    return m;
}

std::vector<double> to_vector(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    if (arr.ndim() != 1) throw std::invalid_argument("expected a 1-D array");
    return {arr.data(), arr.data() + arr.size()};
}

py::array_t<double> from_matrix(const heml::EmbeddingMatrix& m) {
    py::array_t<double> arr({m.rows, m.dim});
    std::copy(m.data.begin(), m.data.end(), arr.mutable_data());
    return arr;
}

std::vector<heml::IdentityLabel> to_labels(const std::vector<std::uint32_t>& ids) {
    std::vector<heml::IdentityLabel> labels;
    labels.reserve(ids.size());
    for (auto id : ids) labels.emplace_back(id);
    return labels;
}

heml::DistanceList sorted_distances(const std::vector<double>& values) {
    heml::DistanceList d;
    d.values = values;
    d.sample_indices.resize(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) d.sample_indices[i] = i;
    d.sort_ascending();
    return d;
}

heml::ExperimentConfig build_config(const std::string& config_path,
                                    const std::map<std::string, std::string>& overrides) {
    heml::ExperimentConfig cfg = config_path.empty()
                                     ? heml::ExperimentConfig()
                                     : heml::ExperimentConfig::from_file(config_path);
    for (const auto& [k, v] : overrides) cfg.set(k, v);
    return cfg;
}

py::dict eval_to_dict(const heml::RetrievalResult& r) {
    py::dict d;
    d["map"] = r.map;
    d["rank1"] = r.rank1;
    d["cmc"] = r.cmc;
    d["per_query_ap"] = r.per_query_ap;
    return d;
}

}  // namespace

PYBIND11_MODULE(_heml, m) {
    m.doc() = "Hard-distance Elastic metric learning core";

    py::register_exception<heml::degenerate_geometry_error>(m, "DegenerateGeometryError",
                                                            PyExc_RuntimeError);
    py::register_exception<heml::config_error>(m, "ConfigError", PyExc_ValueError);

    m.def("euclidean_distance",
          [](py::array_t<double, py::array::c_style | py::array::forcecast> a,
             py::array_t<double, py::array::c_style | py::array::forcecast> b) {
              auto va = to_vector(a);
              auto vb = to_vector(b);
              return heml::euclidean_distance(va, vb);
          });
    m.def("negative_cosine_similarity",
          [](py::array_t<double, py::array::c_style | py::array::forcecast> a,
             py::array_t<double, py::array::c_style | py::array::forcecast> b) {
              auto va = to_vector(a);
              auto vb = to_vector(b);
              return heml::negative_cosine_similarity(va, vb);
          });
    m.def(
        "pairwise_distances",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> query,
           py::array_t<double, py::array::c_style | py::array::forcecast> keys,
           const std::string& metric) {
            auto q = to_vector(query);
            auto k = to_matrix(keys);
            auto d = heml::pairwise_distances(q, k, heml::metric_from_string(metric));
            return py::make_tuple(d.values, d.sample_indices);
        },
        py::arg("query"), py::arg("keys"), py::arg("metric") = "euclidean");

    py::class_<heml::BoundaryResult>(m, "BoundaryResult")
        .def_readonly("t_star", &heml::BoundaryResult::t_star)
        .def_readonly("loss", &heml::BoundaryResult::loss)
        .def_readonly("hard_positive_indices", &heml::BoundaryResult::hard_positive_indices)
        .def_readonly("hard_negative_indices", &heml::BoundaryResult::hard_negative_indices)
        .def_readonly("iterations", &heml::BoundaryResult::iterations)
        .def("__repr__", [](const heml::BoundaryResult& r) {
            return "BoundaryResult(t_star=" + std::to_string(r.t_star) +
                   ", loss=" + std::to_string(r.loss) + ")";
        });

    m.def("he_loss_at", [](double t, const std::vector<double>& pos, const std::vector<double>& neg) {
        return heml::he_loss_at(t, sorted_distances(pos), sorted_distances(neg));
    });
    m.def("find_optimal_boundary",
          [](const std::vector<double>& pos, const std::vector<double>& neg) {
              return heml::find_optimal_boundary(sorted_distances(pos), sorted_distances(neg));
          },
          "Boundary search over raw distance lists (sorted internally).");
    m.def(
        "he_loss_per_query",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> query,
           py::array_t<double, py::array::c_style | py::array::forcecast> positives,
           py::array_t<double, py::array::c_style | py::array::forcecast> negatives,
           const std::string& metric) {
            heml::EmbeddingMatrix one(1, static_cast<std::size_t>(query.size()));
            auto q = to_vector(query);
            one.set_row(0, q);
            return heml::he_loss_per_query(0, one, to_matrix(positives), to_matrix(negatives),
                                           heml::metric_from_string(metric));
        },
        py::arg("query"), py::arg("positives"), py::arg("negatives"),
        py::arg("metric") = "euclidean");
    m.def(
        "he_loss_gradient",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> query,
           py::array_t<double, py::array::c_style | py::array::forcecast> positives,
           py::array_t<double, py::array::c_style | py::array::forcecast> negatives,
           const std::string& metric) {
            heml::EmbeddingMatrix one(1, static_cast<std::size_t>(query.size()));
            auto q = to_vector(query);
            one.set_row(0, q);
            auto g = heml::he_loss_gradient(0, one, to_matrix(positives), to_matrix(negatives),
                                            heml::metric_from_string(metric));
            py::dict d;
            d["boundary"] = g.boundary;
            d["query"] = g.query;
            py::dict pg, ng;
            for (const auto& [idx, vec] : g.positives) pg[py::int_(idx)] = vec;
            for (const auto& [idx, vec] : g.negatives) ng[py::int_(idx)] = vec;
            d["positives"] = pg;
            d["negatives"] = ng;
            return d;
        },
        py::arg("query"), py::arg("positives"), py::arg("negatives"),
        py::arg("metric") = "euclidean");

    m.def(
        "triplet_loss",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> query,
           py::array_t<double, py::array::c_style | py::array::forcecast> positives,
           py::array_t<double, py::array::c_style | py::array::forcecast> negatives,
           double margin, const std::string& mining) {
            heml::TripletConfig cfg;
            cfg.margin = margin;
            if (mining == "all")
                cfg.mining = heml::TripletConfig::Mining::all;
            else if (mining == "hard")
                cfg.mining = heml::TripletConfig::Mining::hard;
            else
                throw std::invalid_argument("mining must be all or hard");
            auto q = to_vector(query);
            return heml::triplet_loss(q, to_matrix(positives), to_matrix(negatives), cfg);
        },
        py::arg("query"), py::arg("positives"), py::arg("negatives"), py::arg("margin") = 0.3,
        py::arg("mining") = "all");
    m.def(
        "npair_loss",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> query,
           py::array_t<double, py::array::c_style | py::array::forcecast> positives,
           py::array_t<double, py::array::c_style | py::array::forcecast> negatives,
           int hard_count) {
            auto q = to_vector(query);
            return heml::npair_loss(q, to_matrix(positives), to_matrix(negatives), hard_count);
        },
        py::arg("query"), py::arg("positives"), py::arg("negatives"), py::arg("hard_count") = 15);
    m.def(
        "ranked_list_loss",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> query,
           py::array_t<double, py::array::c_style | py::array::forcecast> positives,
           py::array_t<double, py::array::c_style | py::array::forcecast> negatives, double alpha,
           double beta) {
            heml::RankedListConfig cfg;
            cfg.alpha = alpha;
            cfg.beta = beta;
            auto q = to_vector(query);
            return heml::ranked_list_loss(q, to_matrix(positives), to_matrix(negatives), cfg);
        },
        py::arg("query"), py::arg("positives"), py::arg("negatives"), py::arg("alpha") = 1.2,
        py::arg("beta") = 0.4);
    m.def(
        "infonce_loss",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> query,
           py::array_t<double, py::array::c_style | py::array::forcecast> positives,
           py::array_t<double, py::array::c_style | py::array::forcecast> negatives,
           double temperature, const std::string& variant, bool hard_mining, int hard_count) {
            heml::InfoNceConfig cfg;
            cfg.temperature = temperature;
            cfg.hard_mining = hard_mining;
            cfg.hard_count = hard_count;
            if (variant == "single")
                cfg.variant = heml::InfoNceConfig::Variant::single;
            else if (variant == "multi_in")
                cfg.variant = heml::InfoNceConfig::Variant::multi_in;
            else if (variant == "multi_out")
                cfg.variant = heml::InfoNceConfig::Variant::multi_out;
            else
                throw std::invalid_argument("variant must be single, multi_in or multi_out");
            auto q = to_vector(query);
            return heml::infonce_loss(q, to_matrix(positives), to_matrix(negatives), cfg);
        },
        py::arg("query"), py::arg("positives"), py::arg("negatives"),
        py::arg("temperature") = 0.07, py::arg("variant") = "single",
        py::arg("hard_mining") = false, py::arg("hard_count") = 15);

    py::class_<heml::KeyDictionary>(m, "KeyDictionary")
        .def(py::init<std::size_t, std::size_t>(), py::arg("capacity"), py::arg("dim"))
        .def_property_readonly("capacity", &heml::KeyDictionary::capacity)
        .def_property_readonly("dim", &heml::KeyDictionary::dim)
        .def_property_readonly("count", &heml::KeyDictionary::count)
        .def("enqueue_batch",
             [](heml::KeyDictionary& d,
                py::array_t<double, py::array::c_style | py::array::forcecast> keys,
                const std::vector<std::uint32_t>& labels) {
                 d.enqueue_batch(to_matrix(keys), to_labels(labels));
             })
        .def("label",
             [](const heml::KeyDictionary& d, std::size_t i) { return d.label(i).id; })
        .def("is_current", &heml::KeyDictionary::is_current)
        .def(
            "label_dictionary",
            [](const heml::KeyDictionary& d, std::uint32_t query_label, std::size_t entry_index,
               bool include_past_positives) {
                auto sets = d.label_dictionary(heml::IdentityLabel(query_label), entry_index,
                                               include_past_positives);
                py::dict out;
                out["positives"] = from_matrix(sets.positives);
                out["negatives"] = from_matrix(sets.negatives);
                out["positive_indices"] = sets.positive_indices;
                out["negative_indices"] = sets.negative_indices;
                return out;
            },
            py::arg("query_label"), py::arg("query_entry_index"),
            py::arg("include_past_positives") = false)
        .def("save_snapshot",
             py::overload_cast<const std::string&>(&heml::KeyDictionary::save_snapshot,
                                                   py::const_))
        .def_static("load_snapshot",
                    [](const std::string& path, std::size_t capacity) {
                        return heml::KeyDictionary::load_snapshot(path, capacity);
                    },
                    py::arg("path"), py::arg("capacity") = 0);

    m.def("lr_schedule", &heml::lr_schedule, py::arg("step"), py::arg("total_steps"),
          py::arg("base_lr"));
    m.def("optimal_lr_for_size", &heml::optimal_lr_for_size, py::arg("dataset_size"));

    m.def(
        "rank_gallery",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> query,
           py::array_t<double, py::array::c_style | py::array::forcecast> gallery) {
            auto q = to_vector(query);
            return heml::rank_gallery(q, to_matrix(gallery));
        },
        py::arg("query"), py::arg("gallery"));
    m.def(
        "average_precision",
        [](const std::vector<std::size_t>& ranking, const std::vector<bool>& relevance)
            -> py::object {
            auto ap = heml::average_precision(ranking, relevance);
            if (!ap) return py::none();
            return py::float_(*ap);
        },
        py::arg("ranking"), py::arg("relevance"));
    m.def(
        "evaluate",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> queries,
           const std::vector<std::uint32_t>& query_labels,
           py::array_t<double, py::array::c_style | py::array::forcecast> gallery,
           const std::vector<std::uint32_t>& gallery_labels, bool exclude_self) {
            heml::EvalOptions opts;
            opts.exclude_self = exclude_self;
            return eval_to_dict(heml::evaluate(to_matrix(queries), to_labels(query_labels),
                                               to_matrix(gallery), to_labels(gallery_labels),
                                               opts));
        },
        py::arg("queries"), py::arg("query_labels"), py::arg("gallery"),
        py::arg("gallery_labels"), py::arg("exclude_self") = false);

    m.def(
        "generate_dataset",
        [](std::size_t num_ids, std::size_t samples_per_id, std::size_t input_dim,
           double center_scale, double noise_sigma, std::uint64_t seed) {
            heml::SynthConfig cfg{num_ids, samples_per_id, input_dim, center_scale, noise_sigma,
                                  seed};
            auto ds = heml::generate(cfg);
            std::vector<std::uint32_t> labels;
            labels.reserve(ds.labels.size());
            for (auto l : ds.labels) labels.push_back(l.id);
            return py::make_tuple(from_matrix(ds.inputs), labels);
        },
        py::arg("num_ids") = 8, py::arg("samples_per_id") = 8, py::arg("input_dim") = 16,
        py::arg("center_scale") = 1.0, py::arg("noise_sigma") = 0.5, py::arg("seed") = 1);

    m.def(
        "run_train",
        [](const std::string& config_path, const std::map<std::string, std::string>& overrides) {
            auto out = heml::run_train(build_config(config_path, overrides));
            py::dict d = eval_to_dict(out.eval);
            d["metrics_path"] = out.metrics_path;
            d["checkpoint_path"] = out.checkpoint_path;
            d["eval_path"] = out.eval_path;
            d["steps"] = out.metrics.size();
            return d;
        },
        py::arg("config_path") = "", py::arg("overrides") = std::map<std::string, std::string>{});
    m.def(
        "run_eval",
        [](const std::string& config_path, const std::map<std::string, std::string>& overrides) {
            return eval_to_dict(heml::run_eval(build_config(config_path, overrides)));
        },
        py::arg("config_path") = "", py::arg("overrides") = std::map<std::string, std::string>{});
}
