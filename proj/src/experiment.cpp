#include "heml/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "heml/encoder.hpp"

namespace heml {

namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

const std::map<std::string, std::string>& default_values() {
    static const std::map<std::string, std::string> defaults = {
        // synthetic dataset
        {"num_ids", "8"},
        {"samples_per_id", "8"},
        {"input_dim", "16"},
        {"center_scale", "1.0"},
        {"noise_sigma", "0.5"},
        // encoder
        {"hidden_dims", "32"},
        {"embed_dim", "16"},
        // training
        {"epochs", "10"},
        {"groups_c", "16"},
        {"per_group_n", "16"},
        {"base_lr", "0.01"},
        {"weight_decay", "0.0005"},
        {"sgd_momentum", "0.9"},
        {"dict_capacity", "1024"},
        {"ema_momentum", "0.997"},
        {"seed", "1"},
        {"loss", "he"},
        {"include_past_positives", "false"},
        {"metric", "euclidean"},
        {"triplet_margin", "0.3"},
        {"rl_alpha", "1.2"},
        {"rl_beta", "0.4"},
        {"infonce_temperature", "0.07"},
        {"infonce_hard_mining", "false"},
        {"hard_count", "15"},
        // outputs & tools
        {"out_dir", "out"},
        {"checkpoint", ""},
        {"per_query_csv", ""},
        {"sweep", ""},
        {"bench_repeats", "3"},
    };
    return defaults;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

}  // namespace

ExperimentConfig::ExperimentConfig() : values_(default_values()) {}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return from_text(buf.str());
}

ExperimentConfig ExperimentConfig::from_text(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error("config line " + std::to_string(lineno) + ": expected key=value");
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

void ExperimentConfig::set(const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw config_error("override must look like key=value: " + assignment);
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
    if (!default_values().contains(key)) throw config_error("unknown config key: " + key);
    values_[key] = value;
}

const std::string& ExperimentConfig::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw config_error("unknown config key: " + key);
    return it->second;
}

double ExperimentConfig::get_double(const std::string& key) const {
    const std::string& v = get(key);
    try {
        std::size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw config_error("config key " + key + ": not a number: " + v);
    }
}

std::size_t ExperimentConfig::get_size(const std::string& key) const {
    double d = get_double(key);
    if (d < 0 || d != static_cast<double>(static_cast<std::size_t>(d)))
        throw config_error("config key " + key + ": not a non-negative integer");
    return static_cast<std::size_t>(d);
}

std::uint64_t ExperimentConfig::get_u64(const std::string& key) const {
    const std::string& v = get(key);
    try {
        std::size_t pos = 0;
        auto u = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return u;
    } catch (const std::exception&) {
        throw config_error("config key " + key + ": not an unsigned integer: " + v);
    }
}

bool ExperimentConfig::get_bool(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw config_error("config key " + key + ": not a boolean: " + v);
}

std::vector<std::string> ExperimentConfig::get_list(const std::string& key) const {
    std::vector<std::string> out;
    std::istringstream in(get(key));
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

SynthConfig ExperimentConfig::synth_config() const {
    SynthConfig s;
    s.num_ids = get_size("num_ids");
    s.samples_per_id = get_size("samples_per_id");
    s.input_dim = get_size("input_dim");
    s.center_scale = get_double("center_scale");
    s.noise_sigma = get_double("noise_sigma");
    s.seed = get_u64("seed");
    return s;
}

TrainConfig ExperimentConfig::train_config() const {
    TrainConfig t;
    t.epochs = get_size("epochs");
    t.groups_c = get_size("groups_c");
    t.per_group_n = get_size("per_group_n");
    t.base_lr = get_double("base_lr");
    t.weight_decay = get_double("weight_decay");
    t.sgd_momentum = get_double("sgd_momentum");
    t.dict_capacity = get_size("dict_capacity");
    t.ema_momentum = get_double("ema_momentum");
    t.seed = get_u64("seed");
    t.include_past_positives = get_bool("include_past_positives");
    t.embed_dim = get_size("embed_dim");
    t.triplet_margin = get_double("triplet_margin");
    t.ranked_list.alpha = get_double("rl_alpha");
    t.ranked_list.beta = get_double("rl_beta");
    t.infonce_temperature = get_double("infonce_temperature");
    t.infonce_hard_mining = get_bool("infonce_hard_mining");
    t.hard_count = static_cast<int>(get_size("hard_count"));
    t.hidden_dims.clear();
    for (const auto& h : get_list("hidden_dims"))
        t.hidden_dims.push_back(static_cast<std::size_t>(std::stoull(h)));
    try {
        t.loss = loss_from_string(get("loss"));
        t.metric = metric_from_string(get("metric"));
    } catch (const std::invalid_argument& e) {
        throw config_error(e.what());
    }
    return t;
}

RetrievalResult evaluate_encoder(const EncoderParams& params, const Dataset& dataset) {
    EmbeddingMatrix embeddings = encode(params, dataset.inputs);
    EvalOptions opts;
    opts.exclude_self = true;
    return evaluate(embeddings, dataset.labels, embeddings, dataset.labels, opts);
}

namespace {

void write_eval_json(const RetrievalResult& result, const std::string& path) {
    json j;
    j["map"] = result.map;
    j["rank1"] = result.rank1;
    j["cmc"] = result.cmc;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump() << "\n";
}

json metrics_to_json(const StepMetrics& m) {
    json j;
    j["step"] = m.step;
    j["epoch"] = m.epoch;
    j["lr"] = m.lr;
    j["loss_he"] = m.loss_he;
    j["loss_id"] = m.loss_id;
    j["grad_norm"] = m.grad_norm;
    return j;
}

}  // namespace

TrainOutputs run_train(const ExperimentConfig& cfg) {
    std::filesystem::path out_dir = cfg.get("out_dir");
    std::filesystem::create_directories(out_dir);

    Dataset dataset = generate(cfg.synth_config());
    Trainer trainer(cfg.train_config(), std::move(dataset));

    TrainOutputs outputs;
    outputs.metrics_path = (out_dir / "metrics.jsonl").string();
    outputs.checkpoint_path = (out_dir / "checkpoint.mrck").string();
    outputs.eval_path = (out_dir / "eval.json").string();

    std::ofstream metrics_out(outputs.metrics_path);
    if (!metrics_out) throw std::runtime_error("cannot write " + outputs.metrics_path);
    outputs.metrics = trainer.run(
        [&](const StepMetrics& m) { metrics_out << metrics_to_json(m).dump() << "\n"; });
    metrics_out.close();

    save_checkpoint(trainer.params(), outputs.checkpoint_path);
    outputs.eval = evaluate_encoder(trainer.params(), trainer.dataset());
    write_eval_json(outputs.eval, outputs.eval_path);
    return outputs;
}

RetrievalResult run_eval(const ExperimentConfig& cfg) {
    std::filesystem::path out_dir = cfg.get("out_dir");
    std::filesystem::create_directories(out_dir);
    std::string ckpt = cfg.get("checkpoint");
    if (ckpt.empty()) ckpt = (out_dir / "checkpoint.mrck").string();

    EncoderParams params = load_checkpoint(ckpt);
    Dataset dataset = generate(cfg.synth_config());
    RetrievalResult result = evaluate_encoder(params, dataset);
    write_eval_json(result, (out_dir / "eval.json").string());

    if (std::string csv = cfg.get("per_query_csv"); !csv.empty()) {
        std::ofstream out(csv);
        if (!out) throw std::runtime_error("cannot write " + csv);
        out << "query,ap\n";
        for (std::size_t i = 0; i < result.per_query_ap.size(); ++i)
            out << i << "," << format_double(result.per_query_ap[i]) << "\n";
    }
    return result;
}

std::vector<std::string> ablate_default_grid(const std::string& dimension) {
    if (dimension == "dict_size") return {"256", "512", "1024"};
    if (dimension == "momentum") return {"0", "0.9", "0.99", "0.997"};
    if (dimension == "batch_shape") return {"32x2", "16x4", "8x8", "4x16"};
    if (dimension == "loss")
        return {"he", "tri_all", "tri_hard", "npair", "ranked_list", "infonce_out"};
    if (dimension == "past_positives") return {"false", "true"};
    if (dimension == "metric") return {"euclidean", "neg_cosine"};
    throw config_error("unknown ablation dimension: " + dimension);
}

namespace {

void apply_ablate_value(ExperimentConfig& cfg, const std::string& dimension,
                        const std::string& value) {
    if (dimension == "dict_size") {
        cfg.set("dict_capacity", value);
    } else if (dimension == "momentum") {
        cfg.set("ema_momentum", value);
    } else if (dimension == "batch_shape") {
        auto x = value.find('x');
        if (x == std::string::npos)
            throw config_error("batch_shape value must look like CxN: " + value);
        cfg.set("groups_c", value.substr(0, x));
        cfg.set("per_group_n", value.substr(x + 1));
    } else if (dimension == "loss") {
        cfg.set("loss", value);
    } else if (dimension == "past_positives") {
        cfg.set("include_past_positives", value);
    } else if (dimension == "metric") {
        cfg.set("metric", value);
    } else {
        throw config_error("unknown ablation dimension: " + dimension);
    }
}

}  // namespace

std::vector<AblateRow> run_ablate(const ExperimentConfig& cfg, const std::string& dimension) {
    std::vector<std::string> grid = ablate_default_grid(dimension);  // validates the dimension
    if (!cfg.get("sweep").empty()) grid = cfg.get_list("sweep");
    std::filesystem::path out_dir = cfg.get("out_dir");
    std::filesystem::create_directories(out_dir);

    std::vector<AblateRow> rows;
    for (const auto& value : grid) {
        AblateRow row;
        row.setting = value;
        try {
            ExperimentConfig point = cfg;
            apply_ablate_value(point, dimension, value);
            point.set("out_dir",
                      (out_dir / ("ablate_" + dimension) / value).string());
            TrainOutputs outputs = run_train(point);
            row.ok = true;
            row.map = outputs.eval.map;
            row.rank1 = outputs.eval.rank1;
            row.final_loss = outputs.metrics.empty() ? 0.0 : outputs.metrics.back().loss_he;
        } catch (const std::exception& e) {
            row.error = e.what();
            std::cerr << "ablate " << dimension << "=" << value << " failed: " << e.what()
                      << "\n";
        }
        rows.push_back(std::move(row));
    }

    std::ofstream csv(out_dir / ("ablate_" + dimension + ".csv"));
    csv << "setting,map,rank1,final_loss\n";
    for (const auto& row : rows) {
        if (row.ok)
            csv << row.setting << "," << format_double(row.map) << ","
                << format_double(row.rank1) << "," << format_double(row.final_loss) << "\n";
        else
            csv << row.setting << ",,,\n";
    }
    return rows;
}

std::vector<BenchRow> run_bench_loss(const ExperimentConfig& cfg) {
    std::vector<std::size_t> sizes;
    if (cfg.get("sweep").empty()) {
        sizes = {1024, 2048, 4096, 8192};
    } else {
        for (const auto& s : cfg.get_list("sweep"))
            sizes.push_back(static_cast<std::size_t>(std::stoull(s)));
    }
    const std::size_t repeats = std::max<std::size_t>(cfg.get_size("bench_repeats"), 1);
    const std::size_t dim = cfg.get_size("embed_dim");
    const std::size_t n_pos = cfg.get_size("per_group_n") - 1;
    Rng rng(cfg.get_u64("seed"));

    const std::vector<std::string> losses = {"he",    "tri_all",     "tri_hard",
                                             "npair", "ranked_list", "infonce_out"};
    std::vector<BenchRow> rows;
    for (std::size_t size : sizes) {
        EmbeddingMatrix query_mat(1, dim), positives(n_pos, dim);
        EmbeddingMatrix negatives(size > n_pos ? size - n_pos : 1, dim);
        for (auto& v : query_mat.data) v = rng.normal(0.0, 1.0);
        for (auto& v : positives.data) v = rng.normal(0.0, 1.0);
        for (auto& v : negatives.data) v = rng.normal(0.0, 1.0);
        auto query = query_mat.row(0);

        for (const auto& name : losses) {
            LossKind kind = loss_from_string(name);
            auto invoke = [&]() -> double {
                switch (kind) {
                    case LossKind::he:
                        return he_loss_per_query(0, query_mat, positives, negatives).loss;
                    case LossKind::tri_all:
                    case LossKind::tri_hard: {
                        TripletConfig tc;
                        tc.mining = kind == LossKind::tri_hard ? TripletConfig::Mining::hard
                                                               : TripletConfig::Mining::all;
                        return triplet_loss(query, positives, negatives, tc);
                    }
                    case LossKind::npair:
                        return npair_loss(query, positives, negatives, 15);
                    case LossKind::ranked_list:
                        return ranked_list_loss(query, positives, negatives, {});
                    default: {
                        InfoNceConfig ic;
                        ic.variant = InfoNceConfig::Variant::multi_out;
                        return infonce_loss(query, positives, negatives, ic);
                    }
                }
            };
            volatile double sink = 0.0;
            auto start = std::chrono::steady_clock::now();
            for (std::size_t r = 0; r < repeats; ++r) sink = sink + invoke();
            auto elapsed = std::chrono::steady_clock::now() - start;
            (void)sink;
            BenchRow row;
            row.loss = name;
            row.dict_size = size;
            row.mean_us = std::chrono::duration<double, std::micro>(elapsed).count() /
                          static_cast<double>(repeats);
            rows.push_back(row);
        }
    }

    std::filesystem::path out_dir = cfg.get("out_dir");
    std::filesystem::create_directories(out_dir);
    std::ofstream csv(out_dir / "bench_loss.csv");
    csv << "loss,dict_size,mean_us\n";
    for (const auto& row : rows)
        csv << row.loss << "," << row.dict_size << "," << format_double(row.mean_us) << "\n";
    return rows;
}

}  // namespace heml
