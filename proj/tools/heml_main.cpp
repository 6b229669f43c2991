#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "heml/experiment.hpp"

namespace {

// exit codes: 0 success, 2 usage/config, 3 runtime failure
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

heml::ExperimentConfig load_config(const std::string& config_path,
                                   const std::vector<std::string>& overrides) {
    heml::ExperimentConfig cfg = config_path.empty()
                                     ? heml::ExperimentConfig()
                                     : heml::ExperimentConfig::from_file(config_path);
    for (const auto& assignment : overrides) cfg.set(assignment);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hard-distance Elastic metric-learning experiments"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    std::string ablate_dimension;
    double lr_size = 0.0;

    auto add_config_options = [&](CLI::App* cmd) {
        cmd->add_option("-c,--config", config_path, "flat key=value config file");
        cmd->add_option("--set", overrides, "override, key=value; wins over the file");
    };

    CLI::App* cmd_train = app.add_subcommand("train", "train and evaluate one model");
    add_config_options(cmd_train);
    CLI::App* cmd_eval = app.add_subcommand("eval", "evaluate a saved checkpoint");
    add_config_options(cmd_eval);
    CLI::App* cmd_ablate = app.add_subcommand("ablate", "sweep one config dimension");
    add_config_options(cmd_ablate);
    cmd_ablate
        ->add_option("-d,--dimension", ablate_dimension,
                     "dict_size|momentum|batch_shape|loss|past_positives|metric")
        ->required();
    CLI::App* cmd_lr = app.add_subcommand("lr", "reference learning rate for a dataset size");
    cmd_lr->add_option("size", lr_size, "dataset size")->required();
    CLI::App* cmd_bench =
        app.add_subcommand("bench-loss", "wall time of each loss vs dictionary size");
    add_config_options(cmd_bench);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    try {
        if (cmd_train->parsed()) {
            heml::TrainOutputs out = heml::run_train(load_config(config_path, overrides));
            std::printf("map=%.6f rank1=%.6f steps=%zu\n", out.eval.map, out.eval.rank1,
                        out.metrics.size());
        } else if (cmd_eval->parsed()) {
            heml::RetrievalResult r = heml::run_eval(load_config(config_path, overrides));
            std::printf("map=%.6f rank1=%.6f\n", r.map, r.rank1);
        } else if (cmd_ablate->parsed()) {
            auto rows = heml::run_ablate(load_config(config_path, overrides), ablate_dimension);
            for (const auto& row : rows) {
                if (row.ok)
                    std::printf("%s map=%.6f rank1=%.6f\n", row.setting.c_str(), row.map,
                                row.rank1);
                else
                    std::printf("%s failed\n", row.setting.c_str());
            }
        } else if (cmd_lr->parsed()) {
            std::printf("%.10g\n", heml::optimal_lr_for_size(lr_size));
        } else if (cmd_bench->parsed()) {
            auto rows = heml::run_bench_loss(load_config(config_path, overrides));
            for (const auto& row : rows)
                std::printf("%s %zu %.1fus\n", row.loss.c_str(), row.dict_size, row.mean_us);
        }
    } catch (const heml::config_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return 0;
}
