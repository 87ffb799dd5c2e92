// comfed: run experiments, summarize run directories, emit presets.
//
//   comfed run <config.json> [--seed S] [--rounds R] [--lambda L] [--distance sq|l2]
//                            [--topology ring|complete|erdos_renyi|star_ps|empty] [--gamma G]
//                            [--runs N] [--method M] [--out DIR]
//   comfed summarize <dir>... [--thresholds 0.4,0.5]
//   comfed preset <name> --out <path>

#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "comfed/error.hpp"
#include "comfed/experiment.hpp"
#include "comfed/kernels.hpp"

namespace {

struct RunOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> rounds;
    std::optional<double> lambda;
    std::optional<std::string> distance;
    std::optional<std::string> topology;
    std::optional<std::size_t> gamma;
    std::optional<std::size_t> runs;
    std::optional<std::string> method;
    std::optional<std::string> out;
};

void apply(const RunOverrides& o, comfed::ExperimentConfig& cfg) {
    if (o.seed) cfg.base_seed = *o.seed;
    if (o.rounds) cfg.train.rounds = *o.rounds;
    if (o.lambda) cfg.train.lambda = *o.lambda;
    if (o.distance) cfg.train.distance = comfed::distance_from_string(*o.distance);
    if (o.topology) {
        cfg.topology.kind = comfed::topology_kind_from_string(*o.topology);
        // A star topology only makes sense with server-side consensus and vice versa.
        cfg.train.consensus = cfg.topology.kind == comfed::TopologyKind::star_ps ? comfed::ConsensusMode::ps
                                                                                 : comfed::ConsensusMode::decentralized;
    }
    if (o.gamma) {
        cfg.adversary.gamma = *o.gamma;
        cfg.adversary.byzantine_ids.clear();
    }
    if (o.runs) cfg.runs = *o.runs;
    if (o.method) cfg.method = comfed::method_from_string(*o.method);
    if (o.out) cfg.output_dir = *o.out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Latent-consensus multi-modal federated learning simulator"};
    app.require_subcommand(1);

    std::string config_path;
    RunOverrides overrides;
    auto* run = app.add_subcommand("run", "Run an experiment described by a JSON config");
    run->add_option("config", config_path, "Experiment config file")->required();
    run->add_option("--seed", overrides.seed, "Base seed (seeds are base, base+1, ...)");
    run->add_option("--rounds", overrides.rounds, "Communication rounds");
    run->add_option("--lambda", overrides.lambda, "Regularization weight");
    run->add_option("--distance", overrides.distance, "Latent distance")->check(CLI::IsMember({"sq", "l2"}));
    run->add_option("--topology", overrides.topology, "Communication topology")
        ->check(CLI::IsMember({"ring", "complete", "erdos_renyi", "star_ps", "ps", "empty"}));
    run->add_option("--gamma", overrides.gamma, "Number of Byzantine clients");
    run->add_option("--runs", overrides.runs, "Monte Carlo runs");
    run->add_option("--method", overrides.method, "comfed | local_only | modality_fedavg");
    run->add_option("--out", overrides.out, "Output directory");

    std::vector<std::string> dirs;
    std::vector<double> thresholds;
    auto* summarize = app.add_subcommand("summarize", "Summarize completed run directories");
    summarize->add_option("dirs", dirs, "Run directories")->required();
    summarize->add_option("--thresholds", thresholds, "Accuracy thresholds (override the config's)")->delimiter(',');

    std::string preset_name;
    std::string preset_out;
    auto* preset = app.add_subcommand("preset", "Write a preset config");
    preset->add_option("name", preset_name, "Preset name")->required();
    preset->add_option("--out", preset_out, "Destination file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            auto cfg = comfed::parse_config(config_path);
            apply(overrides, cfg);
            cfg.validate();
            std::cerr << "kernels: " << comfed::kernels::backend_name(comfed::kernels::active().backend) << '\n';
            const auto outcome = comfed::run_experiment(cfg, std::cerr);
            std::cout << comfed::format_summary_table(outcome.rows);
        } else if (*summarize) {
            std::vector<std::filesystem::path> paths(dirs.begin(), dirs.end());
            std::cout << comfed::format_summary_table(comfed::summarize(paths, thresholds));
        } else if (*preset) {
            comfed::write_config(comfed::make_preset(preset_name), preset_out);
        }
    } catch (const comfed::NumericError& e) {
        std::cerr << "comfed: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "comfed: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
