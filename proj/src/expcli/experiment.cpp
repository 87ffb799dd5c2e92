#include <algorithm>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <numeric>
#include <random>
#include <sstream>

#include "comfed/error.hpp"
#include "comfed/experiment.hpp"

namespace comfed {

using nlohmann::json;

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::vector<Modality> resolve_modalities(const DataConfig& data, const std::vector<std::string>& names) {
    std::vector<Modality> out;
    for (const auto& name : names) {
        auto it = std::find_if(data.modalities.begin(), data.modalities.end(),
                               [&](const Modality& m) { return m.name == name; });
        if (it == data.modalities.end()) throw ConfigError("unknown modality '" + name + "'");
        out.push_back(*it);
    }
    return out;
}

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + path.string() + "'");
    return out;
}

}  // namespace

PreparedRun prepare_run(const ExperimentConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    PreparedRun prepared;
    prepared.seed = seed;
    const auto subsets = cfg.client_modalities();
    const std::size_t n = subsets.size();

    if (cfg.data.source == "synthetic") {
        SyntheticSpec spec{cfg.data.num_classes, cfg.data.modalities, cfg.data.noise_std, cfg.data.samples_per_class,
                           cfg.data.test_fraction, seed};
        prepared.datasets = generate(spec, subsets, cfg.data.skew);
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            CsvSchema schema{resolve_modalities(cfg.data, subsets[i]), cfg.data.num_classes, "label"};
            prepared.datasets.push_back(load_csv(cfg.data.csv_files[i], schema, cfg.data.test_fraction, mix_seed(seed, i)));
        }
    }

    for (const auto& g : cfg.clients) {
        const auto arch = make_dense_architecture(resolve_modalities(cfg.data, g.modalities), g.encoder_widths,
                                                  g.trunk_widths, cfg.data.num_classes);
        for (std::size_t k = 0; k < g.count; ++k) prepared.architectures.push_back(arch);
    }

    prepared.topology = make_topology(cfg.topology, n, mix_seed(seed, 0x70B0));

    AdversarySpec& adv = prepared.adversary;
    adv.attack = cfg.adversary.attack;
    adv.sigma = cfg.adversary.sigma;
    adv.constant = cfg.adversary.constant;
    if (!cfg.adversary.byzantine_ids.empty()) {
        adv.byzantine.insert(cfg.adversary.byzantine_ids.begin(), cfg.adversary.byzantine_ids.end());
    } else if (cfg.adversary.gamma > 0) {
        std::vector<std::size_t> ids(n);
        std::iota(ids.begin(), ids.end(), 0);
        std::mt19937_64 rng(mix_seed(seed, 0xB12A));
        std::shuffle(ids.begin(), ids.end(), rng);
        adv.byzantine.insert(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(cfg.adversary.gamma));
    }
    adv.validate(n);
    return prepared;
}

RunResult execute_run(const ExperimentConfig& cfg, const PreparedRun& prepared) {
    TrainConfig train = cfg.train;
    train.seed = prepared.seed;
    std::vector<Client> clients;
    clients.reserve(prepared.datasets.size());
    for (std::size_t i = 0; i < prepared.datasets.size(); ++i) {
        clients.push_back(make_client(i, prepared.architectures[i], prepared.datasets[i], train.latent_dim, prepared.seed));
    }
    switch (cfg.method) {
        case Method::comfed: return run(prepared.topology, clients, train, prepared.adversary);
        case Method::local_only: return run_baseline(BaselineKind::local_only, clients, train);
        case Method::modality_fedavg: return run_baseline(BaselineKind::modality_fedavg, clients, train);
    }
    throw ConfigError("unhandled method");
}

void write_round_records(std::ostream& out, const RunResult& result) {
    for (const auto& record : result.records) {
        for (const auto& c : record.clients) {
            json row = {{"round", record.round},
                        {"client_id", c.client_id},
                        {"train_loss", c.train_loss},
                        {"reg_loss", c.reg_loss},
                        {"test_acc", c.test_acc ? json(*c.test_acc) : json(nullptr)},
                        {"cum_uplink_bytes", c.cum_uplink_bytes}};
            out << row.dump() << '\n';
        }
    }
}

namespace {

SummaryRow run_one_config(const ExperimentConfig& cfg, const std::filesystem::path& dir, std::ostream& log) {
    std::filesystem::create_directories(dir);
    write_config(cfg, dir / "config.json");
    const auto subsets = cfg.client_modalities();

    std::vector<SeedTrace> traces;
    for (std::size_t k = 0; k < cfg.runs; ++k) {
        const std::uint64_t seed = cfg.base_seed + k;
        const PreparedRun prepared = prepare_run(cfg, seed);
        const RunResult result = execute_run(cfg, prepared);

        const auto seed_dir = dir / ("seed_" + std::to_string(seed));
        std::filesystem::create_directories(seed_dir);
        {
            auto out = open_output(seed_dir / "rounds.jsonl");
            write_round_records(out, result);
        }
        {
            auto out = open_output(seed_dir / "ledger.csv");
            result.ledger.write_csv(out);
        }
        {
            json clients = json::array();
            for (std::size_t i = 0; i < subsets.size(); ++i) {
                clients.push_back({{"id", i},
                                   {"modalities", subsets[i]},
                                   {"byzantine", prepared.adversary.is_byzantine(i)},
                                   {"tap_dim", prepared.architectures[i].tap_dim()}});
            }
            json meta = {{"seed", seed}, {"latent_dim", cfg.train.latent_dim}, {"method", to_string(cfg.method)},
                         {"clients", clients}};
            auto out = open_output(seed_dir / "meta.json");
            out << meta.dump(2) << '\n';
        }

        traces.push_back(trace_from_run(seed, result, subsets));
        const auto acc = result.records.back().honest_accuracy();
        log << cfg.name << " [" << to_string(cfg.method) << ", d=" << cfg.train.latent_dim << "] seed " << seed
            << ": final honest accuracy " << std::fixed << std::setprecision(4) << acc.value_or(0.0)
            << ", total uplink " << result.ledger.total_uplink() << " bytes\n";
        log.unsetf(std::ios::floatfield);
    }

    SummaryRow row = summarize_traces(cfg.name, to_string(cfg.method), cfg.train.latent_dim, traces, cfg.thresholds);
    auto out = open_output(dir / "summary.json");
    out << summary_to_json(row).dump(2) << '\n';
    return row;
}

}  // namespace

ExperimentOutcome run_experiment(const ExperimentConfig& cfg, std::ostream& log) {
    cfg.validate();
    const std::filesystem::path root(cfg.output_dir);
    ExperimentOutcome outcome;
    if (cfg.sweep_latent_dims.empty()) {
        outcome.rows.push_back(run_one_config(cfg, root, log));
        return outcome;
    }

    std::filesystem::create_directories(root);
    write_config(cfg, root / "config.json");
    for (std::size_t d : cfg.sweep_latent_dims) {
        ExperimentConfig sub = cfg;
        sub.sweep_latent_dims.clear();
        sub.train.latent_dim = d;
        sub.output_dir = (root / ("d_" + std::to_string(d))).string();
        outcome.rows.push_back(run_one_config(sub, sub.output_dir, log));
    }

    auto out = open_output(root / "dim_sweep.csv");
    out << "latent_dim,final_acc_mean,final_acc_std,total_uplink_bytes_mean";
    for (double t : cfg.thresholds) out << ",bytes_to_" << t;
    out << '\n' << std::setprecision(10);
    for (const auto& row : outcome.rows) {
        out << row.latent_dim << ',' << row.final_accuracy_mean << ',' << row.final_accuracy_std << ','
            << static_cast<std::uint64_t>(row.total_uplink_mean);
        for (const auto& c : row.costs) {
            out << ',';
            if (c.bytes) out << static_cast<std::uint64_t>(*c.bytes);
            else out << "NA";
        }
        out << '\n';
    }
    return outcome;
}

}  // namespace comfed
