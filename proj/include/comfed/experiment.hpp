#pragma once

// Experiment configuration, presets, the multi-seed runner and its on-disk
// artifacts, and run summaries.
//
// Layout of an output directory:
//   config.json                 effective configuration
//   seed_<s>/rounds.jsonl       one object per (round, client)
//   seed_<s>/ledger.csv         round,client_id,uplink_bytes,downlink_bytes,cumulative_uplink
//   seed_<s>/meta.json          client roster (modalities, byzantine flags)
//   summary.json                accuracy mean/std and bytes-to-threshold
// A latent-dimension sweep writes one such directory per d under d_<d>/ and a
// dim_sweep.csv table at the top.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "comfed/netsim.hpp"
#include "comfed/trainer.hpp"

namespace comfed {

struct DataConfig {
    std::string source = "synthetic";  // synthetic | csv
    std::size_t num_classes = 0;
    std::vector<Modality> modalities;
    double noise_std = 1.0;
    std::size_t samples_per_class = 20;
    double skew = 1.0;
    double test_fraction = 0.2;
    std::vector<std::string> csv_files;  // one per client when source == csv

    friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct ClientGroupConfig {
    std::size_t count = 1;
    std::vector<std::string> modalities;
    std::map<std::string, std::vector<std::size_t>> encoder_widths;
    std::vector<std::size_t> trunk_widths;  // last entry is the tap dim

    friend bool operator==(const ClientGroupConfig&, const ClientGroupConfig&) = default;
};

struct AdversaryConfig {
    std::size_t gamma = 0;
    std::vector<std::size_t> byzantine_ids;  // overrides gamma when non-empty
    AttackKind attack = AttackKind::gaussian_noise;
    double sigma = 0.0;
    double constant = 0.0;

    friend bool operator==(const AdversaryConfig&, const AdversaryConfig&) = default;
};

enum class Method { comfed, local_only, modality_fedavg };

std::string to_string(Method method);
Method method_from_string(const std::string& name);

struct ExperimentConfig {
    std::string name = "experiment";
    Method method = Method::comfed;
    DataConfig data;
    std::vector<ClientGroupConfig> clients;
    TopologySpec topology;
    TrainConfig train;
    AdversaryConfig adversary;
    std::size_t runs = 5;
    std::uint64_t base_seed = 1;
    std::vector<double> thresholds;
    std::vector<std::size_t> sweep_latent_dims;
    std::string output_dir = "runs/experiment";

    std::size_t num_clients() const;
    // Per-client modality subsets in roster order.
    std::vector<std::vector<std::string>> client_modalities() const;
    void validate() const;

    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// Strict: unknown keys and missing required keys are errors naming the key.
ExperimentConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig parse_config(const std::filesystem::path& path);
void write_config(const ExperimentConfig& cfg, const std::filesystem::path& path);

std::vector<std::string> preset_names();
ExperimentConfig make_preset(const std::string& name);

// Everything a single seed needs, built deterministically from (config, seed).
struct PreparedRun {
    std::uint64_t seed = 0;
    std::vector<ClientDataset> datasets;
    std::vector<ClientArchitecture> architectures;
    Topology topology;
    AdversarySpec adversary;
};

PreparedRun prepare_run(const ExperimentConfig& cfg, std::uint64_t seed);
RunResult execute_run(const ExperimentConfig& cfg, const PreparedRun& prepared);

void write_round_records(std::ostream& out, const RunResult& result);

// Per-seed view used by summaries, buildable from memory or from disk.
struct SeedTrace {
    std::uint64_t seed = 0;
    std::vector<std::vector<std::string>> client_modalities;
    std::vector<bool> byzantine;
    std::vector<std::optional<double>> honest_accuracy;  // per round
    std::vector<std::uint64_t> network_uplink;            // cumulative, per round
    std::vector<std::optional<double>> final_client_accuracy;
};

SeedTrace trace_from_run(std::uint64_t seed, const RunResult& result,
                         const std::vector<std::vector<std::string>>& client_modalities);
SeedTrace load_seed_trace(const std::filesystem::path& seed_dir);

struct ThresholdCost {
    double threshold = 0.0;
    std::optional<double> bytes;  // empty: never reached (NA)
    std::optional<std::size_t> round;
};

struct SummaryRow {
    std::string label;
    std::string method;
    std::size_t latent_dim = 0;
    std::size_t runs = 0;
    double final_accuracy_mean = 0.0;
    double final_accuracy_std = 0.0;
    double total_uplink_mean = 0.0;
    std::vector<ThresholdCost> costs;
    std::map<std::string, double> subset_accuracy;  // "acc+gyr" -> mean final honest accuracy
};

SummaryRow summarize_traces(const std::string& label, const std::string& method, std::size_t latent_dim,
                            const std::vector<SeedTrace>& traces, const std::vector<double>& thresholds);
nlohmann::json summary_to_json(const SummaryRow& row);

struct ExperimentOutcome {
    std::vector<SummaryRow> rows;  // one per latent dim (a single row without a sweep)
};

// Runs every seed (and every swept latent dim), writing artifacts under
// cfg.output_dir. Progress lines go to `log`.
ExperimentOutcome run_experiment(const ExperimentConfig& cfg, std::ostream& log);

// Reads completed run directories (a sweep directory expands into its d_<d>
// children).
std::vector<SummaryRow> summarize(const std::vector<std::filesystem::path>& run_dirs,
                                  const std::vector<double>& thresholds_override = {});
std::string format_summary_table(const std::vector<SummaryRow>& rows);

}  // namespace comfed
