#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "comfed/error.hpp"
#include "comfed/experiment.hpp"

namespace comfed {

using nlohmann::json;

namespace {

std::string subset_key(const std::vector<std::string>& names) {
    std::string out;
    for (const auto& n : names) out += (out.empty() ? "" : "+") + n;
    return out;
}

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("'" + path.string() + "' is not valid JSON: " + e.what());
    }
}

std::vector<std::filesystem::path> sorted_children(const std::filesystem::path& dir, const std::string& prefix) {
    std::vector<std::filesystem::path> out;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_directory() && entry.path().filename().string().rfind(prefix, 0) == 0) out.push_back(entry.path());
    }
    // Numeric order of the suffix.
    std::sort(out.begin(), out.end(), [&](const auto& a, const auto& b) {
        return std::stoull(a.filename().string().substr(prefix.size())) <
               std::stoull(b.filename().string().substr(prefix.size()));
    });
    return out;
}

}  // namespace

SeedTrace trace_from_run(std::uint64_t seed, const RunResult& result,
                         const std::vector<std::vector<std::string>>& client_modalities) {
    SeedTrace trace;
    trace.seed = seed;
    trace.client_modalities = client_modalities;
    const std::size_t n = client_modalities.size();
    trace.byzantine.assign(n, false);
    trace.final_client_accuracy.assign(n, std::nullopt);
    std::uint64_t cumulative = 0;
    for (const auto& record : result.records) {
        trace.honest_accuracy.push_back(record.honest_accuracy());
        cumulative += result.ledger.round_uplink(record.round);
        trace.network_uplink.push_back(cumulative);
        for (const auto& c : record.clients) {
            trace.byzantine.at(c.client_id) = c.byzantine;
            if (c.test_acc) trace.final_client_accuracy.at(c.client_id) = c.test_acc;
        }
    }
    return trace;
}

SeedTrace load_seed_trace(const std::filesystem::path& seed_dir) {
    const json meta = read_json(seed_dir / "meta.json");
    SeedTrace trace;
    trace.seed = meta.at("seed").get<std::uint64_t>();
    for (const auto& c : meta.at("clients")) {
        trace.client_modalities.push_back(c.at("modalities").get<std::vector<std::string>>());
        trace.byzantine.push_back(c.at("byzantine").get<bool>());
    }
    const std::size_t n = trace.client_modalities.size();
    trace.final_client_accuracy.assign(n, std::nullopt);

    std::ifstream in(seed_dir / "rounds.jsonl");
    if (!in) throw ConfigError("cannot read '" + (seed_dir / "rounds.jsonl").string() + "'");
    std::map<std::size_t, std::vector<json>> by_round;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json row = json::parse(line);
        by_round[row.at("round").get<std::size_t>()].push_back(std::move(row));
    }
    for (const auto& [round, rows] : by_round) {
        double acc_sum = 0.0;
        std::size_t acc_count = 0;
        std::uint64_t uplink = 0;
        for (const auto& row : rows) {
            const auto id = row.at("client_id").get<std::size_t>();
            uplink += row.at("cum_uplink_bytes").get<std::uint64_t>();
            if (row.at("test_acc").is_null()) continue;
            const double acc = row.at("test_acc").get<double>();
            trace.final_client_accuracy.at(id) = acc;
            if (!trace.byzantine.at(id)) {
                acc_sum += acc;
                ++acc_count;
            }
        }
        trace.honest_accuracy.push_back(acc_count ? std::optional<double>(acc_sum / static_cast<double>(acc_count))
                                                  : std::nullopt);
        trace.network_uplink.push_back(uplink);
    }
    return trace;
}

SummaryRow summarize_traces(const std::string& label, const std::string& method, std::size_t latent_dim,
                            const std::vector<SeedTrace>& traces, const std::vector<double>& thresholds) {
    SummaryRow row;
    row.label = label;
    row.method = method;
    row.latent_dim = latent_dim;
    row.runs = traces.size();
    if (traces.empty()) return row;

    std::vector<double> finals;
    double uplink_sum = 0.0;
    std::size_t rounds = traces.front().honest_accuracy.size();
    for (const auto& t : traces) {
        rounds = std::min(rounds, t.honest_accuracy.size());
        for (auto it = t.honest_accuracy.rbegin(); it != t.honest_accuracy.rend(); ++it) {
            if (*it) {
                finals.push_back(**it);
                break;
            }
        }
        uplink_sum += t.network_uplink.empty() ? 0.0 : static_cast<double>(t.network_uplink.back());
    }
    row.total_uplink_mean = uplink_sum / static_cast<double>(traces.size());
    if (!finals.empty()) {
        double mean = 0.0;
        for (double f : finals) mean += f;
        mean /= static_cast<double>(finals.size());
        double var = 0.0;
        for (double f : finals) var += (f - mean) * (f - mean);
        row.final_accuracy_mean = mean;
        row.final_accuracy_std = finals.size() > 1 ? std::sqrt(var / static_cast<double>(finals.size() - 1)) : 0.0;
    }

    // Seed-averaged accuracy curve over rounds evaluated in every seed.
    std::vector<std::optional<double>> curve(rounds);
    std::vector<double> bytes(rounds, 0.0);
    for (std::size_t r = 0; r < rounds; ++r) {
        double acc = 0.0;
        bool complete = true;
        for (const auto& t : traces) {
            if (!t.honest_accuracy[r]) complete = false;
            else acc += *t.honest_accuracy[r];
            bytes[r] += static_cast<double>(t.network_uplink[r]);
        }
        bytes[r] /= static_cast<double>(traces.size());
        if (complete) curve[r] = acc / static_cast<double>(traces.size());
    }
    for (double threshold : thresholds) {
        ThresholdCost cost{threshold, std::nullopt, std::nullopt};
        for (std::size_t r = 0; r < rounds; ++r) {
            if (curve[r] && *curve[r] >= threshold) {
                cost.bytes = bytes[r];
                cost.round = r;
                break;
            }
        }
        row.costs.push_back(cost);
    }

    std::map<std::string, std::pair<double, std::size_t>> subsets;
    for (const auto& t : traces) {
        for (std::size_t i = 0; i < t.client_modalities.size(); ++i) {
            if (t.byzantine[i] || !t.final_client_accuracy[i]) continue;
            auto& slot = subsets[subset_key(t.client_modalities[i])];
            slot.first += *t.final_client_accuracy[i];
            ++slot.second;
        }
    }
    for (const auto& [key, acc] : subsets) row.subset_accuracy[key] = acc.first / static_cast<double>(acc.second);
    return row;
}

json summary_to_json(const SummaryRow& row) {
    json costs = json::array();
    for (const auto& c : row.costs) {
        costs.push_back({{"threshold", c.threshold},
                         {"bytes", c.bytes ? json(*c.bytes) : json("NA")},
                         {"round", c.round ? json(*c.round) : json("NA")}});
    }
    return {{"label", row.label},
            {"method", row.method},
            {"latent_dim", row.latent_dim},
            {"runs", row.runs},
            {"final_acc_mean", row.final_accuracy_mean},
            {"final_acc_std", row.final_accuracy_std},
            {"total_uplink_bytes_mean", row.total_uplink_mean},
            {"bytes_to_threshold", costs},
            {"subset_accuracy", row.subset_accuracy}};
}

std::vector<SummaryRow> summarize(const std::vector<std::filesystem::path>& run_dirs,
                                  const std::vector<double>& thresholds_override) {
    std::vector<SummaryRow> rows;
    for (const auto& dir : run_dirs) {
        if (!std::filesystem::is_directory(dir)) throw ConfigError("'" + dir.string() + "' is not a directory");
        const auto seeds = sorted_children(dir, "seed_");
        if (seeds.empty()) {
            const auto sweeps = sorted_children(dir, "d_");
            if (sweeps.empty()) throw ConfigError("'" + dir.string() + "' holds no completed runs");
            auto nested = summarize(sweeps, thresholds_override);
            rows.insert(rows.end(), nested.begin(), nested.end());
            continue;
        }
        const ExperimentConfig cfg = config_from_json(read_json(dir / "config.json"));
        std::vector<SeedTrace> traces;
        for (const auto& s : seeds) traces.push_back(load_seed_trace(s));
        rows.push_back(summarize_traces(cfg.name, to_string(cfg.method), cfg.train.latent_dim, traces,
                                        thresholds_override.empty() ? cfg.thresholds : thresholds_override));
    }
    return rows;
}

std::string format_summary_table(const std::vector<SummaryRow>& rows) {
    std::ostringstream out;
    out << std::left << std::setw(18) << "run" << std::setw(17) << "method" << std::setw(5) << "d" << std::setw(6)
        << "runs" << std::setw(18) << "final acc" << "bytes to threshold / per-subset accuracy\n";
    for (const auto& row : rows) {
        std::ostringstream acc;
        acc << std::fixed << std::setprecision(3) << row.final_accuracy_mean << " +- " << row.final_accuracy_std;
        out << std::left << std::setw(18) << row.label << std::setw(17) << row.method << std::setw(5) << row.latent_dim
            << std::setw(6) << row.runs << std::setw(18) << acc.str();
        for (std::size_t i = 0; i < row.costs.size(); ++i) {
            const auto& c = row.costs[i];
            out << (i ? " / " : "") << std::setprecision(3) << std::defaultfloat << c.threshold * 100 << "%: ";
            if (c.bytes) out << std::fixed << std::setprecision(1) << *c.bytes / 1024.0 << " KB" << std::defaultfloat;
            else out << "NA";
        }
        out << "   [";
        bool first = true;
        for (const auto& [key, acc] : row.subset_accuracy) {
            out << (first ? "" : ", ") << key << " " << std::fixed << std::setprecision(3) << acc << std::defaultfloat;
            first = false;
        }
        out << "]\n";
    }
    return out.str();
}

}  // namespace comfed
