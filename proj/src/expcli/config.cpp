#include <algorithm>
#include <fstream>
#include <set>

#include "comfed/error.hpp"
#include "comfed/experiment.hpp"

namespace comfed {

using nlohmann::json;

namespace {

// Strict view of one JSON object: every key must be read exactly through this
// reader, and finish() rejects whatever is left.
class ObjectReader {
public:
    ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) throw ConfigError(path_ + ": expected an object");
    }

    bool has(const std::string& key) const { return obj_.contains(key); }

    const json& required(const std::string& key) {
        if (!obj_.contains(key)) throw ConfigError("missing required key '" + qualified(key) + "'");
        seen_.insert(key);
        return obj_.at(key);
    }

    template <typename T>
    T get(const std::string& key) {
        return convert<T>(required(key), key);
    }

    template <typename T>
    T get_or(const std::string& key, T fallback) {
        if (!obj_.contains(key)) return fallback;
        return get<T>(key);
    }

    void finish() const {
        for (const auto& [key, _] : obj_.items()) {
            if (!seen_.count(key)) throw ConfigError("unknown key '" + qualified(key) + "'");
        }
    }

    std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

private:
    template <typename T>
    T convert(const json& value, const std::string& key) const {
        try {
            if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
                if (!value.is_number_integer() || value.get<long long>() < 0) throw ConfigError("");
            }
            return value.get<T>();
        } catch (const std::exception&) {
            throw ConfigError("key '" + qualified(key) + "' has the wrong type: " + value.dump());
        }
    }

    const json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

DataConfig data_from_json(const json& j) {
    ObjectReader r(j, "data");
    DataConfig d;
    d.source = r.get_or<std::string>("source", d.source);
    d.num_classes = r.get<std::size_t>("num_classes");
    for (const auto& m : r.required("modalities")) {
        ObjectReader mr(m, "data.modalities[]");
        d.modalities.push_back({mr.get<std::string>("name"), mr.get<std::size_t>("input_dim")});
        mr.finish();
    }
    d.noise_std = r.get_or("noise_std", d.noise_std);
    d.samples_per_class = r.get_or("samples_per_class", d.samples_per_class);
    d.skew = r.get_or("skew", d.skew);
    d.test_fraction = r.get_or("test_fraction", d.test_fraction);
    d.csv_files = r.get_or("csv_files", d.csv_files);
    r.finish();
    return d;
}

json data_to_json(const DataConfig& d) {
    json mods = json::array();
    for (const auto& m : d.modalities) mods.push_back({{"name", m.name}, {"input_dim", m.input_dim}});
    return {{"source", d.source},         {"num_classes", d.num_classes},
            {"modalities", mods},         {"noise_std", d.noise_std},
            {"samples_per_class", d.samples_per_class}, {"skew", d.skew},
            {"test_fraction", d.test_fraction}, {"csv_files", d.csv_files}};
}

TrainConfig train_from_json(const json& j) {
    ObjectReader r(j, "train");
    TrainConfig t;
    t.rounds = r.get_or("rounds", t.rounds);
    t.eta_w = r.get_or("eta_w", t.eta_w);
    t.eta_p = r.get_or("eta_p", t.eta_p);
    t.lambda = r.get_or("lambda", t.lambda);
    t.projection_steps = r.get_or("projection_steps", t.projection_steps);
    t.batch_size = r.get_or("batch_size", t.batch_size);
    t.latent_dim = r.get_or("latent_dim", t.latent_dim);
    if (r.has("distance")) t.distance = distance_from_string(r.get<std::string>("distance"));
    if (r.has("consensus")) t.consensus = consensus_mode_from_string(r.get<std::string>("consensus"));
    t.eval_every = r.get_or("eval_every", t.eval_every);
    t.exchange_first = r.get_or("exchange_first", t.exchange_first);
    t.local_epochs = r.get_or("local_epochs", t.local_epochs);
    if (r.has("weiszfeld")) {
        ObjectReader w(r.required("weiszfeld"), "train.weiszfeld");
        t.weiszfeld.max_iters = w.get_or("max_iters", t.weiszfeld.max_iters);
        t.weiszfeld.tolerance = w.get_or("tolerance", t.weiszfeld.tolerance);
        t.weiszfeld.anchor_epsilon = w.get_or("anchor_epsilon", t.weiszfeld.anchor_epsilon);
        w.finish();
    }
    r.finish();
    return t;
}

json train_to_json(const TrainConfig& t) {
    return {{"rounds", t.rounds},
            {"eta_w", t.eta_w},
            {"eta_p", t.eta_p},
            {"lambda", t.lambda},
            {"projection_steps", t.projection_steps},
            {"batch_size", t.batch_size},
            {"latent_dim", t.latent_dim},
            {"distance", to_string(t.distance)},
            {"consensus", to_string(t.consensus)},
            {"eval_every", t.eval_every},
            {"exchange_first", t.exchange_first},
            {"local_epochs", t.local_epochs},
            {"weiszfeld",
             {{"max_iters", t.weiszfeld.max_iters},
              {"tolerance", t.weiszfeld.tolerance},
              {"anchor_epsilon", t.weiszfeld.anchor_epsilon}}}};
}

}  // namespace

std::string to_string(Method method) {
    switch (method) {
        case Method::comfed: return "comfed";
        case Method::local_only: return "local_only";
        case Method::modality_fedavg: return "modality_fedavg";
    }
    return "unknown";
}

Method method_from_string(const std::string& name) {
    for (auto m : {Method::comfed, Method::local_only, Method::modality_fedavg}) {
        if (name == to_string(m)) return m;
    }
    throw ConfigError("unknown method '" + name + "'");
}

std::size_t ExperimentConfig::num_clients() const {
    std::size_t n = 0;
    for (const auto& g : clients) n += g.count;
    return n;
}

std::vector<std::vector<std::string>> ExperimentConfig::client_modalities() const {
    std::vector<std::vector<std::string>> out;
    for (const auto& g : clients)
        for (std::size_t k = 0; k < g.count; ++k) out.push_back(g.modalities);
    return out;
}

void ExperimentConfig::validate() const {
    if (data.source != "synthetic" && data.source != "csv") throw ConfigError("data.source must be synthetic or csv");
    SyntheticSpec spec{data.num_classes, data.modalities, data.noise_std, data.samples_per_class, data.test_fraction, 0};
    spec.validate();
    if (!(data.skew > 0.0)) throw ConfigError("data.skew must be > 0");
    if (clients.empty()) throw ConfigError("clients must list at least one group");
    std::set<std::string> known;
    for (const auto& m : data.modalities) known.insert(m.name);
    for (std::size_t g = 0; g < clients.size(); ++g) {
        const auto& group = clients[g];
        const std::string where = "clients[" + std::to_string(g) + "]";
        if (group.count == 0) throw ConfigError(where + ".count must be positive");
        if (group.modalities.empty()) throw ConfigError(where + ".modalities must be non-empty");
        for (const auto& m : group.modalities) {
            if (!known.count(m)) throw ConfigError(where + ".modalities: unknown modality '" + m + "'");
        }
        for (const auto& [m, _] : group.encoder_widths) {
            if (std::find(group.modalities.begin(), group.modalities.end(), m) == group.modalities.end()) {
                throw ConfigError(where + ".encoder_widths: '" + m + "' is not one of the group's modalities");
            }
        }
        if (group.trunk_widths.empty()) throw ConfigError(where + ".trunk_widths must end at the tap dim");
        const auto dims = sweep_latent_dims.empty() ? std::vector<std::size_t>{train.latent_dim} : sweep_latent_dims;
        for (std::size_t d : dims) {
            if (d > group.trunk_widths.back()) {
                throw ConfigError(where + ": latent_dim " + std::to_string(d) + " exceeds tap dim " +
                                  std::to_string(group.trunk_widths.back()));
            }
        }
    }
    if (data.source == "csv" && data.csv_files.size() != num_clients()) {
        throw ConfigError("data.csv_files needs one file per client (" + std::to_string(num_clients()) + ")");
    }
    try {
        train.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("train.") + e.what());
    }
    if (adversary.byzantine_ids.empty() && adversary.gamma >= num_clients() && adversary.gamma > 0) {
        throw ConfigError("adversary.gamma must be < number of clients");
    }
    if (runs < 1) throw ConfigError("runs must be >= 1");
    for (double t : thresholds) {
        if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("thresholds must lie in [0, 1]");
    }
    if (topology.kind == TopologyKind::erdos_renyi && !(topology.p > 0.0 && topology.p <= 1.0)) {
        throw ConfigError("topology.p must be in (0, 1]");
    }
    if (train.consensus == ConsensusMode::ps && topology.kind != TopologyKind::star_ps) {
        throw ConfigError("train.consensus = ps requires topology.kind = star_ps");
    }
}

ExperimentConfig config_from_json(const json& doc) {
    ObjectReader r(doc, "");
    ExperimentConfig cfg;
    cfg.name = r.get_or<std::string>("name", cfg.name);
    if (r.has("method")) cfg.method = method_from_string(r.get<std::string>("method"));
    cfg.data = data_from_json(r.required("data"));
    const json& groups = r.required("clients");
    if (!groups.is_array()) throw ConfigError("clients must be an array");
    for (std::size_t g = 0; g < groups.size(); ++g) {
        ObjectReader gr(groups[g], "clients[" + std::to_string(g) + "]");
        ClientGroupConfig group;
        group.count = gr.get_or("count", group.count);
        group.modalities = gr.get<std::vector<std::string>>("modalities");
        group.encoder_widths = gr.get_or("encoder_widths", group.encoder_widths);
        group.trunk_widths = gr.get<std::vector<std::size_t>>("trunk_widths");
        gr.finish();
        cfg.clients.push_back(std::move(group));
    }
    {
        ObjectReader tr(r.required("topology"), "topology");
        cfg.topology.kind = topology_kind_from_string(tr.get<std::string>("kind"));
        cfg.topology.p = tr.get_or("p", cfg.topology.p);
        tr.finish();
    }
    cfg.train = train_from_json(r.required("train"));
    if (r.has("adversary")) {
        ObjectReader ar(r.required("adversary"), "adversary");
        cfg.adversary.gamma = ar.get_or("gamma", cfg.adversary.gamma);
        cfg.adversary.byzantine_ids = ar.get_or("byzantine_ids", cfg.adversary.byzantine_ids);
        if (ar.has("attack")) cfg.adversary.attack = attack_kind_from_string(ar.get<std::string>("attack"));
        cfg.adversary.sigma = ar.get_or("sigma", cfg.adversary.sigma);
        cfg.adversary.constant = ar.get_or("constant", cfg.adversary.constant);
        ar.finish();
    }
    cfg.runs = r.get_or("runs", cfg.runs);
    cfg.base_seed = r.get_or("base_seed", cfg.base_seed);
    cfg.thresholds = r.get_or("thresholds", cfg.thresholds);
    cfg.sweep_latent_dims = r.get_or("sweep_latent_dims", cfg.sweep_latent_dims);
    cfg.output_dir = r.get_or("output_dir", cfg.output_dir);
    r.finish();
    cfg.validate();
    return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
    json groups = json::array();
    for (const auto& g : cfg.clients) {
        groups.push_back({{"count", g.count},
                          {"modalities", g.modalities},
                          {"encoder_widths", g.encoder_widths},
                          {"trunk_widths", g.trunk_widths}});
    }
    return {{"name", cfg.name},
            {"method", to_string(cfg.method)},
            {"data", data_to_json(cfg.data)},
            {"clients", groups},
            {"topology", {{"kind", to_string(cfg.topology.kind)}, {"p", cfg.topology.p}}},
            {"train", train_to_json(cfg.train)},
            {"adversary",
             {{"gamma", cfg.adversary.gamma},
              {"byzantine_ids", cfg.adversary.byzantine_ids},
              {"attack", to_string(cfg.adversary.attack)},
              {"sigma", cfg.adversary.sigma},
              {"constant", cfg.adversary.constant}}},
            {"runs", cfg.runs},
            {"base_seed", cfg.base_seed},
            {"thresholds", cfg.thresholds},
            {"sweep_latent_dims", cfg.sweep_latent_dims},
            {"output_dir", cfg.output_dir}};
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    json doc;
    try {
        doc = json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return config_from_json(doc);
}

void write_config(const ExperimentConfig& cfg, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path.string() + "'");
    out << config_to_json(cfg).dump(2) << '\n';
}

}  // namespace comfed
