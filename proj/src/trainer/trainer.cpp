#include "comfed/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "comfed/error.hpp"

namespace comfed {
namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

bool all_finite(std::span<const double> values) {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

std::string to_string(ConsensusMode mode) { return mode == ConsensusMode::ps ? "ps" : "decentralized"; }

ConsensusMode consensus_mode_from_string(const std::string& name) {
    if (name == "decentralized") return ConsensusMode::decentralized;
    if (name == "ps") return ConsensusMode::ps;
    throw ConfigError("unknown consensus mode '" + name + "'");
}

void TrainConfig::validate() const {
    if (rounds < 1) throw ConfigError("rounds must be >= 1");
    if (!(eta_w > 0.0)) throw ConfigError("eta_w must be > 0");
    if (!(eta_p > 0.0)) throw ConfigError("eta_p must be > 0");
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
    if (projection_steps < 1) throw ConfigError("projection_steps must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
    if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
    if (local_epochs < 1) throw ConfigError("local_epochs must be >= 1");
    weiszfeld.validate();
}

BatchSampler::BatchSampler(std::vector<std::size_t> pool, std::uint64_t seed) : order_(std::move(pool)), rng_(seed) {
    std::shuffle(order_.begin(), order_.end(), rng_);
}

std::vector<std::size_t> BatchSampler::next(std::size_t batch_size) {
    if (order_.empty()) throw ConfigError("cannot sample from an empty training split");
    if (batch_size >= order_.size()) {
        std::shuffle(order_.begin(), order_.end(), rng_);
        cursor_ = 0;
        return order_;
    }
    if (cursor_ + batch_size > order_.size()) {
        std::shuffle(order_.begin(), order_.end(), rng_);
        cursor_ = 0;
    }
    std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + batch_size));
    cursor_ += batch_size;
    return out;
}

Client make_client(std::size_t id, const ClientArchitecture& arch, const ClientDataset& data, std::size_t latent_dim,
                   std::uint64_t seed) {
    if (arch.modality_names() != data.modalities) {
        throw ConfigError("client " + std::to_string(id) + ": architecture and dataset modalities differ");
    }
    return Client{id,
                  build_client_model(arch, mix_seed(seed, 3 * id)),
                  Projection::random(latent_dim, arch.tap_dim(), mix_seed(seed, 3 * id + 1)),
                  &data,
                  BatchSampler(data.train, mix_seed(seed, 3 * id + 2)),
                  {}};
}

CompositeStep composite_gradient(const ClientModel& model, const Projection& projection, const Batch& batch,
                                 const LatentMap& targets, double lambda, DistanceKind kind) {
    CompositeStep step;
    auto ff = model.forward_full(batch.inputs);
    auto ce = softmax_cross_entropy(ff.logits, batch.labels);
    step.task_loss = ce.loss;
    step.stats = class_means(ff.tap.features, batch.labels);

    Matrix dtap;
    if (lambda > 0.0 && !targets.empty()) {
        auto reg = regularizer_terms(projection, step.stats, targets, kind);
        step.reg_value = reg.value;
        step.overlap = reg.overlap;
        if (reg.overlap > 0) {
            dtap = Matrix(ff.tap.features.rows(), ff.tap.features.cols());
            std::map<ClassId, double> share;
            for (const auto& s : step.stats) share[s.class_id] = lambda / static_cast<double>(s.sample_count);
            for (std::size_t r = 0; r < batch.labels.size(); ++r) {
                auto it = reg.dmeans.find(batch.labels[r]);
                if (it == reg.dmeans.end()) continue;
                const double scale = share.at(batch.labels[r]);
                auto row = dtap.row(r);
                for (std::size_t c = 0; c < row.size(); ++c) row[c] = scale * it->second[c];
            }
        }
    }
    step.gradient = model.backward_composite(ff.tap.cache, ce.dlogits, dtap);
    return step;
}

CompositeStep local_weight_step(Client& client, const Batch& batch, const LatentMap& targets, const TrainConfig& cfg) {
    auto step = composite_gradient(client.model, client.projection, batch, targets, cfg.lambda, cfg.distance);
    client.model.apply_gradient(step.gradient, cfg.eta_w);
    return step;
}

std::vector<double> projection_step(Projection& projection, std::span<const ClassStats> stats,
                                    const LatentMap& targets, const TrainConfig& cfg) {
    std::vector<double> values;
    values.reserve(cfg.projection_steps);
    const double step = cfg.eta_p * cfg.lambda;
    for (std::size_t s = 0; s < cfg.projection_steps; ++s) {
        auto reg = regularizer_terms(projection, stats, targets, cfg.distance);
        values.push_back(reg.value);
        if (reg.overlap == 0 || step == 0.0) continue;
        axpy(-step, reg.dprojection, projection.mutable_matrix());
    }
    return values;
}

double evaluate(const ClientModel& model, const ClientDataset& data, std::span<const std::size_t> rows) {
    if (rows.empty()) throw ConfigError("evaluate: empty test split");
    const Batch batch = gather(data, rows);
    const auto predictions = argmax_rows(model.forward_full(batch.inputs).logits);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) correct += predictions[i] == batch.labels[i];
    return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

std::optional<double> RoundRecord::honest_accuracy() const {
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& c : clients) {
        if (c.byzantine || !c.test_acc) continue;
        total += *c.test_acc;
        ++count;
    }
    if (count == 0) return std::nullopt;
    return total / static_cast<double>(count);
}

namespace {

void check_consistency(const Topology& topology, const std::vector<Client>& clients, const TrainConfig& cfg,
                       const AdversarySpec& adversary) {
    cfg.validate();
    if (clients.empty()) throw ConfigError("no clients");
    if (topology.num_clients != clients.size()) {
        throw ConfigError("topology has " + std::to_string(topology.num_clients) + " clients, roster has " +
                          std::to_string(clients.size()));
    }
    topology.validate();
    adversary.validate(clients.size());
    const std::size_t classes = clients.front().model.architecture().num_classes;
    for (std::size_t i = 0; i < clients.size(); ++i) {
        const auto& c = clients[i];
        if (c.id != i) throw ConfigError("client ids must be 0..N-1 in order");
        if (c.data == nullptr || c.data->train.empty()) throw ConfigError("client " + std::to_string(i) + " has no training data");
        if (c.model.architecture().num_classes != classes) throw ConfigError("clients disagree on the class count");
        if (c.projection.shared_dim() != cfg.latent_dim) {
            throw ConfigError("client " + std::to_string(i) + " projection has shared dim " +
                              std::to_string(c.projection.shared_dim()) + ", config says " + std::to_string(cfg.latent_dim));
        }
        if (c.projection.local_dim() != c.model.architecture().tap_dim()) {
            throw ConfigError("client " + std::to_string(i) + " projection does not match its tap dim");
        }
    }
}

void check_finite(std::size_t round, const Client& client, double loss) {
    if (!std::isfinite(loss)) throw NumericError(round, client.id, "non-finite training loss");
    if (!client.projection.matrix().all_finite()) throw NumericError(round, client.id, "non-finite projection");
    if (!all_finite(client.model.parameters())) throw NumericError(round, client.id, "non-finite model parameters");
}

bool eval_round(std::size_t round, const TrainConfig& cfg) {
    return (round + 1) % cfg.eval_every == 0 || round + 1 == cfg.rounds;
}

}  // namespace

RunResult run(const Topology& topology, std::vector<Client>& clients, const TrainConfig& cfg,
              const AdversarySpec& adversary, const RoundObserver& observer) {
    check_consistency(topology, clients, cfg, adversary);
    const std::size_t n = clients.size();
    RunResult result;
    result.ledger = CommLedger(n);
    std::mt19937_64 adversary_rng(mix_seed(cfg.seed, 0xAD7E25A11ULL));

    std::vector<Batch> batches(n);
    std::vector<std::vector<ClassStats>> stats(n);
    std::vector<LatentPacket> packets(n);
    std::vector<LatentMap> targets(n);
    std::vector<ClientRoundStats> round_stats(n);

    auto weight_steps = [&](std::size_t i, const LatentMap& pull) {
        Client& c = clients[i];
        double loss = 0.0;
        double reg = 0.0;
        for (std::size_t e = 0; e < cfg.local_epochs; ++e) {
            batches[i] = gather(*c.data, c.sampler.next(cfg.batch_size));
            auto step = local_weight_step(c, batches[i], pull, cfg);
            loss = step.task_loss;
            reg = step.reg_value;
            stats[i] = std::move(step.stats);
        }
        round_stats[i].train_loss = loss;
        round_stats[i].reg_loss = reg;
    };

    auto form_packet = [&](std::size_t i, std::size_t round) {
        packets[i] = make_packet(static_cast<std::uint16_t>(i), static_cast<std::uint32_t>(round), cfg.latent_dim,
                                 project(clients[i].projection, stats[i]));
    };

    for (std::size_t t = 0; t < cfg.rounds; ++t) {
        result.ledger.begin_round(t);
        for (std::size_t i = 0; i < n; ++i) round_stats[i] = ClientRoundStats{i, 0.0, 0.0, std::nullopt, 0, adversary.is_byzantine(i)};

        if (cfg.exchange_first) {
            // Statistics from the current weights on a fresh batch; the weight
            // step then uses this round's targets.
            for (std::size_t i = 0; i < n; ++i) {
                batches[i] = gather(*clients[i].data, clients[i].sampler.next(cfg.batch_size));
                auto ff = clients[i].model.forward_full(batches[i].inputs);
                stats[i] = class_means(ff.tap.features, batches[i].labels);
                form_packet(i, t);
            }
        } else {
            for (std::size_t i = 0; i < n; ++i) {
                weight_steps(i, clients[i].targets);
                form_packet(i, t);
            }
        }

        auto exchange = exchange_round(topology, packets, adversary, adversary_rng, result.ledger);
        if (topology.mode == TopologyMode::parameter_server) {
            const LatentMap global = to_latent_map(ps_global_targets(exchange.delivered, cfg.distance, cfg.weiszfeld));
            std::fill(targets.begin(), targets.end(), global);
        } else {
            for (std::size_t i = 0; i < n; ++i) {
                targets[i] = to_latent_map(decentralized_targets(packets[i], exchange.inbox[i], cfg.distance, cfg.weiszfeld));
            }
        }
        if (observer) observer(RoundObservation{t, packets, exchange.delivered, targets});

        if (cfg.exchange_first) {
            for (std::size_t i = 0; i < n; ++i) {
                const auto pre_stats = stats[i];
                weight_steps(i, targets[i]);
                stats[i] = pre_stats;
            }
        }

        RoundRecord record{t, {}};
        for (std::size_t i = 0; i < n; ++i) {
            Client& c = clients[i];
            projection_step(c.projection, stats[i], targets[i], cfg);
            c.targets = targets[i];
            check_finite(t, c, round_stats[i].train_loss);
            if (eval_round(t, cfg)) round_stats[i].test_acc = evaluate(c.model, *c.data, c.data->test);
            round_stats[i].cum_uplink_bytes = result.ledger.cumulative_uplink(i);
            record.clients.push_back(round_stats[i]);
        }
        result.records.push_back(std::move(record));
    }
    return result;
}

}  // namespace comfed
