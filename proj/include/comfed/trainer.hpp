#pragma once

// Round orchestration: local weight step, latent statistics and packet
// formation, exchange, consensus targets, projection steps, evaluation.

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "comfed/consensus.hpp"
#include "comfed/data.hpp"
#include "comfed/latent.hpp"
#include "comfed/model.hpp"
#include "comfed/netsim.hpp"

namespace comfed {

enum class ConsensusMode { decentralized, ps };

std::string to_string(ConsensusMode mode);
ConsensusMode consensus_mode_from_string(const std::string& name);

struct TrainConfig {
    std::size_t rounds = 250;
    double eta_w = 1e-3;
    double eta_p = 1e-3;
    double lambda = 0.4;
    std::size_t projection_steps = 10;
    std::size_t batch_size = 32;
    std::size_t latent_dim = 8;
    DistanceKind distance = DistanceKind::squared_l2;
    ConsensusMode consensus = ConsensusMode::decentralized;
    std::size_t eval_every = 1;
    std::uint64_t seed = 0;
    // Exchange and compute targets before the weight step instead of after.
    bool exchange_first = false;
    std::size_t local_epochs = 1;  // weight steps per round
    WeiszfeldConfig weiszfeld;

    void validate() const;

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Uniform minibatches without replacement; reshuffles when an epoch runs out.
class BatchSampler {
public:
    BatchSampler() = default;
    BatchSampler(std::vector<std::size_t> pool, std::uint64_t seed);

    std::vector<std::size_t> next(std::size_t batch_size);

private:
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    std::mt19937_64 rng_;
};

struct Client {
    std::size_t id = 0;
    ClientModel model;
    Projection projection;
    const ClientDataset* data = nullptr;
    BatchSampler sampler;
    LatentMap targets;  // consensus targets from the previous exchange
};

// Derives model, projection and sampler seeds from (seed, id).
Client make_client(std::size_t id, const ClientArchitecture& arch, const ClientDataset& data, std::size_t latent_dim,
                   std::uint64_t seed);

struct CompositeStep {
    double task_loss = 0.0;
    double reg_value = 0.0;
    std::size_t overlap = 0;
    ModelGradient gradient;         // of task_loss + lambda * reg_value
    std::vector<ClassStats> stats;  // per-class tap means before the update
};

// Task loss plus lambda-weighted regularizer toward fixed targets. The
// regularizer reaches the weights through the per-class batch means of the
// tap: each sample of class m receives dmean_m / n_m.
CompositeStep composite_gradient(const ClientModel& model, const Projection& projection, const Batch& batch,
                                 const LatentMap& targets, double lambda, DistanceKind kind);

// w <- w - eta_w * grad(L_local + lambda * L_reg); targets are constants.
CompositeStep local_weight_step(Client& client, const Batch& batch, const LatentMap& targets, const TrainConfig& cfg);

// P <- P - eta_p * lambda * dP, projection_steps times with stats and targets
// held fixed. Returns the regularizer value before each step.
std::vector<double> projection_step(Projection& projection, std::span<const ClassStats> stats,
                                    const LatentMap& targets, const TrainConfig& cfg);

// Argmax accuracy on the given rows, ties toward the lowest class.
double evaluate(const ClientModel& model, const ClientDataset& data, std::span<const std::size_t> rows);

struct ClientRoundStats {
    std::size_t client_id = 0;
    double train_loss = 0.0;
    double reg_loss = 0.0;
    std::optional<double> test_acc;
    std::uint64_t cum_uplink_bytes = 0;
    bool byzantine = false;
};

struct RoundRecord {
    std::size_t round = 0;
    std::vector<ClientRoundStats> clients;

    // Mean test accuracy over honest clients; empty when not evaluated.
    std::optional<double> honest_accuracy() const;
};

struct RoundObservation {
    std::size_t round = 0;
    std::span<const LatentPacket> honest_packets;
    std::span<const LatentPacket> delivered;
    std::span<const LatentMap> targets;  // per client
};

using RoundObserver = std::function<void(const RoundObservation&)>;

struct RunResult {
    std::vector<RoundRecord> records;
    CommLedger ledger;
};

RunResult run(const Topology& topology, std::vector<Client>& clients, const TrainConfig& cfg,
              const AdversarySpec& adversary = {}, const RoundObserver& observer = {});

enum class BaselineKind { local_only, modality_fedavg };

std::string to_string(BaselineKind kind);

// local_only: plain SGD, no communication. modality_fedavg: clients with the
// same modality subset average their parameters after every round, charging
// 4 bytes per parameter up and down.
RunResult run_baseline(BaselineKind kind, std::vector<Client>& clients, const TrainConfig& cfg);

}  // namespace comfed
