#pragma once

// Synchronous message exchange over a graph or parameter-server star, Byzantine
// packet corruption, and the byte ledger.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "comfed/latent.hpp"

namespace comfed {

enum class TopologyMode { graph, parameter_server };
enum class TopologyKind { ring, complete, erdos_renyi, star_ps, empty };

struct TopologySpec {
    TopologyKind kind = TopologyKind::complete;
    double p = 0.5;  // erdos_renyi edge probability

    friend bool operator==(const TopologySpec&, const TopologySpec&) = default;
};

struct Topology {
    TopologyMode mode = TopologyMode::graph;
    std::size_t num_clients = 0;
    std::vector<std::vector<std::size_t>> neighbors;  // sorted; unused in PS mode

    void validate() const;
    bool connected() const;
};

inline constexpr std::size_t kErdosRenyiMaxRetries = 1000;

Topology make_topology(const TopologySpec& spec, std::size_t num_clients, std::uint64_t seed);
Topology make_topology_from_edges(std::size_t num_clients, std::span<const std::pair<std::size_t, std::size_t>> edges);

std::string to_string(TopologyKind kind);
TopologyKind topology_kind_from_string(const std::string& name);

enum class AttackKind { gaussian_noise, sign_flip, constant_vector };

struct AdversarySpec {
    std::set<std::size_t> byzantine;
    AttackKind attack = AttackKind::gaussian_noise;
    // gaussian_noise: noise std; <= 0 selects 10x the std of honest entries this round.
    double sigma = 0.0;
    double constant = 0.0;  // constant_vector fill value

    bool is_byzantine(std::size_t client) const { return byzantine.count(client) > 0; }
    void validate(std::size_t num_clients) const;
};

inline constexpr double kAutoSigmaMultiplier = 10.0;

std::string to_string(AttackKind kind);
AttackKind attack_kind_from_string(const std::string& name);

struct LedgerEntry {
    std::uint64_t uplink = 0;
    std::uint64_t downlink = 0;
};

class CommLedger {
public:
    CommLedger() = default;
    explicit CommLedger(std::size_t num_clients) : num_clients_(num_clients) {}

    // Opens round `round`; rounds must be opened in order starting at 0.
    void begin_round(std::size_t round);

    void charge_uplink(std::size_t client, std::uint64_t bytes);
    void charge_downlink(std::size_t client, std::uint64_t bytes);

    std::size_t num_clients() const noexcept { return num_clients_; }
    std::size_t num_rounds() const noexcept { return rounds_.size(); }
    const LedgerEntry& entry(std::size_t round, std::size_t client) const { return rounds_.at(round).at(client); }

    std::uint64_t cumulative_uplink(std::size_t client) const;
    std::uint64_t cumulative_uplink(std::size_t client, std::size_t through_round) const;
    std::uint64_t total_uplink() const;
    std::uint64_t total_downlink() const;
    std::uint64_t round_uplink(std::size_t round) const;
    std::uint64_t round_downlink(std::size_t round) const;
    // Network-wide uplink through round `through_round` inclusive.
    std::uint64_t total_uplink_through(std::size_t through_round) const;

    // round,client_id,uplink_bytes,downlink_bytes,cumulative_uplink
    void write_csv(std::ostream& out) const;

    friend bool operator==(const CommLedger& a, const CommLedger& b);

private:
    std::size_t num_clients_ = 0;
    std::vector<std::vector<LedgerEntry>> rounds_;
    std::vector<std::uint64_t> totals_up_;
    std::vector<std::uint64_t> totals_down_;
};

// Charges the serialized size of `packet` to `client`'s uplink in the open round.
void charge_uplink(CommLedger& ledger, std::size_t client, const LatentPacket& packet);

// Applies the attack to one packet.
LatentPacket corrupt_packet(const LatentPacket& honest, const AdversarySpec& adversary, double sigma,
                            std::mt19937_64& rng);

struct ExchangeResult {
    std::vector<LatentPacket> delivered;          // per sender, after corruption
    std::vector<std::vector<LatentPacket>> inbox;  // per receiver (graph mode)
    std::size_t ps_broadcast_bytes = 0;            // PS mode: size of the target set sent back
};

// One synchronous exchange. Byzantine senders' packets are corrupted before
// delivery. Uplink is one serialized packet per client; graph downlink is the
// sum of received packets; PS downlink is one target set per client.
ExchangeResult exchange_round(const Topology& topology, std::span<const LatentPacket> packets,
                              const AdversarySpec& adversary, std::mt19937_64& rng, CommLedger& ledger);

}  // namespace comfed
