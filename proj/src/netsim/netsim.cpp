#include "comfed/netsim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <queue>

#include "comfed/error.hpp"

namespace comfed {

void Topology::validate() const {
    if (mode == TopologyMode::parameter_server) return;
    if (neighbors.size() != num_clients) throw ConfigError("adjacency size does not match client count");
    for (std::size_t i = 0; i < num_clients; ++i) {
        for (std::size_t j : neighbors[i]) {
            if (j >= num_clients) throw ConfigError("neighbor index out of range");
            if (j == i) throw ConfigError("self-loop at client " + std::to_string(i));
            const auto& back = neighbors[j];
            if (!std::binary_search(back.begin(), back.end(), i)) {
                throw ConfigError("adjacency not symmetric between " + std::to_string(i) + " and " + std::to_string(j));
            }
        }
    }
}

bool Topology::connected() const {
    if (mode == TopologyMode::parameter_server || num_clients <= 1) return true;
    std::vector<bool> seen(num_clients, false);
    std::queue<std::size_t> frontier;
    frontier.push(0);
    seen[0] = true;
    std::size_t count = 1;
    while (!frontier.empty()) {
        const std::size_t i = frontier.front();
        frontier.pop();
        for (std::size_t j : neighbors[i]) {
            if (!seen[j]) {
                seen[j] = true;
                ++count;
                frontier.push(j);
            }
        }
    }
    return count == num_clients;
}

Topology make_topology_from_edges(std::size_t num_clients, std::span<const std::pair<std::size_t, std::size_t>> edges) {
    Topology t{TopologyMode::graph, num_clients, std::vector<std::vector<std::size_t>>(num_clients)};
    for (auto [a, b] : edges) {
        if (a >= num_clients || b >= num_clients) throw ConfigError("edge endpoint out of range");
        if (a == b) throw ConfigError("self-loop at client " + std::to_string(a));
        t.neighbors[a].push_back(b);
        t.neighbors[b].push_back(a);
    }
    for (auto& n : t.neighbors) {
        std::sort(n.begin(), n.end());
        n.erase(std::unique(n.begin(), n.end()), n.end());
    }
    return t;
}

Topology make_topology(const TopologySpec& spec, std::size_t n, std::uint64_t seed) {
    if (spec.kind == TopologyKind::star_ps) {
        if (n < 1) throw ConfigError("parameter server needs at least one client");
        return Topology{TopologyMode::parameter_server, n, std::vector<std::vector<std::size_t>>(n)};
    }
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    switch (spec.kind) {
        case TopologyKind::empty:
            break;
        case TopologyKind::ring:
            if (n < 2) throw ConfigError("ring needs N >= 2");
            for (std::size_t i = 0; i < n; ++i) edges.emplace_back(i, (i + 1) % n);
            break;
        case TopologyKind::complete:
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = i + 1; j < n; ++j) edges.emplace_back(i, j);
            break;
        case TopologyKind::erdos_renyi: {
            if (n < 2) throw ConfigError("erdos_renyi needs N >= 2");
            if (!(spec.p > 0.0 && spec.p <= 1.0)) throw ConfigError("erdos_renyi p must be in (0, 1]");
            std::mt19937_64 rng(seed);
            std::bernoulli_distribution coin(spec.p);
            for (std::size_t attempt = 0; attempt < kErdosRenyiMaxRetries; ++attempt) {
                edges.clear();
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = i + 1; j < n; ++j)
                        if (coin(rng)) edges.emplace_back(i, j);
                Topology t = make_topology_from_edges(n, edges);
                if (t.connected()) return t;
            }
            throw ConfigError("erdos_renyi(p=" + std::to_string(spec.p) + ", N=" + std::to_string(n) +
                              ") not connected after " + std::to_string(kErdosRenyiMaxRetries) + " draws");
        }
        case TopologyKind::star_ps:
            break;
    }
    return make_topology_from_edges(n, edges);
}

std::string to_string(TopologyKind kind) {
    switch (kind) {
        case TopologyKind::ring: return "ring";
        case TopologyKind::complete: return "complete";
        case TopologyKind::erdos_renyi: return "erdos_renyi";
        case TopologyKind::star_ps: return "star_ps";
        case TopologyKind::empty: return "empty";
    }
    return "unknown";
}

TopologyKind topology_kind_from_string(const std::string& name) {
    for (auto k : {TopologyKind::ring, TopologyKind::complete, TopologyKind::erdos_renyi, TopologyKind::star_ps,
                   TopologyKind::empty}) {
        if (name == to_string(k)) return k;
    }
    if (name == "ps") return TopologyKind::star_ps;
    throw ConfigError("unknown topology '" + name + "'");
}

void AdversarySpec::validate(std::size_t num_clients) const {
    if (byzantine.size() >= num_clients && !byzantine.empty()) {
        throw ConfigError("gamma = " + std::to_string(byzantine.size()) + " must be < N = " + std::to_string(num_clients));
    }
    for (std::size_t id : byzantine) {
        if (id >= num_clients) throw ConfigError("byzantine id " + std::to_string(id) + " out of range");
    }
}

std::string to_string(AttackKind kind) {
    switch (kind) {
        case AttackKind::gaussian_noise: return "gaussian_noise";
        case AttackKind::sign_flip: return "sign_flip";
        case AttackKind::constant_vector: return "constant_vector";
    }
    return "unknown";
}

AttackKind attack_kind_from_string(const std::string& name) {
    for (auto k : {AttackKind::gaussian_noise, AttackKind::sign_flip, AttackKind::constant_vector}) {
        if (name == to_string(k)) return k;
    }
    throw ConfigError("unknown attack '" + name + "'");
}

void CommLedger::begin_round(std::size_t round) {
    if (round != rounds_.size()) {
        throw ProtocolError("ledger expected round " + std::to_string(rounds_.size()) + ", got " + std::to_string(round));
    }
    rounds_.emplace_back(num_clients_);
    totals_up_.resize(num_clients_, 0);
    totals_down_.resize(num_clients_, 0);
}

void CommLedger::charge_uplink(std::size_t client, std::uint64_t bytes) {
    if (rounds_.empty()) throw ProtocolError("charge before begin_round");
    rounds_.back().at(client).uplink += bytes;
    totals_up_[client] += bytes;
}

void CommLedger::charge_downlink(std::size_t client, std::uint64_t bytes) {
    if (rounds_.empty()) throw ProtocolError("charge before begin_round");
    rounds_.back().at(client).downlink += bytes;
    totals_down_[client] += bytes;
}

std::uint64_t CommLedger::cumulative_uplink(std::size_t client) const {
    return totals_up_.empty() ? 0 : totals_up_.at(client);
}

std::uint64_t CommLedger::cumulative_uplink(std::size_t client, std::size_t through_round) const {
    std::uint64_t total = 0;
    for (std::size_t r = 0; r <= through_round && r < rounds_.size(); ++r) total += rounds_[r][client].uplink;
    return total;
}

std::uint64_t CommLedger::total_uplink() const {
    return std::accumulate(totals_up_.begin(), totals_up_.end(), std::uint64_t{0});
}

std::uint64_t CommLedger::total_downlink() const {
    return std::accumulate(totals_down_.begin(), totals_down_.end(), std::uint64_t{0});
}

std::uint64_t CommLedger::round_uplink(std::size_t round) const {
    std::uint64_t total = 0;
    for (const auto& e : rounds_.at(round)) total += e.uplink;
    return total;
}

std::uint64_t CommLedger::round_downlink(std::size_t round) const {
    std::uint64_t total = 0;
    for (const auto& e : rounds_.at(round)) total += e.downlink;
    return total;
}

std::uint64_t CommLedger::total_uplink_through(std::size_t through_round) const {
    std::uint64_t total = 0;
    for (std::size_t r = 0; r <= through_round && r < rounds_.size(); ++r) total += round_uplink(r);
    return total;
}

void CommLedger::write_csv(std::ostream& out) const {
    out << "round,client_id,uplink_bytes,downlink_bytes,cumulative_uplink\n";
    std::vector<std::uint64_t> cumulative(num_clients_, 0);
    for (std::size_t r = 0; r < rounds_.size(); ++r) {
        for (std::size_t c = 0; c < num_clients_; ++c) {
            cumulative[c] += rounds_[r][c].uplink;
            out << r << ',' << c << ',' << rounds_[r][c].uplink << ',' << rounds_[r][c].downlink << ','
                << cumulative[c] << '\n';
        }
    }
}

bool operator==(const CommLedger& a, const CommLedger& b) {
    if (a.num_clients_ != b.num_clients_ || a.rounds_.size() != b.rounds_.size()) return false;
    for (std::size_t r = 0; r < a.rounds_.size(); ++r) {
        for (std::size_t c = 0; c < a.num_clients_; ++c) {
            if (a.rounds_[r][c].uplink != b.rounds_[r][c].uplink || a.rounds_[r][c].downlink != b.rounds_[r][c].downlink)
                return false;
        }
    }
    return true;
}

void charge_uplink(CommLedger& ledger, std::size_t client, const LatentPacket& packet) {
    ledger.charge_uplink(client, packet.wire_size());
}

LatentPacket corrupt_packet(const LatentPacket& honest, const AdversarySpec& adversary, double sigma,
                            std::mt19937_64& rng) {
    LatentPacket out = honest;
    switch (adversary.attack) {
        case AttackKind::gaussian_noise: {
            std::normal_distribution<double> noise(0.0, sigma);
            for (auto& [_, v] : out.entries)
                for (float& f : v) f = static_cast<float>(f + noise(rng));
            break;
        }
        case AttackKind::sign_flip:
            for (auto& [_, v] : out.entries)
                for (float& f : v) f = -f;
            break;
        case AttackKind::constant_vector:
            for (auto& [_, v] : out.entries) std::fill(v.begin(), v.end(), static_cast<float>(adversary.constant));
            break;
    }
    return out;
}

namespace {

double honest_entry_std(std::span<const LatentPacket> packets, const AdversarySpec& adversary) {
    double sum = 0.0;
    double sum_sq = 0.0;
    std::size_t count = 0;
    for (const auto& p : packets) {
        if (adversary.is_byzantine(p.sender)) continue;
        for (const auto& [_, v] : p.entries) {
            for (float f : v) {
                sum += f;
                sum_sq += static_cast<double>(f) * f;
                ++count;
            }
        }
    }
    if (count < 2) return 1.0;
    const double mean = sum / static_cast<double>(count);
    const double var = std::max(0.0, sum_sq / static_cast<double>(count) - mean * mean);
    return std::sqrt(var);
}

}  // namespace

ExchangeResult exchange_round(const Topology& topology, std::span<const LatentPacket> packets,
                              const AdversarySpec& adversary, std::mt19937_64& rng, CommLedger& ledger) {
    if (packets.size() != topology.num_clients) {
        throw ProtocolError("expected " + std::to_string(topology.num_clients) + " packets, got " +
                            std::to_string(packets.size()));
    }
    ExchangeResult result;
    if (packets.empty()) return result;
    const auto round = packets.front().round;
    for (std::size_t i = 0; i < packets.size(); ++i) {
        if (packets[i].round != round) {
            throw ProtocolError("client " + std::to_string(i) + " sent a packet for round " +
                                std::to_string(packets[i].round) + " during round " + std::to_string(round));
        }
        if (packets[i].sender != i) throw ProtocolError("packet sender does not match its slot");
    }

    double sigma = adversary.sigma;
    if (adversary.attack == AttackKind::gaussian_noise && sigma <= 0.0 && !adversary.byzantine.empty()) {
        sigma = kAutoSigmaMultiplier * honest_entry_std(packets, adversary);
    }

    result.delivered.reserve(packets.size());
    for (std::size_t i = 0; i < packets.size(); ++i) {
        result.delivered.push_back(adversary.is_byzantine(i) ? corrupt_packet(packets[i], adversary, sigma, rng)
                                                             : packets[i]);
        ledger.charge_uplink(i, result.delivered.back().wire_size());
    }

    result.inbox.resize(packets.size());
    if (topology.mode == TopologyMode::graph) {
        for (std::size_t i = 0; i < packets.size(); ++i) {
            for (std::size_t j : topology.neighbors[i]) {
                result.inbox[i].push_back(result.delivered[j]);
                ledger.charge_downlink(i, result.delivered[j].wire_size());
            }
        }
    } else {
        std::set<ClassId> classes;
        for (const auto& p : result.delivered)
            for (const auto& [cls, _] : p.entries) classes.insert(cls);
        result.ps_broadcast_bytes = packet_wire_size(packets.front().dim, classes.size());
        for (std::size_t i = 0; i < packets.size(); ++i) ledger.charge_downlink(i, result.ps_broadcast_bytes);
    }
    return result;
}

}  // namespace comfed
