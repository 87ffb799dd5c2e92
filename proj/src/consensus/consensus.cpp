#include "comfed/consensus.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <set>

#include "comfed/error.hpp"
#include "comfed/kernels.hpp"

namespace comfed {

void WeiszfeldConfig::validate() const {
    if (max_iters < 1) throw ConfigError("weiszfeld max_iters must be >= 1");
    if (!(tolerance > 0.0)) throw ConfigError("weiszfeld tolerance must be > 0");
    if (!(anchor_epsilon >= 0.0)) throw ConfigError("weiszfeld anchor_epsilon must be >= 0");
}

namespace {

void require_uniform(std::span<const std::vector<double>> points, const char* who) {
    if (points.empty()) throw DomainError(std::string(who) + ": empty point set");
    for (const auto& p : points) {
        if (p.size() != points.front().size()) throw ShapeError(std::string(who) + ": points differ in length");
    }
}

std::vector<double> coordinate_median(std::span<const std::vector<double>> points) {
    const std::size_t dim = points.front().size();
    std::vector<double> out(dim);
    std::vector<double> column(points.size());
    for (std::size_t c = 0; c < dim; ++c) {
        for (std::size_t j = 0; j < points.size(); ++j) column[j] = points[j][c];
        std::sort(column.begin(), column.end());
        const std::size_t mid = column.size() / 2;
        out[c] = column.size() % 2 ? column[mid] : 0.5 * (column[mid - 1] + column[mid]);
    }
    return out;
}

// First data point p with ||sum_{q != p} (q - p) / ||q - p|| || <= multiplicity(p),
// i.e. zero is in the subdifferential of the objective at p.
const std::vector<double>* optimal_data_point(std::span<const std::vector<double>> points, double epsilon) {
    const auto& k = kernels::active();
    const std::size_t dim = points.front().size();
    std::vector<double> pull(dim);
    for (const auto& p : points) {
        std::fill(pull.begin(), pull.end(), 0.0);
        std::size_t multiplicity = 0;
        for (const auto& q : points) {
            const double dist = std::sqrt(k.squared_distance(p.data(), q.data(), dim));
            if (dist <= epsilon) {
                ++multiplicity;
                continue;
            }
            for (std::size_t c = 0; c < dim; ++c) pull[c] += (q[c] - p[c]) / dist;
        }
        if (std::sqrt(k.dot(pull.data(), pull.data(), dim)) <= static_cast<double>(multiplicity)) return &p;
    }
    return nullptr;
}

}  // namespace

std::optional<std::vector<double>> mean_target(std::span<const std::vector<double>> points) {
    if (points.empty()) return std::nullopt;
    require_uniform(points, "mean_target");
    std::vector<double> mean(points.front().size(), 0.0);
    const auto& k = kernels::active();
    for (const auto& p : points) k.axpy(1.0, p.data(), mean.data(), mean.size());
    const double inv = 1.0 / static_cast<double>(points.size());
    for (double& v : mean) v *= inv;
    return mean;
}

double sum_of_distances(std::span<const std::vector<double>> points, std::span<const double> x) {
    double total = 0.0;
    for (const auto& p : points) total += std::sqrt(kernels::squared_distance(p, x));
    return total;
}

WeiszfeldResult geometric_median_traced(std::span<const std::vector<double>> points, const WeiszfeldConfig& cfg) {
    cfg.validate();
    require_uniform(points, "geometric_median");
    WeiszfeldResult result;
    const std::size_t dim = points.front().size();

    if (points.size() == 1) {
        result.point = points.front();
        result.converged = true;
        result.objective.push_back(0.0);
        return result;
    }
    if (points.size() == 2) {
        // Every point of the segment is optimal; take the midpoint.
        result.point.resize(dim);
        for (std::size_t c = 0; c < dim; ++c) result.point[c] = 0.5 * (points[0][c] + points[1][c]);
        result.converged = true;
        result.objective.push_back(sum_of_distances(points, result.point));
        return result;
    }

    const auto& k = kernels::active();
    std::vector<double> x = coordinate_median(points);
    result.objective.push_back(sum_of_distances(points, x));

    // Weiszfeld only creeps toward a minimizer that sits on a data point, so
    // test every data point for optimality up front.
    if (const auto* vertex = optimal_data_point(points, cfg.anchor_epsilon)) {
        result.point = *vertex;
        result.converged = true;
        result.anchored = true;
        result.objective.push_back(sum_of_distances(points, result.point));
        return result;
    }

    std::vector<double> weighted_sum(dim);
    std::vector<double> residual(dim);
    std::vector<double> next(dim);
    for (std::size_t it = 0; it < cfg.max_iters; ++it) {
        std::fill(weighted_sum.begin(), weighted_sum.end(), 0.0);
        std::fill(residual.begin(), residual.end(), 0.0);
        double inverse_sum = 0.0;
        std::size_t coincident = 0;
        const std::vector<double>* anchor = nullptr;
        for (const auto& p : points) {
            const double dist = std::sqrt(k.squared_distance(p.data(), x.data(), dim));
            if (dist <= cfg.anchor_epsilon) {
                ++coincident;
                anchor = &p;
                continue;
            }
            const double w = 1.0 / dist;
            inverse_sum += w;
            k.axpy(w, p.data(), weighted_sum.data(), dim);
            for (std::size_t c = 0; c < dim; ++c) residual[c] += w * (p[c] - x[c]);
        }
        ++result.iterations;

        if (inverse_sum == 0.0) {
            // Every point sits on the iterate.
            result.point = *anchor;
            result.converged = true;
            result.anchored = true;
            result.objective.push_back(0.0);
            return result;
        }

        for (std::size_t c = 0; c < dim; ++c) next[c] = weighted_sum[c] / inverse_sum;
        if (coincident > 0) {
            const double pull = std::sqrt(k.dot(residual.data(), residual.data(), dim));
            const double mult = static_cast<double>(coincident);
            if (pull <= mult) {
                // Zero lies in the subdifferential at the anchor: it is the median.
                result.point = *anchor;
                result.converged = true;
                result.anchored = true;
                result.objective.push_back(sum_of_distances(points, result.point));
                return result;
            }
            const double blend = mult / pull;
            for (std::size_t c = 0; c < dim; ++c) next[c] = (1.0 - blend) * next[c] + blend * x[c];
        }

        const double move = std::sqrt(k.squared_distance(next.data(), x.data(), dim));
        x.swap(next);
        result.objective.push_back(sum_of_distances(points, x));
        assert(result.objective.back() <= result.objective[result.objective.size() - 2] * (1.0 + 1e-12) + 1e-12);
        if (move < cfg.tolerance) {
            result.converged = true;
            break;
        }
    }
    result.point = std::move(x);
    return result;
}

std::vector<double> geometric_median(std::span<const std::vector<double>> points, const WeiszfeldConfig& cfg) {
    return geometric_median_traced(points, cfg).point;
}

namespace {

std::vector<ConsensusTarget> targets_over(std::vector<const LatentPacket*> packets, DistanceKind kind,
                                          const WeiszfeldConfig& cfg) {
    std::sort(packets.begin(), packets.end(),
              [](const LatentPacket* a, const LatentPacket* b) { return a->sender < b->sender; });
    const auto round = packets.front()->round;
    const auto dim = packets.front()->dim;
    std::set<ClassId> classes;
    for (const auto* p : packets) {
        if (p->round != round) {
            throw ProtocolError("packet from client " + std::to_string(p->sender) + " is for round " +
                                std::to_string(p->round) + ", expected " + std::to_string(round));
        }
        if (p->dim != dim) throw ShapeError("packets disagree on latent dimension");
        for (const auto& [cls, _] : p->entries) classes.insert(cls);
    }

    std::vector<ConsensusTarget> out;
    PointSet points;
    for (ClassId cls : classes) {
        points.clear();
        for (const auto* p : packets) {
            if (auto it = p->entries.find(cls); it != p->entries.end()) {
                points.emplace_back(it->second.begin(), it->second.end());
            }
        }
        ConsensusTarget t;
        t.class_id = cls;
        t.contributor_count = points.size();
        t.value = kind == DistanceKind::squared_l2 ? *mean_target(points) : geometric_median(points, cfg);
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace

std::vector<ConsensusTarget> decentralized_targets(const LatentPacket& self, std::span<const LatentPacket> neighbors,
                                                   DistanceKind kind, const WeiszfeldConfig& cfg) {
    std::vector<const LatentPacket*> packets{&self};
    for (const auto& p : neighbors) packets.push_back(&p);
    return targets_over(std::move(packets), kind, cfg);
}

std::vector<ConsensusTarget> ps_global_targets(std::span<const LatentPacket> packets, DistanceKind kind,
                                               const WeiszfeldConfig& cfg) {
    if (packets.empty()) return {};
    std::set<std::uint16_t> senders;
    std::vector<const LatentPacket*> ptrs;
    for (const auto& p : packets) {
        if (!senders.insert(p.sender).second) {
            throw ProtocolError("duplicate packet from client " + std::to_string(p.sender));
        }
        ptrs.push_back(&p);
    }
    return targets_over(std::move(ptrs), kind, cfg);
}

LatentMap to_latent_map(std::span<const ConsensusTarget> targets) {
    LatentMap out;
    for (const auto& t : targets) out[t.class_id] = t.value;
    return out;
}

}  // namespace comfed
