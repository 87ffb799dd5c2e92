#pragma once

// Per-class consensus targets: the arithmetic mean minimizes the sum of
// squared-L2 pulls, the geometric median minimizes the sum of L2 pulls.

#include <optional>
#include <span>
#include <vector>

#include "comfed/latent.hpp"

namespace comfed {

struct WeiszfeldConfig {
    std::size_t max_iters = 100;
    double tolerance = 1e-9;        // stop once the iterate moves less than this
    double anchor_epsilon = 1e-12;  // closer than this to a data point counts as "on" it

    void validate() const;

    friend bool operator==(const WeiszfeldConfig&, const WeiszfeldConfig&) = default;
};

struct ConsensusTarget {
    ClassId class_id = 0;
    std::vector<double> value;
    std::size_t contributor_count = 0;
};

using PointSet = std::vector<std::vector<double>>;

// Empty input yields no target.
std::optional<std::vector<double>> mean_target(std::span<const std::vector<double>> points);

double sum_of_distances(std::span<const std::vector<double>> points, std::span<const double> x);

struct WeiszfeldResult {
    std::vector<double> point;
    std::size_t iterations = 0;
    bool converged = false;
    bool anchored = false;             // terminated on a data point that is optimal
    std::vector<double> objective;     // objective at the start and after each iteration
};

// A data point that satisfies the optimality condition is returned directly.
// Otherwise: Weiszfeld iteration from the coordinate-wise median, with the Vardi-Zhang
// modification when the iterate coincides with data points. One point returns
// itself; two points return their midpoint.
WeiszfeldResult geometric_median_traced(std::span<const std::vector<double>> points, const WeiszfeldConfig& cfg);

std::vector<double> geometric_median(std::span<const std::vector<double>> points, const WeiszfeldConfig& cfg);

// Targets over {self} U neighbors, one per class present in at least one packet.
std::vector<ConsensusTarget> decentralized_targets(const LatentPacket& self,
                                                   std::span<const LatentPacket> neighbors,
                                                   DistanceKind kind, const WeiszfeldConfig& cfg);

// Server-side targets over every participating client.
std::vector<ConsensusTarget> ps_global_targets(std::span<const LatentPacket> packets, DistanceKind kind,
                                               const WeiszfeldConfig& cfg);

LatentMap to_latent_map(std::span<const ConsensusTarget> targets);

}  // namespace comfed
