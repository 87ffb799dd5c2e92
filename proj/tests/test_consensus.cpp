#include <doctest.h>

#include <cmath>
#include <random>

#include "comfed/consensus.hpp"
#include "comfed/error.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace comfed;

namespace {

const WeiszfeldConfig kCfg{};

PointSet random_points(std::size_t n, std::size_t d, std::mt19937_64& rng, double scale = 1.0) {
    PointSet pts;
    for (std::size_t i = 0; i < n; ++i) pts.push_back(testutil::random_vector(d, rng, scale));
    return pts;
}

double dist(std::span<const double> a, std::span<const double> b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

LatentPacket packet(std::uint16_t sender, std::uint32_t round, LatentMap entries, std::size_t d = 2) {
    return make_packet(sender, round, d, entries);
}

}  // namespace

TEST_CASE("mean target") {
    const PointSet pts{{1, 2}, {3, 4}};
    CHECK(*mean_target(pts) == std::vector<double>{2, 3});
    const PointSet one{{5, -1}};
    CHECK(*mean_target(one) == one[0]);
    CHECK_FALSE(mean_target(PointSet{}).has_value());
}

TEST_CASE("mean is the minimizer of summed squared distances") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        const auto pts = random_points(testutil::uniform_index(1, 9, rng), 3, rng);
        const auto mean = *mean_target(pts);
        auto sumsq = [&](std::span<const double> x) {
            double s = 0;
            for (const auto& p : pts) s += dist(p, x) * dist(p, x);
            return s;
        };
        auto moved = mean;
        for (double& v : moved) v += std::normal_distribution<double>(0, 0.1)(rng);
        CHECK(sumsq(moved) > sumsq(mean));
    }
}

TEST_CASE("multiple squared pulls equal one pull toward the mean, scaled by n") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const auto pts = random_points(testutil::uniform_index(1, 9, rng), 4, rng);
        const auto x = testutil::random_vector(4, rng);
        const auto mean = *mean_target(pts);
        std::vector<double> summed(4, 0.0);
        for (const auto& p : pts) {
            const auto g = phi_grad_x(DistanceKind::squared_l2, x, p);
            for (std::size_t k = 0; k < 4; ++k) summed[k] += g[k];
        }
        const auto single = phi_grad_x(DistanceKind::squared_l2, x, mean);
        for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(summed[k] - pts.size() * single[k]) < 1e-10);

        // Value identity: sum ||x-u||^2 = n ||x-mean||^2 + sum ||u-mean||^2.
        double lhs = 0, spread = 0;
        for (const auto& p : pts) {
            lhs += dist(x, p) * dist(x, p);
            spread += dist(p, mean) * dist(p, mean);
        }
        CHECK(lhs == doctest::Approx(pts.size() * dist(x, mean) * dist(x, mean) + spread).epsilon(1e-12));
    }
}

TEST_CASE("geometric median: examples") {
    const PointSet one{{3, 4}};
    CHECK(geometric_median(one, kCfg) == one[0]);

    const PointSet cross{{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
    const auto c = geometric_median(cross, kCfg);
    CHECK(std::abs(c[0]) < 1e-9);
    CHECK(std::abs(c[1]) < 1e-9);

    const PointSet pair{{0, 0}, {2, 4}};
    CHECK(geometric_median(pair, kCfg) == std::vector<double>{1, 2});

    const PointSet tri{{0, 0}, {1, 0}, {0, 1}};
    const auto t = geometric_median(tri, kCfg);
    CHECK(sum_of_distances(tri, t) - oracle::geometric_median_objective_2d(tri) < 1e-4);

    PointSet cluster(6, std::vector<double>{0, 0});
    cluster.push_back({100, 100});
    const auto robust = geometric_median(cluster, kCfg);
    CHECK(dist(robust, std::vector<double>{0, 0}) < 1e-3);
    const auto mean = *mean_target(cluster);
    CHECK(mean[0] == doctest::Approx(100.0 / 7));
}

TEST_CASE("geometric median: anchored on an optimal data point") {
    // The middle point of three collinear points is the median.
    const PointSet line{{0, 0}, {1, 0}, {5, 0}};
    const auto r = geometric_median_traced(line, kCfg);
    CHECK(r.point == std::vector<double>{1, 0});
    CHECK(r.anchored);
    // Coordinate-wise median start lands on a point that is not optimal and
    // must leave it.
    const PointSet tri{{0, 0}, {4, 0}, {0, 4}, {1, 1}};
    const auto t = geometric_median_traced(tri, kCfg);
    CHECK(sum_of_distances(tri, t.point) - oracle::geometric_median_objective_2d(tri) < 1e-6);
}

TEST_CASE("geometric median matches the grid oracle and decreases monotonically") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 60; ++trial) {
        const auto pts = random_points(testutil::uniform_index(1, 9, rng), 2, rng, 3.0);
        const auto r = geometric_median_traced(pts, kCfg);
        CHECK(sum_of_distances(pts, r.point) - oracle::geometric_median_objective_2d(pts, 200) < 1e-4);
        for (std::size_t k = 1; k < r.objective.size(); ++k) CHECK(r.objective[k] <= r.objective[k - 1] + 1e-12);
    }
}

TEST_CASE("geometric median is translation equivariant") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t d = testutil::uniform_index(1, 6, rng);
        auto pts = random_points(testutil::uniform_index(3, 9, rng), d, rng);
        const auto shift = testutil::random_vector(d, rng, 10.0);
        const auto base = geometric_median(pts, kCfg);
        for (auto& p : pts) {
            for (std::size_t k = 0; k < d; ++k) p[k] += shift[k];
        }
        const auto moved = geometric_median(pts, kCfg);
        for (std::size_t k = 0; k < d; ++k) CHECK(std::abs(moved[k] - (base[k] + shift[k])) < 1e-6);
    }
}

TEST_CASE("geometric median under contamination stays near the honest points") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t n = testutil::uniform_index(3, 9, rng);
        const std::size_t gamma = (n - 1) / 2;
        const std::size_t d = testutil::uniform_index(1, 4, rng);
        auto pts = random_points(n - gamma, d, rng);
        double diameter = 0;
        for (const auto& a : pts) {
            for (const auto& b : pts) diameter = std::max(diameter, dist(a, b));
        }
        auto far = testutil::random_vector(d, rng);
        const double norm = dist(far, std::vector<double>(d, 0.0));
        for (double& v : far) v *= 1e3 * std::max(diameter, 1.0) / norm;
        for (std::size_t k = 0; k < gamma; ++k) pts.push_back(far);

        const auto gm = geometric_median(pts, kCfg);
        // Provable bound: ||x* - h|| <= 2 (n - gamma) / (n - 2 gamma) * diameter for any honest h.
        const double bound = 2.0 * static_cast<double>(n - gamma) / static_cast<double>(n - 2 * gamma) * diameter;
        CHECK(dist(gm, pts.front()) <= bound + 1e-6);
        CHECK(dist(*mean_target(pts), pts.front()) > bound);

        if (d == 1) {
            // In one dimension the median lies inside the honest range.
            double lo = pts.front()[0], hi = lo;
            for (std::size_t k = 0; k < n - gamma; ++k) {
                lo = std::min(lo, pts[k][0]);
                hi = std::max(hi, pts[k][0]);
            }
            CHECK(gm[0] >= lo - kCfg.tolerance);
            CHECK(gm[0] <= hi + kCfg.tolerance);
        }
    }
}

TEST_CASE("weiszfeld config validation") {
    CHECK_THROWS_AS((WeiszfeldConfig{0, 1e-9, 1e-12}).validate(), ConfigError);
    CHECK_THROWS_AS((WeiszfeldConfig{10, 0.0, 1e-12}).validate(), ConfigError);
}

TEST_CASE("decentralized targets") {
    const auto self = packet(0, 3, {{0, {1, 1}}, {2, {4, 0}}});
    for (auto kind : {DistanceKind::squared_l2, DistanceKind::l2}) {
        const auto alone = to_latent_map(decentralized_targets(self, {}, kind, kCfg));
        CHECK(alone == self.as_doubles());
        const LatentPacket copies[] = {packet(1, 3, {{0, {1, 1}}, {2, {4, 0}}}), packet(2, 3, {{0, {1, 1}}, {2, {4, 0}}})};
        CHECK(to_latent_map(decentralized_targets(self, copies, kind, kCfg)) == self.as_doubles());
    }

    // Missing classes: class 1 appears only at a neighbor, class 2 only at self.
    const LatentPacket nb[] = {packet(1, 3, {{0, {3, 1}}, {1, {7, 7}}})};
    const auto targets = decentralized_targets(self, nb, DistanceKind::squared_l2, kCfg);
    const auto map = to_latent_map(targets);
    CHECK(map.at(0) == std::vector<double>{2, 1});
    CHECK(map.at(1) == std::vector<double>{7, 7});
    CHECK(map.at(2) == std::vector<double>{4, 0});
    for (const auto& t : targets) CHECK(t.contributor_count == (t.class_id == 0 ? 2u : 1u));

    const LatentPacket stale[] = {packet(1, 2, {{0, {3, 1}}})};
    CHECK_THROWS_AS(decentralized_targets(self, stale, DistanceKind::squared_l2, kCfg), ProtocolError);
}

TEST_CASE("decentralized L2 target over three packets matches the oracle") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        PointSet pts = random_points(3, 2, rng);
        std::vector<LatentPacket> pk;
        for (std::uint16_t s = 0; s < 3; ++s) pk.push_back(packet(s, 0, {{5, pts[s]}}));
        PointSet rounded;
        for (const auto& p : pk) rounded.push_back(p.as_doubles().at(5));
        const auto t = to_latent_map(decentralized_targets(pk[0], std::span(pk).subspan(1), DistanceKind::l2, kCfg));
        CHECK(sum_of_distances(rounded, t.at(5)) - oracle::geometric_median_objective_2d(rounded) < 1e-4);
    }
}

TEST_CASE("parameter-server targets equal decentralized targets on a complete graph") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = testutil::uniform_index(2, 8, rng);
        std::vector<LatentPacket> pk;
        for (std::size_t i = 0; i < n; ++i) {
            LatentMap entries;
            for (int m = 0; m < 5; ++m) {
                if (std::bernoulli_distribution(0.6)(rng)) entries[m] = testutil::random_vector(3, rng);
            }
            pk.push_back(make_packet(static_cast<std::uint16_t>(i), 4, 3, entries));
        }
        for (auto kind : {DistanceKind::squared_l2, DistanceKind::l2}) {
            const auto global = to_latent_map(ps_global_targets(pk, kind, kCfg));
            for (std::size_t i = 0; i < n; ++i) {
                std::vector<LatentPacket> others;
                for (std::size_t j = 0; j < n; ++j) {
                    if (j != i) others.push_back(pk[j]);
                }
                CHECK(to_latent_map(decentralized_targets(pk[i], others, kind, kCfg)) == global);
            }
        }
    }
    const LatentPacket dup[] = {packet(1, 0, {{0, {1, 1}}}), packet(1, 0, {{0, {2, 2}}})};
    CHECK_THROWS_AS(ps_global_targets(dup, DistanceKind::squared_l2, kCfg), ProtocolError);
    const LatentPacket twins[] = {packet(0, 0, {{0, {1, 2}}}), packet(1, 0, {{0, {1, 2}}})};
    CHECK(to_latent_map(ps_global_targets(twins, DistanceKind::l2, kCfg)).at(0) == std::vector<double>{1, 2});
}

TEST_CASE("contaminated server targets: median stays, mean is dragged") {
    std::vector<LatentPacket> pk;
    for (std::uint16_t i = 0; i < 6; ++i) pk.push_back(packet(i, 0, {{0, {0.1 * i, -0.05 * i}}}));
    for (std::uint16_t i = 6; i < 8; ++i) pk.push_back(packet(i, 0, {{0, {1e4, 1e4}}}));
    const auto median = to_latent_map(ps_global_targets(pk, DistanceKind::l2, kCfg)).at(0);
    const auto mean = to_latent_map(ps_global_targets(pk, DistanceKind::squared_l2, kCfg)).at(0);
    CHECK(std::hypot(median[0], median[1]) < 1.0);
    CHECK(std::hypot(mean[0], mean[1]) > 1000.0);
}
