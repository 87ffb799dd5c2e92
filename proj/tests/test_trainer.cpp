#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "comfed/error.hpp"
#include "comfed/trainer.hpp"
#include "support.hpp"

using namespace comfed;

namespace {

const std::vector<Modality> kModalities = {{"acc", 5}, {"gyr", 3}};

SyntheticSpec toy_spec(std::uint64_t seed, std::size_t classes = 3) {
    SyntheticSpec spec;
    spec.num_classes = classes;
    spec.modalities = kModalities;
    spec.noise_std = 1.0;
    spec.samples_per_class = 12;
    spec.test_fraction = 0.25;
    spec.seed = seed;
    return spec;
}

ClientArchitecture arch_for(const std::vector<std::string>& names, std::size_t classes = 3, std::size_t tap = 6) {
    std::vector<Modality> mods;
    std::map<std::string, std::vector<std::size_t>> widths;
    for (const auto& m : kModalities) {
        if (std::find(names.begin(), names.end(), m.name) == names.end()) continue;
        mods.push_back(m);
        widths[m.name] = {7};
    }
    return make_dense_architecture(mods, widths, {tap}, classes);
}

struct Federation {
    std::vector<ClientDataset> data;
    std::vector<Client> clients;
};

Federation federation(const std::vector<std::vector<std::string>>& assignment, std::uint64_t seed,
                      std::size_t latent_dim = 2) {
    Federation f;
    f.data = generate(toy_spec(seed), assignment, 50.0);
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        f.clients.push_back(make_client(i, arch_for(assignment[i]), f.data[i], latent_dim, seed));
    }
    return f;
}

TrainConfig small_config(std::size_t rounds = 6) {
    TrainConfig cfg;
    cfg.rounds = rounds;
    cfg.eta_w = 0.05;
    cfg.eta_p = 0.05;
    cfg.lambda = 0.4;
    cfg.projection_steps = 3;
    cfg.batch_size = 8;
    cfg.latent_dim = 2;
    cfg.seed = 11;
    return cfg;
}

bool batch_near_kink(const ClientModel& model, const ModalityBatch& batch) {
    const auto ff = model.forward_full(batch);
    for (const auto& c : ff.tap.cache.encoders) {
        if (testutil::near_kink(c.inputs.back(), 1e-3)) return true;
    }
    return testutil::near_kink(ff.tap.cache.trunk.inputs.back(), 1e-3);
}

std::vector<double> flat_stats(const std::vector<RoundRecord>& records) {
    std::vector<double> out;
    for (const auto& r : records) {
        for (const auto& c : r.clients) {
            out.push_back(c.train_loss);
            out.push_back(c.reg_loss);
            out.push_back(c.test_acc.value_or(-1.0));
        }
    }
    return out;
}

}  // namespace

TEST_CASE("config validation") {
    CHECK_NOTHROW(TrainConfig{}.validate());
    auto bad = [](auto mutate) {
        TrainConfig cfg;
        mutate(cfg);
        return cfg;
    };
    CHECK_THROWS_AS(bad([](TrainConfig& c) { c.rounds = 0; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](TrainConfig& c) { c.eta_w = 0; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](TrainConfig& c) { c.eta_p = -1; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](TrainConfig& c) { c.lambda = -0.1; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](TrainConfig& c) { c.projection_steps = 0; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](TrainConfig& c) { c.eta_w = std::nan(""); }).validate(), ConfigError);
}

TEST_CASE("batch sampler draws without replacement within an epoch") {
    BatchSampler sampler({0, 1, 2, 3, 4, 5, 6, 7, 8, 9}, 3);
    std::vector<std::size_t> seen;
    for (int b = 0; b < 5; ++b) {
        const auto batch = sampler.next(2);
        seen.insert(seen.end(), batch.begin(), batch.end());
    }
    std::sort(seen.begin(), seen.end());
    CHECK(seen == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
    CHECK(sampler.next(20).size() == 10);
    CHECK_THROWS_AS(BatchSampler({}, 1).next(1), ConfigError);
}

TEST_CASE("lambda = 0 weight step is plain SGD") {
    auto f = federation({{"acc", "gyr"}}, 5);
    Client& c = f.clients[0];
    const Batch batch = gather(f.data[0], f.data[0].train);

    LatentMap targets;
    for (ClassId m = 0; m < 3; ++m) targets[m] = {1.0, -2.0};

    ClientModel reference = c.model;
    const auto ff = reference.forward_full(batch.inputs);
    const auto ce = softmax_cross_entropy(ff.logits, batch.labels);
    reference.apply_gradient(reference.backward_composite(ff.tap.cache, ce.dlogits, Matrix{}), 0.05);

    TrainConfig cfg = small_config();
    cfg.lambda = 0.0;
    local_weight_step(c, batch, targets, cfg);
    CHECK(c.model.parameters() == reference.parameters());
}

TEST_CASE("zero learning rate leaves the model unchanged") {
    auto f = federation({{"acc", "gyr"}}, 6);
    Client& c = f.clients[0];
    const auto before = c.model.parameters();
    LatentMap targets;
    for (ClassId m = 0; m < 3; ++m) targets[m] = {3.0, 1.0};
    TrainConfig cfg = small_config();
    cfg.eta_w = 0.0;
    const auto step = local_weight_step(c, gather(f.data[0], f.data[0].train), targets, cfg);
    CHECK(step.reg_value > 0.0);
    CHECK(c.model.parameters() == before);
}

TEST_CASE("regularizer term leaves the head untouched") {
    auto f = federation({{"acc", "gyr"}}, 7);
    const Client& c = f.clients[0];
    const Batch batch = gather(f.data[0], f.data[0].train);
    LatentMap targets;
    for (ClassId m = 0; m < 3; ++m) targets[m] = {2.0, -1.0};
    const auto with = composite_gradient(c.model, c.projection, batch, targets, 0.7, DistanceKind::squared_l2);
    const auto without = composite_gradient(c.model, c.projection, batch, targets, 0.0, DistanceKind::squared_l2);
    for (std::size_t l = 0; l < with.gradient.head.layers.size(); ++l) {
        CHECK(with.gradient.head.layers[l].weight == without.gradient.head.layers[l].weight);
        CHECK(with.gradient.head.layers[l].bias == without.gradient.head.layers[l].bias);
    }
    CHECK(with.gradient.flatten() != without.gradient.flatten());
}

TEST_CASE("composite gradient matches finite differences") {
    std::mt19937_64 rng(101);
    int checked = 0;
    for (int trial = 0; trial < 40 && checked < 20; ++trial) {
        auto f = federation({{"acc", "gyr"}, {"acc"}}, 200 + static_cast<std::uint64_t>(trial));
        Client& a = f.clients[0];
        const Client& b = f.clients[1];
        const Batch batch = gather(f.data[0], f.data[0].train);
        if (batch_near_kink(a.model, batch.inputs)) continue;

        // Targets come from the other client's packet, held constant.
        const Batch other = gather(f.data[1], f.data[1].train);
        const auto other_stats = class_means(b.model.forward_full(other.inputs).tap.features, other.labels);
        const LatentMap targets = project(b.projection, other_stats);
        const DistanceKind kind = trial % 2 ? DistanceKind::l2 : DistanceKind::squared_l2;
        const double lambda = 0.3 + 0.1 * static_cast<double>(trial % 5);

        const auto step = composite_gradient(a.model, a.projection, batch, targets, lambda, kind);
        REQUIRE(step.overlap > 0);
        auto params = a.model.parameters();
        auto objective = [&] {
            ClientModel probe = a.model;
            probe.assign_parameters(params);
            const auto ff = probe.forward_full(batch.inputs);
            const double task = softmax_cross_entropy(ff.logits, batch.labels).loss;
            const auto stats = class_means(ff.tap.features, batch.labels);
            return task + lambda * regularizer_terms(a.projection, stats, targets, kind).value;
        };
        CHECK(objective() == doctest::Approx(step.task_loss + lambda * step.reg_value).epsilon(1e-12));
        const auto analytic = step.gradient.flatten();
        CHECK(testutil::max_fd_error(params, analytic, objective) < 1e-4);
        ++checked;
    }
    CHECK(checked >= 20);
}

TEST_CASE("projection step examples") {
    TrainConfig cfg;
    cfg.eta_p = 0.25;
    cfg.lambda = 0.4;
    cfg.projection_steps = 1;
    cfg.distance = DistanceKind::squared_l2;

    Projection p(Matrix{{1.0}});
    const std::vector<ClassStats> stats = {{0, {2.0}, 1}};
    const LatentMap targets = {{0, {1.0}}};
    const auto values = projection_step(p, stats, targets, cfg);
    CHECK(values == std::vector<double>{1.0});
    CHECK(p.matrix()(0, 0) == doctest::Approx(0.6).epsilon(1e-15));

    // Targets equal to the current projections: zero gradient.
    std::mt19937_64 rng(4);
    Projection q(testutil::random_matrix(3, 5, rng));
    std::vector<ClassStats> s;
    for (ClassId m = 0; m < 4; ++m) s.push_back({m, testutil::random_vector(5, rng), 3});
    const Matrix before = q.matrix();
    for (auto kind : {DistanceKind::squared_l2, DistanceKind::l2}) {
        cfg.distance = kind;
        cfg.projection_steps = 5;
        projection_step(q, s, project(q, s), cfg);
        CHECK(q.matrix() == before);
    }
}

TEST_CASE("projection steps descend monotonically with fixed targets") {
    std::mt19937_64 rng(12);
    TrainConfig cfg;
    cfg.eta_p = 0.01;
    cfg.lambda = 0.4;
    cfg.projection_steps = 50;
    for (int trial = 0; trial < 20; ++trial) {
        Projection p(testutil::random_matrix(3, 6, rng, 0.4));
        std::vector<ClassStats> stats;
        LatentMap targets;
        for (ClassId m = 0; m < 4; ++m) {
            stats.push_back({m, testutil::random_vector(6, rng), 2});
            targets[m] = testutil::random_vector(3, rng);
        }
        const auto values = projection_step(p, stats, targets, cfg);
        for (std::size_t s = 1; s < values.size(); ++s) CHECK(values[s] < values[s - 1]);
    }
}

TEST_CASE("evaluate") {
    auto f = federation({{"acc", "gyr"}}, 8);
    ClientModel model = f.clients[0].model;
    ClientDataset& data = f.data[0];

    // All-zero parameters tie every logit, so class 0 wins.
    model.assign_parameters(std::vector<double>(model.parameter_count(), 0.0));
    std::vector<std::size_t> zeros;
    for (std::size_t r = 0; r < data.size(); ++r) {
        if (data.labels[r] == 0) zeros.push_back(r);
    }
    REQUIRE(!zeros.empty());
    CHECK(evaluate(model, data, zeros) == 1.0);
    CHECK_THROWS_AS(evaluate(model, data, std::vector<std::size_t>{}), ConfigError);

    // Scalar-loop argmax over the logits.
    const ClientModel& trained = f.clients[0].model;
    const Batch batch = gather(data, data.test);
    const auto logits = trained.forward_full(batch.inputs).logits;
    std::size_t correct = 0;
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < logits.cols(); ++c) {
            if (logits(r, c) > logits(r, best)) best = c;
        }
        correct += static_cast<int>(best) == batch.labels[r];
    }
    CHECK(evaluate(trained, data, data.test) == static_cast<double>(correct) / static_cast<double>(logits.rows()));
}

TEST_CASE("random model on balanced labels sits near chance") {
    std::mt19937_64 rng(31);
    ClientDataset data;
    data.modalities = {"acc"};
    const std::size_t n = 800;
    data.features["acc"] = testutil::random_matrix(n, 5, rng);
    for (std::size_t r = 0; r < n; ++r) {
        data.labels.push_back(static_cast<int>(r % 4));
        data.test.push_back(r);
    }
    double total = 0.0;
    for (std::uint64_t s = 0; s < 10; ++s) total += evaluate(build_client_model(arch_for({"acc"}, 4), s), data, data.test);
    CHECK(total / 10 == doctest::Approx(0.25).epsilon(0.2));
}

TEST_CASE("lambda = 0 run equals independent local SGD") {
    TrainConfig cfg = small_config(8);
    cfg.lambda = 0.0;
    auto f1 = federation({{"acc", "gyr"}, {"acc"}, {"gyr"}}, 21);
    auto f2 = federation({{"acc", "gyr"}, {"acc"}, {"gyr"}}, 21);
    for (auto& c : f2.clients) c.data = &f2.data[c.id];

    const auto top = make_topology({TopologyKind::complete}, 3, 1);
    const auto a = run(top, f1.clients, cfg);
    const auto b = run_baseline(BaselineKind::local_only, f2.clients, cfg);
    CHECK(flat_stats(a.records) == flat_stats(b.records));
    for (std::size_t i = 0; i < 3; ++i) CHECK(f1.clients[i].model.parameters() == f2.clients[i].model.parameters());
    CHECK(b.ledger.total_uplink() == 0);
    CHECK(b.ledger.total_downlink() == 0);
}

TEST_CASE("single client with no neighbours trains") {
    auto f = federation({{"acc", "gyr"}}, 22);
    const auto top = make_topology({TopologyKind::empty}, 1, 1);
    const auto result = run(top, f.clients, small_config(20));
    REQUIRE(result.records.size() == 20);
    CHECK(result.records.back().clients[0].test_acc.has_value());
    // Consensus with itself: the pull only comes from one-step staleness.
    for (const auto& r : result.records) CHECK(r.clients[0].reg_loss >= 0.0);
}

TEST_CASE("round 0 has no pull and later rounds do") {
    auto f = federation({{"acc", "gyr"}, {"acc"}}, 23);
    const auto top = make_topology({TopologyKind::complete}, 2, 1);
    const auto result = run(top, f.clients, small_config(4));
    for (const auto& c : result.records[0].clients) CHECK(c.reg_loss == 0.0);
    for (const auto& c : result.records[1].clients) CHECK(c.reg_loss > 0.0);
}

TEST_CASE("regularizer stays non-negative for both distances") {
    for (auto kind : {DistanceKind::squared_l2, DistanceKind::l2}) {
        auto f = federation({{"acc", "gyr"}, {"acc"}, {"gyr"}, {"acc", "gyr"}}, 24);
        TrainConfig cfg = small_config(15);
        cfg.distance = kind;
        const auto result = run(make_topology({TopologyKind::ring}, 4, 1), f.clients, cfg);
        for (const auto& r : result.records) {
            for (const auto& c : r.clients) {
                CHECK(c.reg_loss >= 0.0);
                if (c.test_acc) CHECK((*c.test_acc >= 0.0 && *c.test_acc <= 1.0));
            }
        }
    }
}

TEST_CASE("run is deterministic per seed") {
    auto go = [] {
        auto f = federation({{"acc", "gyr"}, {"acc"}, {"gyr"}}, 25);
        TrainConfig cfg = small_config(10);
        cfg.distance = DistanceKind::l2;
        AdversarySpec adv;
        adv.byzantine = {2};
        auto r = run(make_topology({TopologyKind::complete}, 3, 1), f.clients, cfg, adv);
        std::vector<double> params;
        for (const auto& c : f.clients) {
            const auto p = c.model.parameters();
            params.insert(params.end(), p.begin(), p.end());
        }
        return std::make_tuple(flat_stats(r.records), r.ledger, params);
    };
    CHECK(go() == go());
}

TEST_CASE("byzantine clients are excluded from the honest average") {
    RoundRecord r{0, {}};
    r.clients.push_back({0, 0, 0, 0.8, 0, false});
    r.clients.push_back({1, 0, 0, 0.0, 0, true});
    r.clients.push_back({2, 0, 0, 0.6, 0, false});
    CHECK(*r.honest_accuracy() == doctest::Approx(0.7));
    RoundRecord empty{0, {}};
    CHECK_FALSE(empty.honest_accuracy().has_value());
}

TEST_CASE("latent packets of two clients on the same data converge") {
    SyntheticSpec spec = toy_spec(26);
    auto data = generate(spec, {{"acc", "gyr"}}, 50.0);
    std::vector<Client> clients;
    for (std::size_t i = 0; i < 2; ++i) clients.push_back(make_client(i, arch_for({"acc", "gyr"}), data[0], 2, 40 + i));

    TrainConfig cfg = small_config(60);
    cfg.batch_size = 64;  // full batch
    cfg.lambda = 1.0;
    cfg.eta_p = 0.1;
    cfg.projection_steps = 10;
    std::vector<double> gap;
    auto observe = [&](const RoundObservation& obs) {
        double total = 0.0;
        std::size_t count = 0;
        for (const auto& [cls, v] : obs.honest_packets[0].entries) {
            const auto& w = obs.honest_packets[1].entries.at(cls);
            double d = 0.0;
            for (std::size_t k = 0; k < v.size(); ++k) d += (v[k] - w[k]) * (v[k] - w[k]);
            total += std::sqrt(d);
            ++count;
        }
        gap.push_back(total / static_cast<double>(count));
    };
    run(make_topology({TopologyKind::complete}, 2, 1), clients, cfg, {}, observe);
    REQUIRE(gap.size() == 60);
    CHECK(gap.back() < 0.5 * gap.front());
}

TEST_CASE("parameter server equals decentralized on a complete graph") {
    for (auto kind : {DistanceKind::squared_l2, DistanceKind::l2}) {
        auto f1 = federation({{"acc", "gyr"}, {"acc"}, {"gyr"}, {"acc", "gyr"}}, 27);
        auto f2 = federation({{"acc", "gyr"}, {"acc"}, {"gyr"}, {"acc", "gyr"}}, 27);
        for (auto& c : f2.clients) c.data = &f2.data[c.id];
        TrainConfig cfg = small_config(10);
        cfg.distance = kind;
        const auto dec = run(make_topology({TopologyKind::complete}, 4, 1), f1.clients, cfg);
        cfg.consensus = ConsensusMode::ps;
        const auto ps = run(make_topology({TopologyKind::star_ps}, 4, 1), f2.clients, cfg);
        const auto a = flat_stats(dec.records);
        const auto b = flat_stats(ps.records);
        REQUIRE(a.size() == b.size());
        for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k] == doctest::Approx(b[k]).epsilon(1e-12));
        // Same uplink, different downlink.
        CHECK(dec.ledger.total_uplink() == ps.ledger.total_uplink());
    }
}

TEST_CASE("divergence raises a numeric error naming round and client") {
    auto f = federation({{"acc", "gyr"}, {"acc"}}, 28);
    TrainConfig cfg = small_config(5);
    cfg.eta_w = 1e200;
    try {
        run(make_topology({TopologyKind::complete}, 2, 1), f.clients, cfg);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(e.round() <= 1);
        CHECK(e.client() == 0);
        CHECK(std::string(e.what()).find("client 0") != std::string::npos);
    }
}

TEST_CASE("inconsistent components are rejected before round 0") {
    auto f = federation({{"acc", "gyr"}, {"acc"}}, 29);
    TrainConfig cfg = small_config(2);
    CHECK_THROWS_AS(run(make_topology({TopologyKind::complete}, 3, 1), f.clients, cfg), ConfigError);
    cfg.latent_dim = 3;
    CHECK_THROWS_AS(run(make_topology({TopologyKind::complete}, 2, 1), f.clients, cfg), ConfigError);
    CHECK_THROWS_AS(make_client(0, arch_for({"acc"}), f.data[0], 2, 1), ConfigError);
}

TEST_CASE("modality fedavg averages within groups and charges 4 bytes per parameter") {
    auto f = federation({{"acc", "gyr"}, {"acc", "gyr"}, {"gyr"}}, 30);
    auto copy = f.clients;
    TrainConfig cfg = small_config(1);

    run_baseline(BaselineKind::local_only, copy, cfg);
    const auto result = run_baseline(BaselineKind::modality_fedavg, f.clients, cfg);
    const auto p0 = copy[0].model.parameters();
    const auto p1 = copy[1].model.parameters();
    const auto avg = f.clients[0].model.parameters();
    REQUIRE(avg.size() == p0.size());
    for (std::size_t k = 0; k < avg.size(); ++k) CHECK(avg[k] == doctest::Approx(0.5 * (p0[k] + p1[k])).epsilon(1e-15));
    CHECK(f.clients[1].model.parameters() == avg);
    CHECK(f.clients[2].model.parameters() == copy[2].model.parameters());

    for (std::size_t i = 0; i < 3; ++i) {
        const auto bytes = 4 * f.clients[i].model.parameter_count();
        CHECK(result.ledger.entry(0, i).uplink == bytes);
        CHECK(result.ledger.entry(0, i).downlink == bytes);
    }

    auto g = federation({{"acc", "gyr"}, {"acc", "gyr"}}, 31);
    g.clients[1].model = build_client_model(arch_for({"acc", "gyr"}, 3, 9), 1);
    CHECK_THROWS_AS(run_baseline(BaselineKind::modality_fedavg, g.clients, cfg), ConfigError);
}
