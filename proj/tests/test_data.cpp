#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "comfed/data.hpp"
#include "comfed/error.hpp"
#include "comfed/kernels.hpp"

using namespace comfed;

namespace {

SyntheticSpec spec_with(double noise, std::size_t per_class = 10, std::uint64_t seed = 1) {
    return SyntheticSpec{12, {{"acc", 24}, {"gyr", 24}}, noise, per_class, 0.2, seed};
}

std::vector<std::vector<std::string>> usc_assignment() {
    std::vector<std::vector<std::string>> a;
    for (int i = 0; i < 3; ++i) a.push_back({"acc"});
    for (int i = 0; i < 3; ++i) a.push_back({"gyr"});
    for (int i = 0; i < 8; ++i) a.push_back({"acc", "gyr"});
    return a;
}

// Pooled nearest-class-mean classifier on the "acc" modality.
double centralized_accuracy(const std::vector<ClientDataset>& data, std::size_t classes) {
    std::vector<std::vector<double>> sums(classes, std::vector<double>(24, 0.0));
    std::vector<std::size_t> counts(classes, 0);
    for (const auto& d : data) {
        if (!d.features.count("acc")) continue;
        const auto& f = d.features.at("acc");
        for (std::size_t r : d.train) {
            const auto c = static_cast<std::size_t>(d.labels[r]);
            ++counts[c];
            for (std::size_t k = 0; k < 24; ++k) sums[c][k] += f(r, k);
        }
    }
    for (std::size_t c = 0; c < classes; ++c)
        for (double& v : sums[c]) v /= std::max<std::size_t>(counts[c], 1);
    std::size_t correct = 0, total = 0;
    for (const auto& d : data) {
        if (!d.features.count("acc")) continue;
        const auto& f = d.features.at("acc");
        for (std::size_t r : d.test) {
            std::size_t best = 0;
            double best_dist = INFINITY;
            for (std::size_t c = 0; c < classes; ++c) {
                if (counts[c] == 0) continue;
                const double dist = kernels::squared_distance(f.row(r), sums[c]);
                if (dist < best_dist) {
                    best_dist = dist;
                    best = c;
                }
            }
            correct += static_cast<int>(best) == d.labels[r];
            ++total;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace

TEST_CASE("zero noise reproduces the prototypes exactly") {
    auto spec = spec_with(0.0);
    const auto protos = make_prototypes(spec);
    const auto data = generate(spec, usc_assignment(), 1.0);
    for (const auto& d : data) {
        for (std::size_t r = 0; r < d.size(); ++r) {
            if (std::find(d.modalities.begin(), d.modalities.end(), "acc") == d.modalities.end()) continue;
            const auto row = d.features.at("acc").row(r);
            CHECK(std::equal(row.begin(), row.end(), protos.values[d.labels[r]][0].begin()));
        }
    }
}

TEST_CASE("prototype separation exceeds four noise standard deviations") {
    for (double noise : {0.1, 1.0, 2.0, 8.0}) {
        const auto spec = spec_with(noise);
        const auto protos = make_prototypes(spec);
        for (std::size_t k = 0; k < 2; ++k) {
            for (std::size_t a = 0; a < 12; ++a) {
                for (std::size_t b = a + 1; b < 12; ++b) {
                    const double dist = std::sqrt(kernels::squared_distance(protos.values[a][k], protos.values[b][k]));
                    CHECK(dist > kPrototypeSeparation * noise);
                }
            }
        }
    }
}

TEST_CASE("usc-shaped assignment: modalities, sizes, labels and splits") {
    const auto data = generate(spec_with(1.0), usc_assignment(), 1.0);
    REQUIRE(data.size() == 14);
    for (std::size_t i = 0; i < 14; ++i) {
        const auto& d = data[i];
        const std::size_t expected_mods = i < 6 ? 1 : 2;
        CHECK(d.features.size() == expected_mods);
        CHECK(d.modalities.size() == expected_mods);
        if (i < 3) CHECK(d.features.count("acc") == 1);
        if (i >= 3 && i < 6) CHECK(d.features.count("gyr") == 1);
        CHECK(d.size() == 120);
        for (int l : d.labels) CHECK((l >= 0 && l < 12));
        std::set<std::size_t> train(d.train.begin(), d.train.end());
        for (std::size_t t : d.test) CHECK(train.count(t) == 0);
        CHECK(d.train.size() + d.test.size() == d.size());
        CHECK_FALSE(d.test.empty());
    }
}

TEST_CASE("generation is deterministic per seed") {
    const auto a = generate(spec_with(1.0, 10, 5), usc_assignment(), 0.5);
    const auto b = generate(spec_with(1.0, 10, 5), usc_assignment(), 0.5);
    const auto c = generate(spec_with(1.0, 10, 6), usc_assignment(), 0.5);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].features == b[i].features);
        CHECK(a[i].labels == b[i].labels);
        CHECK(a[i].train == b[i].train);
    }
    CHECK_FALSE(a[0].features == c[0].features);
}

TEST_CASE("dirichlet skew") {
    const auto flat = generate(spec_with(1.0, 20), usc_assignment(), 1e4);
    for (const auto& d : flat) {
        std::vector<std::size_t> counts(12, 0);
        for (int l : d.labels) ++counts[l];
        for (auto n : counts) CHECK((n >= 17 && n <= 23));
    }
    // Strong skew concentrates a client's data on few classes.
    const auto peaked = generate(spec_with(1.0, 20), usc_assignment(), 0.05);
    double top_share = 0;
    for (const auto& d : peaked) {
        std::vector<std::size_t> counts(12, 0);
        for (int l : d.labels) ++counts[l];
        top_share += static_cast<double>(*std::max_element(counts.begin(), counts.end())) / d.size();
    }
    CHECK(top_share / peaked.size() > 0.5);
    CHECK_THROWS_AS(generate(spec_with(1.0), usc_assignment(), 0.0), ConfigError);
    CHECK_THROWS_AS(generate(spec_with(1.0), {{"lidar"}}, 1.0), ConfigError);
}

TEST_CASE("separability dial: centralized accuracy rises as noise falls") {
    double previous = -1.0;
    std::vector<double> acc;
    for (double noise : {2.0, 1.0, 0.5}) {
        acc.push_back(centralized_accuracy(generate(spec_with(noise, 20, 3), usc_assignment(), 1e4), 12));
        MESSAGE("noise " << noise << ": centralized accuracy " << acc.back());
        CHECK(acc.back() >= previous);
        previous = acc.back();
    }
    CHECK(acc.back() > acc.front());
}

TEST_CASE("stratified split keeps singletons in train") {
    ClientDataset d;
    d.labels = {0, 1, 1, 1, 1, 1};
    std::mt19937_64 rng(1);
    split_train_test(d, 0.2, rng);
    CHECK(std::count(d.train.begin(), d.train.end(), 0u) == 1);
    CHECK(d.test.size() == 1);
}

TEST_CASE("csv: well-formed input") {
    const CsvSchema schema{{{"acc", 2}}, 3, "label"};
    std::istringstream in("label,acc_0,acc_1\n0,1.5,2\n2,-1e-3,4\n");
    const auto d = parse_csv(in, schema, 0.0, 1);
    CHECK(d.size() == 2);
    CHECK(d.labels == std::vector<int>{0, 2});
    CHECK(d.features.at("acc")(1, 0) == -1e-3);
    CHECK(d.modalities == std::vector<std::string>{"acc"});
}

TEST_CASE("csv: malformed input is rejected with a line number") {
    const CsvSchema schema{{{"acc", 2}}, 3, "label"};
    auto error_of = [&](const std::string& text) {
        std::istringstream in(text);
        try {
            parse_csv(in, schema, 0.0, 1);
        } catch (const IngestionError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    CHECK(error_of("label,acc_0,acc_1\n0,1,2\n1,abc,2\n").find("line 3") != std::string::npos);
    CHECK(error_of("label,acc_0,acc_1\n0,1,2\n1,2\n").find("line 3") != std::string::npos);
    CHECK(error_of("label,acc_0,acc_1\n7,1,2\n").find("line 2") != std::string::npos);
    CHECK(error_of("label,acc_0\n0,1\n").find("acc_1") != std::string::npos);
    CHECK(error_of("").find("line 1") != std::string::npos);
    CHECK(error_of("label,acc_0,acc_1\n0.5,1,2\n").find("line 2") != std::string::npos);
    CHECK(error_of("label,acc_0,acc_1\n0,1,2\n1,nan,2\n").find("line 3") != std::string::npos);
    CHECK(error_of("label,acc_0,acc_1\n0,inf,2\n").find("not finite") != std::string::npos);
}

TEST_CASE("csv round trip keeps features to 32-bit precision") {
    const auto spec = spec_with(1.0, 5, 9);
    const auto data = generate(spec, {{"acc", "gyr"}}, 1.0);
    const CsvSchema schema{spec.modalities, 12, "label"};
    std::stringstream buffer;
    write_csv(buffer, data[0], schema);
    const auto back = parse_csv(buffer, schema, 0.2, 1);
    REQUIRE(back.size() == data[0].size());
    CHECK(back.labels == data[0].labels);
    for (const auto& m : spec.modalities) {
        const auto& a = data[0].features.at(m.name);
        const auto& b = back.features.at(m.name);
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(static_cast<float>(a.values()[i]) == static_cast<float>(b.values()[i]));
    }
}
