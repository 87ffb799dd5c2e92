#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "comfed/data.hpp"
#include "comfed/error.hpp"
#include "comfed/kernels.hpp"

namespace comfed {
namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t kClientSalt = 1u << 20;

}  // namespace

void SyntheticSpec::validate() const {
    if (num_classes == 0) throw ConfigError("num_classes must be positive");
    if (num_classes > 64) throw ConfigError("num_classes must be <= 64 (packet class mask)");
    if (modalities.empty()) throw ConfigError("at least one modality is required");
    std::set<std::string> names;
    for (const auto& m : modalities) {
        if (!names.insert(m.name).second) throw ConfigError("duplicate modality '" + m.name + "'");
        if (m.input_dim == 0) throw ConfigError("modality '" + m.name + "' needs input_dim > 0");
    }
    if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0");
    if (samples_per_class == 0) throw ConfigError("samples_per_class must be positive");
    if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must be in [0, 1)");
}

Prototypes make_prototypes(const SyntheticSpec& spec) {
    spec.validate();
    Prototypes protos;
    protos.values.resize(spec.num_classes);
    // One generator per class feeds every modality, so a class's modalities
    // stem from the same draw stream.
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
        std::mt19937_64 rng(mix_seed(spec.seed, c));
        std::normal_distribution<double> normal(0.0, 1.0);
        for (const auto& m : spec.modalities) {
            std::vector<double> v(m.input_dim);
            for (double& x : v) x = normal(rng);
            protos.values[c].push_back(std::move(v));
        }
    }
    if (spec.num_classes < 2 || spec.noise_std == 0.0) return protos;

    const double floor = kPrototypeSeparation * spec.noise_std;
    for (std::size_t k = 0; k < spec.modalities.size(); ++k) {
        double min_dist = std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < spec.num_classes; ++a)
            for (std::size_t b = a + 1; b < spec.num_classes; ++b)
                min_dist = std::min(min_dist, std::sqrt(kernels::squared_distance(protos.values[a][k], protos.values[b][k])));
        if (min_dist == 0.0) throw ConfigError("degenerate prototypes for modality '" + spec.modalities[k].name + "'");
        if (min_dist <= floor) {
            const double scale = 1.01 * floor / min_dist;
            for (auto& per_class : protos.values)
                for (double& x : per_class[k]) x *= scale;
        }
    }
    return protos;
}

Batch gather(const ClientDataset& data, std::span<const std::size_t> indices) {
    Batch batch;
    for (const auto& [name, m] : data.features) batch.inputs.emplace(name, gather_rows(m, indices));
    batch.labels.reserve(indices.size());
    for (std::size_t i : indices) batch.labels.push_back(data.labels.at(i));
    return batch;
}

void split_train_test(ClientDataset& data, double test_fraction, std::mt19937_64& rng) {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < data.labels.size(); ++i) by_class[data.labels[i]].push_back(i);
    data.train.clear();
    data.test.clear();
    for (auto& [_, idx] : by_class) {
        std::shuffle(idx.begin(), idx.end(), rng);
        std::size_t n_test = idx.size() < 2 ? 0 : static_cast<std::size_t>(std::lround(test_fraction * idx.size()));
        n_test = std::min(n_test, idx.size() - 1);
        data.test.insert(data.test.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
        data.train.insert(data.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
    }
    if (test_fraction > 0.0 && data.test.empty() && data.train.size() >= 2) {
        data.test.push_back(data.train.back());
        data.train.pop_back();
    }
    std::sort(data.train.begin(), data.train.end());
    std::sort(data.test.begin(), data.test.end());
}

std::vector<ClientDataset> generate(const SyntheticSpec& spec, const std::vector<std::vector<std::string>>& assignment,
                                    double skew) {
    spec.validate();
    if (!(skew > 0.0)) throw ConfigError("skew must be > 0");
    std::map<std::string, std::size_t> modality_index;
    for (std::size_t k = 0; k < spec.modalities.size(); ++k) modality_index[spec.modalities[k].name] = k;
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        if (assignment[i].empty()) throw ConfigError("client " + std::to_string(i) + " has no modalities");
        for (const auto& name : assignment[i]) {
            if (!modality_index.count(name)) {
                throw ConfigError("client " + std::to_string(i) + " uses unknown modality '" + name + "'");
            }
        }
    }

    const Prototypes protos = make_prototypes(spec);
    const std::size_t total = spec.samples_per_class * spec.num_classes;
    std::vector<ClientDataset> out;
    out.reserve(assignment.size());
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        std::mt19937_64 rng(mix_seed(spec.seed, kClientSalt + i));

        std::gamma_distribution<double> gamma(skew, 1.0);
        std::vector<double> weights(spec.num_classes);
        for (double& w : weights) w = gamma(rng);
        double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
        if (!(sum > 0.0)) {
            std::fill(weights.begin(), weights.end(), 1.0);
            sum = static_cast<double>(spec.num_classes);
        }
        // Largest-remainder apportionment of `total` samples.
        std::vector<std::size_t> counts(spec.num_classes);
        std::vector<std::pair<double, std::size_t>> remainders;
        std::size_t assigned = 0;
        for (std::size_t c = 0; c < spec.num_classes; ++c) {
            const double exact = static_cast<double>(total) * weights[c] / sum;
            counts[c] = static_cast<std::size_t>(std::floor(exact));
            assigned += counts[c];
            remainders.emplace_back(exact - std::floor(exact), c);
        }
        std::stable_sort(remainders.begin(), remainders.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        for (std::size_t r = 0; assigned < total; ++r, ++assigned) ++counts[remainders[r % remainders.size()].second];

        ClientDataset data;
        data.modalities = assignment[i];
        for (const auto& name : data.modalities) {
            data.features.emplace(name, Matrix(total, spec.modalities[modality_index.at(name)].input_dim));
        }
        std::normal_distribution<double> noise(0.0, 1.0);
        std::size_t row = 0;
        for (std::size_t c = 0; c < spec.num_classes; ++c) {
            for (std::size_t s = 0; s < counts[c]; ++s, ++row) {
                data.labels.push_back(static_cast<int>(c));
                for (const auto& name : data.modalities) {
                    const auto& proto = protos.values[c][modality_index.at(name)];
                    auto dst = data.features.at(name).row(row);
                    for (std::size_t d = 0; d < proto.size(); ++d) dst[d] = proto[d] + spec.noise_std * noise(rng);
                }
            }
        }
        split_train_test(data, spec.test_fraction, rng);
        out.push_back(std::move(data));
    }
    return out;
}

}  // namespace comfed
