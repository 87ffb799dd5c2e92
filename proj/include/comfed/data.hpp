#pragma once

// Synthetic multi-modal classification data with per-client modality subsets
// and Dirichlet class skew, plus CSV ingestion for external feature tables.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "comfed/model.hpp"

namespace comfed {

struct SyntheticSpec {
    std::size_t num_classes = 0;
    std::vector<Modality> modalities;
    double noise_std = 1.0;
    std::size_t samples_per_class = 0;  // per client, before Dirichlet reweighting
    double test_fraction = 0.2;
    std::uint64_t seed = 0;

    void validate() const;
};

// prototypes[class][modality] with modality order from SyntheticSpec.
struct Prototypes {
    std::vector<std::vector<std::vector<double>>> values;
};

// Minimum pairwise prototype distance is kept above this multiple of noise_std.
inline constexpr double kPrototypeSeparation = 4.0;

Prototypes make_prototypes(const SyntheticSpec& spec);

struct ClientDataset {
    std::vector<std::string> modalities;  // S_i
    ModalityBatch features;               // name -> samples x input_dim
    std::vector<int> labels;
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;

    std::size_t size() const noexcept { return labels.size(); }
};

struct Batch {
    ModalityBatch inputs;
    std::vector<int> labels;
};

Batch gather(const ClientDataset& data, std::span<const std::size_t> indices);

// Samples per client: samples_per_class * num_classes, class proportions from
// Dirichlet(skew). Features are prototype + N(0, noise_std^2).
std::vector<ClientDataset> generate(const SyntheticSpec& spec, const std::vector<std::vector<std::string>>& assignment,
                                    double skew);

// Stratified split; classes with a single sample stay in train.
void split_train_test(ClientDataset& data, double test_fraction, std::mt19937_64& rng);

struct CsvSchema {
    std::vector<Modality> modalities;
    std::size_t num_classes = 0;
    std::string label_column = "label";
};

// Header: label, <modality>_0 .. <modality>_{k-1} for every declared modality.
ClientDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema, double test_fraction,
                       std::uint64_t seed);
ClientDataset parse_csv(std::istream& in, const CsvSchema& schema, double test_fraction, std::uint64_t seed);

void write_csv(std::ostream& out, const ClientDataset& data, const CsvSchema& schema);

}  // namespace comfed
