#pragma once

// Heterogeneous client models: one encoder per available modality, fusion by
// concatenation, a trunk ending at the tap layer, and a classifier head.
//
//   modality_k --encoder_k--+
//                            concat --trunk--> tap (d_i) --head--> logits (|M|)
//   modality_j --encoder_j--+
//
// The tap activation is the representation that gets projected into the shared
// latent space. Gradients injected at the tap reach the encoders and trunk but
// never the head.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "comfed/layers.hpp"

namespace comfed {

struct Modality {
    std::string name;
    std::size_t input_dim = 0;

    friend bool operator==(const Modality&, const Modality&) = default;
};

struct ClientArchitecture {
    std::vector<Modality> modalities;             // S_i, non-empty
    std::vector<std::vector<LayerSpec>> encoders;  // parallel to modalities
    std::vector<LayerSpec> trunk;                  // fused input -> tap
    std::vector<LayerSpec> head;                   // tap -> classes
    std::size_t num_classes = 0;

    std::size_t tap_dim() const;
    std::size_t fused_dim() const;
    std::vector<std::string> modality_names() const;

    // Throws ShapeError/ModalityError on any inconsistency.
    void validate() const;

    friend bool operator==(const ClientArchitecture&, const ClientArchitecture&) = default;
};

// Dense architecture: each encoder is affine+relu per width, the trunk is
// affine+relu per width with the last width = tap_dim, the head is one affine map.
ClientArchitecture make_dense_architecture(const std::vector<Modality>& modalities,
                                           const std::map<std::string, std::vector<std::size_t>>& encoder_widths,
                                           const std::vector<std::size_t>& trunk_widths,
                                           std::size_t num_classes);

// Inputs keyed by modality name, each batch x input_dim.
using ModalityBatch = std::map<std::string, Matrix>;

struct TapCache {
    std::uint64_t model_id = 0;
    std::vector<ForwardCache> encoders;
    ForwardCache trunk;
    ForwardCache head;
    std::size_t batch = 0;
};

struct TapOutput {
    Matrix features;  // batch x d_i
    TapCache cache;
};

struct FullForward {
    Matrix logits;
    TapOutput tap;
};

struct ModelGradient {
    std::vector<GradientBundle> encoders;
    GradientBundle trunk;
    GradientBundle head;

    // Same ordering as ClientModel::parameters().
    std::vector<double> flatten() const;
};

class ClientModel {
public:
    ClientModel(ClientArchitecture arch, std::uint64_t seed);

    const ClientArchitecture& architecture() const noexcept { return arch_; }
    const std::vector<Network>& encoders() const noexcept { return encoders_; }
    const Network& trunk() const noexcept { return trunk_; }
    const Network& head() const noexcept { return head_; }
    Network& mutable_trunk() noexcept { return trunk_; }
    Network& mutable_head() noexcept { return head_; }
    Network& mutable_encoder(std::size_t k) { return encoders_.at(k); }

    std::size_t parameter_count() const noexcept;
    // Encoders (modality order), trunk, head.
    std::vector<double> parameters() const;
    void assign_parameters(std::span<const double> values);

    FullForward forward_full(const ModalityBatch& batch) const;

    // dlogits drives head, trunk and encoders; dtap (batch x d_i, may be empty
    // to mean zero) is added at the tap and only reaches trunk and encoders.
    ModelGradient backward_composite(const TapCache& cache, const Matrix& dlogits, const Matrix& dtap) const;

    void apply_gradient(const ModelGradient& grad, double step);

    std::uint64_t id() const noexcept { return id_; }

private:
    ClientArchitecture arch_;
    std::vector<Network> encoders_;
    Network trunk_;
    Network head_;
    std::uint64_t id_;
};

ClientModel build_client_model(const ClientArchitecture& arch, std::uint64_t seed);

}  // namespace comfed
