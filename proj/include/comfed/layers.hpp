#pragma once

// Minimal differentiable layer toolkit: affine and ReLU layers composed into a
// feed-forward Network, softmax cross-entropy, and analytic backpropagation.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "comfed/matrix.hpp"

namespace comfed {

enum class LayerKind { affine, relu };

struct LayerSpec {
    LayerKind kind = LayerKind::affine;
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;

    static LayerSpec affine(std::size_t in, std::size_t out) { return {LayerKind::affine, in, out}; }
    static LayerSpec relu(std::size_t dim) { return {LayerKind::relu, dim, dim}; }

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// Affine layers carry weight (out x in) and bias (1 x out); y = x W^T + b.
// ReLU layers leave both empty.
struct Layer {
    LayerSpec spec;
    Matrix weight;
    Matrix bias;
};

struct LayerGradient {
    Matrix weight;
    Matrix bias;
};

struct GradientBundle {
    std::vector<LayerGradient> layers;  // parallel to Network::layers()
    Matrix input;                       // d loss / d input
};

// Activation record of one forward pass; only valid for the network version
// that produced it.
struct ForwardCache {
    std::uint64_t network_id = 0;
    std::uint64_t network_version = 0;
    std::vector<Matrix> inputs;  // input of every layer
};

struct ForwardResult {
    Matrix output;
    ForwardCache cache;
};

class Network {
public:
    Network() = default;
    // Affine weights ~ U(-a, a), a = sqrt(6 / (fan_in + fan_out)); biases zero.
    Network(std::vector<LayerSpec> specs, std::mt19937_64& rng);

    Network(const Network& other);
    Network& operator=(const Network& other);
    Network(Network&&) noexcept = default;
    Network& operator=(Network&&) noexcept = default;

    const std::vector<Layer>& layers() const noexcept { return layers_; }
    // Mutable access invalidates outstanding forward caches.
    Layer& mutable_layer(std::size_t index);

    std::size_t in_dim() const noexcept;
    std::size_t out_dim() const noexcept;
    std::size_t parameter_count() const noexcept;

    // params -= step * grad
    void apply_gradient(const GradientBundle& grad, double step);

    // Flattened parameters, layer order, weight then bias.
    void append_parameters(std::vector<double>& out) const;
    // Consumes parameter_count() values starting at offset; returns new offset.
    std::size_t assign_parameters(std::span<const double> values, std::size_t offset);

    std::uint64_t id() const noexcept { return id_; }
    std::uint64_t version() const noexcept { return version_; }

private:
    void touch() noexcept;

    std::vector<Layer> layers_;
    std::uint64_t id_ = 0;
    std::uint64_t version_ = 0;
};

void validate_specs(std::span<const LayerSpec> specs);

ForwardResult forward(const Network& net, const Matrix& input);

GradientBundle backward(const Network& net, const ForwardCache& cache, const Matrix& output_gradient);

// Zero-filled gradient with the network's parameter shapes.
GradientBundle zero_gradient(const Network& net, std::size_t batch);

// Appends gradient values in the same order as Network::append_parameters.
void append_gradient(const GradientBundle& grad, std::vector<double>& out);

struct SoftmaxCrossEntropy {
    double loss = 0.0;
    Matrix dlogits;
};

// Mean over rows of -log softmax(logits)[label]; dlogits = (softmax - onehot) / batch.
SoftmaxCrossEntropy softmax_cross_entropy(const Matrix& logits, std::span<const int> labels);

// Row-wise argmax, ties to the lowest index.
std::vector<int> argmax_rows(const Matrix& logits);

}  // namespace comfed
