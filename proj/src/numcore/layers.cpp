#include "comfed/layers.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>

#include "comfed/error.hpp"
#include "comfed/kernels.hpp"

namespace comfed {
namespace {

std::uint64_t next_network_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}

std::string layer_name(std::size_t index, const LayerSpec& spec) {
    return "layer " + std::to_string(index) + " (" +
           (spec.kind == LayerKind::affine ? "affine" : "relu") + " " +
           std::to_string(spec.in_dim) + "->" + std::to_string(spec.out_dim) + ")";
}

}  // namespace

void validate_specs(std::span<const LayerSpec> specs) {
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto& s = specs[i];
        if (s.in_dim == 0 || s.out_dim == 0) throw ShapeError(layer_name(i, s) + " has a zero dimension");
        if (s.kind == LayerKind::relu && s.in_dim != s.out_dim) {
            throw ShapeError(layer_name(i, s) + " must preserve dimension");
        }
        if (i > 0 && specs[i - 1].out_dim != s.in_dim) {
            throw ShapeError(layer_name(i, s) + " expects input " + std::to_string(s.in_dim) +
                             " but previous layer emits " + std::to_string(specs[i - 1].out_dim));
        }
    }
}

Network::Network(std::vector<LayerSpec> specs, std::mt19937_64& rng) : id_(next_network_id()) {
    validate_specs(specs);
    layers_.reserve(specs.size());
    for (const auto& spec : specs) {
        Layer layer{spec, {}, {}};
        if (spec.kind == LayerKind::affine) {
            const double a = std::sqrt(6.0 / static_cast<double>(spec.in_dim + spec.out_dim));
            std::uniform_real_distribution<double> init(-a, a);
            layer.weight = Matrix(spec.out_dim, spec.in_dim);
            for (double& w : layer.weight.values()) w = init(rng);
            layer.bias = Matrix(1, spec.out_dim);
        }
        layers_.push_back(std::move(layer));
    }
}

// Copies get a fresh identity so caches from the source do not validate against them.
Network::Network(const Network& other) : layers_(other.layers_), id_(next_network_id()) {}

Network& Network::operator=(const Network& other) {
    if (this != &other) {
        layers_ = other.layers_;
        id_ = next_network_id();
        version_ = 0;
    }
    return *this;
}

Layer& Network::mutable_layer(std::size_t index) {
    touch();
    return layers_.at(index);
}

std::size_t Network::in_dim() const noexcept { return layers_.empty() ? 0 : layers_.front().spec.in_dim; }
std::size_t Network::out_dim() const noexcept { return layers_.empty() ? 0 : layers_.back().spec.out_dim; }

std::size_t Network::parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
}

void Network::touch() noexcept { ++version_; }

void Network::apply_gradient(const GradientBundle& grad, double step) {
    if (grad.layers.size() != layers_.size()) {
        throw ContractError("gradient has " + std::to_string(grad.layers.size()) +
                            " layers, network has " + std::to_string(layers_.size()));
    }
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (layers_[i].spec.kind != LayerKind::affine) continue;
        axpy(-step, grad.layers[i].weight, layers_[i].weight);
        axpy(-step, grad.layers[i].bias, layers_[i].bias);
    }
    touch();
}

void Network::append_parameters(std::vector<double>& out) const {
    for (const auto& l : layers_) {
        out.insert(out.end(), l.weight.values().begin(), l.weight.values().end());
        out.insert(out.end(), l.bias.values().begin(), l.bias.values().end());
    }
}

std::size_t Network::assign_parameters(std::span<const double> values, std::size_t offset) {
    if (offset + parameter_count() > values.size()) throw ShapeError("parameter vector too short");
    for (auto& l : layers_) {
        for (double& w : l.weight.values()) w = values[offset++];
        for (double& b : l.bias.values()) b = values[offset++];
    }
    touch();
    return offset;
}

ForwardResult forward(const Network& net, const Matrix& input) {
    if (input.rows() == 0) throw ShapeError("forward: empty batch");
    ForwardResult result;
    result.cache.network_id = net.id();
    result.cache.network_version = net.version();
    result.cache.inputs.reserve(net.layers().size());

    const auto& k = kernels::active();
    Matrix current = input;
    for (std::size_t i = 0; i < net.layers().size(); ++i) {
        const Layer& layer = net.layers()[i];
        if (current.cols() != layer.spec.in_dim) {
            throw ShapeError("forward: " + layer_name(i, layer.spec) + " received input " +
                             current.shape_string());
        }
        Matrix next;
        if (layer.spec.kind == LayerKind::affine) {
            next = matmul_nt(current, layer.weight);
            add_row_broadcast(next, layer.bias);
        } else {
            next = Matrix(current.rows(), current.cols());
            k.relu(current.values().data(), next.values().data(), current.size());
        }
        result.cache.inputs.push_back(std::move(current));
        current = std::move(next);
    }
    result.output = std::move(current);
    return result;
}

GradientBundle backward(const Network& net, const ForwardCache& cache, const Matrix& output_gradient) {
    if (cache.network_id != net.id() || cache.network_version != net.version() ||
        cache.inputs.size() != net.layers().size()) {
        throw ContractError("backward: forward cache does not belong to this network state");
    }
    const std::size_t batch = cache.inputs.empty() ? output_gradient.rows() : cache.inputs.front().rows();
    if (output_gradient.rows() != batch || output_gradient.cols() != net.out_dim()) {
        throw ShapeError("backward: output gradient " + output_gradient.shape_string() +
                         " does not match network output (" + std::to_string(batch) + "x" +
                         std::to_string(net.out_dim()) + ")");
    }

    const auto& k = kernels::active();
    GradientBundle grad;
    grad.layers.resize(net.layers().size());
    Matrix upstream = output_gradient;
    for (std::size_t i = net.layers().size(); i-- > 0;) {
        const Layer& layer = net.layers()[i];
        const Matrix& x = cache.inputs[i];
        if (layer.spec.kind == LayerKind::affine) {
            grad.layers[i].weight = matmul_tn(upstream, x);
            grad.layers[i].bias = column_sums(upstream);
            upstream = matmul_nn(upstream, layer.weight);
        } else {
            Matrix down(x.rows(), x.cols());
            k.relu_backward(x.values().data(), upstream.values().data(), down.values().data(), x.size());
            upstream = std::move(down);
        }
    }
    grad.input = std::move(upstream);
    return grad;
}

GradientBundle zero_gradient(const Network& net, std::size_t batch) {
    GradientBundle grad;
    grad.layers.reserve(net.layers().size());
    for (const auto& l : net.layers()) {
        grad.layers.push_back({Matrix(l.weight.rows(), l.weight.cols()), Matrix(l.bias.rows(), l.bias.cols())});
    }
    grad.input = Matrix(batch, net.in_dim());
    return grad;
}

void append_gradient(const GradientBundle& grad, std::vector<double>& out) {
    for (const auto& l : grad.layers) {
        out.insert(out.end(), l.weight.values().begin(), l.weight.values().end());
        out.insert(out.end(), l.bias.values().begin(), l.bias.values().end());
    }
}

SoftmaxCrossEntropy softmax_cross_entropy(const Matrix& logits, std::span<const int> labels) {
    if (labels.size() != logits.rows()) {
        throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for logits " + logits.shape_string());
    }
    if (logits.rows() == 0) throw ShapeError("softmax_cross_entropy: empty batch");
    const auto classes = static_cast<int>(logits.cols());
    SoftmaxCrossEntropy out{0.0, Matrix(logits.rows(), logits.cols())};
    const double inv_batch = 1.0 / static_cast<double>(logits.rows());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const int label = labels[r];
        if (label < 0 || label >= classes) {
            throw DomainError("label " + std::to_string(label) + " outside [0, " +
                              std::to_string(classes) + ")");
        }
        const auto z = logits.row(r);
        const double peak = *std::max_element(z.begin(), z.end());
        double denom = 0.0;
        for (double v : z) denom += std::exp(v - peak);
        const double log_denom = std::log(denom);
        out.loss += (log_denom - (z[label] - peak)) * inv_batch;
        auto dz = out.dlogits.row(r);
        for (std::size_t c = 0; c < z.size(); ++c) dz[c] = std::exp(z[c] - peak - log_denom) * inv_batch;
        dz[label] -= inv_batch;
    }
    return out;
}

std::vector<int> argmax_rows(const Matrix& logits) {
    std::vector<int> out(logits.rows(), 0);
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const auto z = logits.row(r);
        out[r] = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
    }
    return out;
}

}  // namespace comfed
