#include "comfed/model.hpp"

#include <algorithm>
#include <atomic>
#include <random>
#include <set>

#include "comfed/error.hpp"

namespace comfed {
namespace {

std::uint64_t next_model_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}

std::string join(const std::vector<std::string>& names) {
    std::string out = "{";
    for (std::size_t i = 0; i < names.size(); ++i) out += (i ? ", " : "") + names[i];
    return out + "}";
}

}  // namespace

std::size_t ClientArchitecture::tap_dim() const { return trunk.empty() ? fused_dim() : trunk.back().out_dim; }

std::size_t ClientArchitecture::fused_dim() const {
    std::size_t dim = 0;
    for (std::size_t k = 0; k < encoders.size(); ++k) {
        dim += encoders[k].empty() ? modalities[k].input_dim : encoders[k].back().out_dim;
    }
    return dim;
}

std::vector<std::string> ClientArchitecture::modality_names() const {
    std::vector<std::string> names;
    for (const auto& m : modalities) names.push_back(m.name);
    return names;
}

void ClientArchitecture::validate() const {
    if (modalities.empty()) throw ModalityError("architecture has no modalities");
    std::set<std::string> seen;
    for (const auto& m : modalities) {
        if (!seen.insert(m.name).second) throw ModalityError("duplicate modality '" + m.name + "'");
        if (m.input_dim == 0) throw ShapeError("modality '" + m.name + "' has input_dim 0");
    }
    if (encoders.size() != modalities.size()) {
        throw ShapeError("need one encoder per modality: " + std::to_string(encoders.size()) + " vs " +
                         std::to_string(modalities.size()));
    }
    for (std::size_t k = 0; k < encoders.size(); ++k) {
        validate_specs(encoders[k]);
        if (!encoders[k].empty() && encoders[k].front().in_dim != modalities[k].input_dim) {
            throw ShapeError("encoder for '" + modalities[k].name + "' expects input " +
                             std::to_string(encoders[k].front().in_dim) + ", modality provides " +
                             std::to_string(modalities[k].input_dim));
        }
    }
    if (trunk.empty()) throw ShapeError("trunk must contain at least one layer ending at the tap");
    validate_specs(trunk);
    if (trunk.front().in_dim != fused_dim()) {
        throw ShapeError("trunk expects fused input " + std::to_string(trunk.front().in_dim) +
                         ", encoders concatenate to " + std::to_string(fused_dim()));
    }
    if (head.empty()) throw ShapeError("head must not be empty");
    validate_specs(head);
    if (head.front().in_dim != tap_dim()) {
        throw ShapeError("head expects " + std::to_string(head.front().in_dim) + ", tap provides " +
                         std::to_string(tap_dim()));
    }
    if (num_classes == 0 || head.back().out_dim != num_classes) {
        throw ShapeError("head output " + std::to_string(head.back().out_dim) + " != class count " +
                         std::to_string(num_classes));
    }
}

ClientArchitecture make_dense_architecture(const std::vector<Modality>& modalities,
                                           const std::map<std::string, std::vector<std::size_t>>& encoder_widths,
                                           const std::vector<std::size_t>& trunk_widths,
                                           std::size_t num_classes) {
    ClientArchitecture arch;
    arch.modalities = modalities;
    arch.num_classes = num_classes;
    for (const auto& m : modalities) {
        std::vector<LayerSpec> enc;
        std::size_t in = m.input_dim;
        if (auto it = encoder_widths.find(m.name); it != encoder_widths.end()) {
            for (std::size_t w : it->second) {
                enc.push_back(LayerSpec::affine(in, w));
                enc.push_back(LayerSpec::relu(w));
                in = w;
            }
        }
        arch.encoders.push_back(std::move(enc));
    }
    std::size_t in = arch.fused_dim();
    for (std::size_t w : trunk_widths) {
        arch.trunk.push_back(LayerSpec::affine(in, w));
        arch.trunk.push_back(LayerSpec::relu(w));
        in = w;
    }
    arch.head.push_back(LayerSpec::affine(in, num_classes));
    arch.validate();
    return arch;
}

std::vector<double> ModelGradient::flatten() const {
    std::vector<double> out;
    for (const auto& e : encoders) append_gradient(e, out);
    append_gradient(trunk, out);
    append_gradient(head, out);
    return out;
}

ClientModel::ClientModel(ClientArchitecture arch, std::uint64_t seed) : arch_(std::move(arch)), id_(next_model_id()) {
    arch_.validate();
    std::mt19937_64 rng(seed);
    for (const auto& enc : arch_.encoders) encoders_.emplace_back(enc, rng);
    trunk_ = Network(arch_.trunk, rng);
    head_ = Network(arch_.head, rng);
}

std::size_t ClientModel::parameter_count() const noexcept {
    std::size_t n = trunk_.parameter_count() + head_.parameter_count();
    for (const auto& e : encoders_) n += e.parameter_count();
    return n;
}

std::vector<double> ClientModel::parameters() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (const auto& e : encoders_) e.append_parameters(out);
    trunk_.append_parameters(out);
    head_.append_parameters(out);
    return out;
}

void ClientModel::assign_parameters(std::span<const double> values) {
    if (values.size() != parameter_count()) {
        throw ShapeError("assign_parameters: got " + std::to_string(values.size()) + " values, model has " +
                         std::to_string(parameter_count()));
    }
    std::size_t offset = 0;
    for (auto& e : encoders_) offset = e.assign_parameters(values, offset);
    offset = trunk_.assign_parameters(values, offset);
    head_.assign_parameters(values, offset);
}

FullForward ClientModel::forward_full(const ModalityBatch& batch) const {
    const auto expected = arch_.modality_names();
    bool match = batch.size() == expected.size();
    for (const auto& name : expected) match = match && batch.count(name) == 1;
    if (!match) {
        std::vector<std::string> got;
        for (const auto& [name, _] : batch) got.push_back(name);
        throw ModalityError("batch modalities " + join(got) + " do not match client modalities " + join(expected));
    }

    FullForward out;
    TapCache& cache = out.tap.cache;
    cache.model_id = id_;
    std::vector<Matrix> encoded;
    encoded.reserve(encoders_.size());
    std::size_t rows = 0;
    for (std::size_t k = 0; k < encoders_.size(); ++k) {
        const Matrix& input = batch.at(arch_.modalities[k].name);
        if (k == 0) rows = input.rows();
        if (input.rows() != rows) throw ShapeError("modality batches have inconsistent row counts");
        if (input.cols() != arch_.modalities[k].input_dim) {
            throw ShapeError("modality '" + arch_.modalities[k].name + "' input " + input.shape_string() +
                             ", expected " + std::to_string(arch_.modalities[k].input_dim) + " columns");
        }
        if (encoders_[k].layers().empty()) {
            cache.encoders.emplace_back();
            encoded.push_back(input);
        } else {
            auto r = forward(encoders_[k], input);
            cache.encoders.push_back(std::move(r.cache));
            encoded.push_back(std::move(r.output));
        }
    }
    cache.batch = rows;
    const Matrix fused = encoded.size() == 1 ? std::move(encoded.front()) : hconcat(encoded);
    auto t = forward(trunk_, fused);
    cache.trunk = std::move(t.cache);
    out.tap.features = std::move(t.output);
    auto h = forward(head_, out.tap.features);
    cache.head = std::move(h.cache);
    out.logits = std::move(h.output);
    return out;
}

ModelGradient ClientModel::backward_composite(const TapCache& cache, const Matrix& dlogits, const Matrix& dtap) const {
    if (cache.model_id != id_) throw ContractError("backward_composite: tap cache belongs to another model");
    if (dlogits.rows() != cache.batch || dlogits.cols() != arch_.num_classes) {
        throw ShapeError("dlogits " + dlogits.shape_string() + " does not match batch " +
                         std::to_string(cache.batch) + " x classes " + std::to_string(arch_.num_classes));
    }
    const bool has_dtap = !dtap.empty();
    if (has_dtap && (dtap.rows() != cache.batch || dtap.cols() != arch_.tap_dim())) {
        throw ShapeError("dtap " + dtap.shape_string() + " does not match batch " + std::to_string(cache.batch) +
                         " x tap " + std::to_string(arch_.tap_dim()));
    }

    ModelGradient grad;
    grad.head = backward(head_, cache.head, dlogits);
    Matrix tap_grad = grad.head.input;
    if (has_dtap) axpy(1.0, dtap, tap_grad);
    grad.trunk = backward(trunk_, cache.trunk, tap_grad);

    std::size_t offset = 0;
    for (std::size_t k = 0; k < encoders_.size(); ++k) {
        const std::size_t width = arch_.encoders[k].empty() ? arch_.modalities[k].input_dim
                                                            : arch_.encoders[k].back().out_dim;
        const Matrix slice = encoders_.size() == 1 ? grad.trunk.input : column_slice(grad.trunk.input, offset, width);
        offset += width;
        if (encoders_[k].layers().empty()) {
            grad.encoders.push_back({{}, slice});
        } else {
            grad.encoders.push_back(backward(encoders_[k], cache.encoders[k], slice));
        }
    }
    return grad;
}

void ClientModel::apply_gradient(const ModelGradient& grad, double step) {
    if (grad.encoders.size() != encoders_.size()) throw ContractError("gradient encoder count mismatch");
    for (std::size_t k = 0; k < encoders_.size(); ++k) {
        if (!encoders_[k].layers().empty()) encoders_[k].apply_gradient(grad.encoders[k], step);
    }
    trunk_.apply_gradient(grad.trunk, step);
    head_.apply_gradient(grad.head, step);
}

ClientModel build_client_model(const ClientArchitecture& arch, std::uint64_t seed) { return ClientModel(arch, seed); }

}  // namespace comfed
