#include "comfed/latent.hpp"

#include <cmath>

#include "comfed/error.hpp"
#include "comfed/kernels.hpp"

namespace comfed {

Projection::Projection(Matrix matrix) : matrix_(std::move(matrix)) {
    if (matrix_.rows() == 0 || matrix_.cols() == 0) throw ShapeError("projection must be non-empty");
    if (matrix_.rows() > matrix_.cols()) {
        throw ShapeError("projection " + matrix_.shape_string() + " would expand: shared dim " +
                         std::to_string(matrix_.rows()) + " > local dim " + std::to_string(matrix_.cols()));
    }
}

Projection Projection::random(std::size_t shared_dim, std::size_t local_dim, std::uint64_t seed) {
    if (local_dim == 0) throw ShapeError("projection local dim must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(local_dim)));
    Matrix m(shared_dim, local_dim);
    for (double& v : m.values()) v = dist(rng);
    return Projection(std::move(m));
}

std::optional<std::string> Projection::compression_warning() const {
    if (2 * shared_dim() >= local_dim()) {
        return "shared dim " + std::to_string(shared_dim()) + " is at least half of local dim " +
               std::to_string(local_dim()) + "; projection barely compresses";
    }
    return std::nullopt;
}

std::vector<ClassStats> class_means(const Matrix& features, std::span<const int> labels) {
    if (labels.size() != features.rows()) {
        throw ShapeError("class_means: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(features.rows()) + " rows");
    }
    std::map<ClassId, ClassStats> acc;
    const auto& k = kernels::active();
    for (std::size_t r = 0; r < features.rows(); ++r) {
        auto& s = acc[labels[r]];
        if (s.sample_count == 0) {
            s.class_id = labels[r];
            s.mean_feature.assign(features.cols(), 0.0);
        }
        k.axpy(1.0, features.row(r).data(), s.mean_feature.data(), features.cols());
        ++s.sample_count;
    }
    std::vector<ClassStats> out;
    out.reserve(acc.size());
    for (auto& [_, s] : acc) {
        const double inv = 1.0 / static_cast<double>(s.sample_count);
        for (double& v : s.mean_feature) v *= inv;
        out.push_back(std::move(s));
    }
    return out;
}

LatentMap project(const Projection& projection, std::span<const ClassStats> stats) {
    LatentMap out;
    for (const auto& s : stats) {
        if (s.mean_feature.size() != projection.local_dim()) {
            throw ShapeError("project: class " + std::to_string(s.class_id) + " mean has length " +
                             std::to_string(s.mean_feature.size()) + ", projection expects " +
                             std::to_string(projection.local_dim()));
        }
        out[s.class_id] = matvec(projection.matrix(), s.mean_feature);
    }
    return out;
}

namespace {

void require_same_length(std::span<const double> x, std::span<const double> y, const char* who) {
    if (x.size() != y.size()) {
        throw ShapeError(std::string(who) + ": lengths " + std::to_string(x.size()) + " and " +
                         std::to_string(y.size()) + " differ");
    }
}

}  // namespace

double phi(DistanceKind kind, std::span<const double> x, std::span<const double> y) {
    require_same_length(x, y, "phi");
    const double sq = kernels::squared_distance(x, y);
    return kind == DistanceKind::squared_l2 ? sq : std::sqrt(sq);
}

std::vector<double> phi_grad_x(DistanceKind kind, std::span<const double> x, std::span<const double> y) {
    require_same_length(x, y, "phi_grad_x");
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = x[i] - y[i];
    if (kind == DistanceKind::squared_l2) {
        for (double& v : g) v *= 2.0;
        return g;
    }
    const double norm = std::sqrt(kernels::squared_distance(x, y));
    if (norm <= kL2KinkThreshold) {
        std::fill(g.begin(), g.end(), 0.0);
        return g;
    }
    for (double& v : g) v /= norm;
    return g;
}

std::string to_string(DistanceKind kind) { return kind == DistanceKind::squared_l2 ? "sq" : "l2"; }

DistanceKind distance_from_string(const std::string& name) {
    if (name == "sq" || name == "squared_l2") return DistanceKind::squared_l2;
    if (name == "l2") return DistanceKind::l2;
    throw ConfigError("unknown distance '" + name + "' (expected sq or l2)");
}

RegularizerTerms regularizer_terms(const Projection& projection, std::span<const ClassStats> stats,
                                   const LatentMap& targets, DistanceKind kind) {
    const Matrix& p = projection.matrix();
    RegularizerTerms out;
    out.dprojection = Matrix(p.rows(), p.cols());

    std::vector<const ClassStats*> overlap;
    for (const auto& s : stats) {
        if (s.sample_count > 0 && targets.count(s.class_id)) overlap.push_back(&s);
    }
    out.overlap = overlap.size();
    if (overlap.empty()) return out;

    const double inv_k = 1.0 / static_cast<double>(overlap.size());
    const auto& k = kernels::active();
    for (const ClassStats* s : overlap) {
        const auto& target = targets.at(s->class_id);
        if (target.size() != p.rows()) {
            throw ShapeError("regularizer: target for class " + std::to_string(s->class_id) + " has length " +
                             std::to_string(target.size()) + ", shared dim is " + std::to_string(p.rows()));
        }
        const auto projected = matvec(p, s->mean_feature);
        out.value += inv_k * phi(kind, projected, target);
        auto g = phi_grad_x(kind, projected, target);
        for (double& v : g) v *= inv_k;
        // d/dP phi(P v) = g v^T ; d/dv = P^T g
        for (std::size_t r = 0; r < p.rows(); ++r) {
            if (g[r] != 0.0) k.axpy(g[r], s->mean_feature.data(), out.dprojection.row(r).data(), p.cols());
        }
        out.dmeans[s->class_id] = matvec_t(p, g);
    }
    return out;
}

}  // namespace comfed
