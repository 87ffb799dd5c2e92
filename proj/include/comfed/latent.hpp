#pragma once

// Shared latent space: projection matrices, per-class statistics, the distance
// functions and their gradients, the regularizer, and the wire packet.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "comfed/matrix.hpp"

namespace comfed {

using ClassId = int;

// Class -> latent vector (length d). Used for consensus targets and for the
// in-memory form of projected means.
using LatentMap = std::map<ClassId, std::vector<double>>;

class Projection {
public:
    Projection() = default;
    // Requires 1 <= shared_dim <= local_dim.
    explicit Projection(Matrix matrix);

    // Entries ~ N(0, 1/local_dim).
    static Projection random(std::size_t shared_dim, std::size_t local_dim, std::uint64_t seed);

    const Matrix& matrix() const noexcept { return matrix_; }
    Matrix& mutable_matrix() noexcept { return matrix_; }
    std::size_t shared_dim() const noexcept { return matrix_.rows(); }
    std::size_t local_dim() const noexcept { return matrix_.cols(); }

    // Set when d >= d_i / 2, i.e. the projection barely compresses.
    std::optional<std::string> compression_warning() const;

private:
    Matrix matrix_;
};

struct ClassStats {
    ClassId class_id = 0;
    std::vector<double> mean_feature;  // length d_i
    std::size_t sample_count = 0;
};

// Per-class means of the rows of `features`, ascending class order. Classes
// without rows are omitted.
std::vector<ClassStats> class_means(const Matrix& features, std::span<const int> labels);

// u_m = P * mean_m for every class in stats.
LatentMap project(const Projection& projection, std::span<const ClassStats> stats);

enum class DistanceKind { squared_l2, l2 };

// Below this norm the L2 subgradient is taken to be zero.
inline constexpr double kL2KinkThreshold = 1e-12;

double phi(DistanceKind kind, std::span<const double> x, std::span<const double> y);
std::vector<double> phi_grad_x(DistanceKind kind, std::span<const double> x, std::span<const double> y);

std::string to_string(DistanceKind kind);
DistanceKind distance_from_string(const std::string& name);

struct RegularizerTerms {
    double value = 0.0;
    Matrix dprojection;  // d x d_i
    LatentMap dmeans;    // class -> d loss / d mean_feature (length d_i)
    std::size_t overlap = 0;
};

// (1/K) sum over classes present in both stats and targets of
// phi(P mean_m, target_m), with K the overlap size. K = 0 gives all zeros.
RegularizerTerms regularizer_terms(const Projection& projection, std::span<const ClassStats> stats,
                                   const LatentMap& targets, DistanceKind kind);

// Wire format (little endian):
//   u16 sender | u32 round | u16 dim | u64 class bitmask | present vectors as f32,
// ascending class order.
inline constexpr std::size_t kPacketHeaderBytes = 16;
inline constexpr std::size_t kMaxClasses = 64;

struct LatentPacket {
    std::uint16_t sender = 0;
    std::uint32_t round = 0;
    std::uint16_t dim = 0;
    std::map<ClassId, std::vector<float>> entries;

    std::uint64_t class_mask() const;
    std::size_t wire_size() const noexcept { return kPacketHeaderBytes + 4 * std::size_t{dim} * entries.size(); }
    LatentMap as_doubles() const;

    friend bool operator==(const LatentPacket&, const LatentPacket&) = default;
};

// Rounds values to f32 and validates lengths.
LatentPacket make_packet(std::uint16_t sender, std::uint32_t round, std::size_t dim, const LatentMap& entries);

inline std::size_t packet_wire_size(std::size_t dim, std::size_t present_classes) {
    return kPacketHeaderBytes + 4 * dim * present_classes;
}

std::vector<std::uint8_t> encode_packet(const LatentPacket& packet);
LatentPacket decode_packet(std::span<const std::uint8_t> bytes);

}  // namespace comfed
