#include <bit>
#include <cstring>

#include "comfed/error.hpp"
#include "comfed/latent.hpp"

namespace comfed {
namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
    static_assert(std::is_unsigned_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

template <typename T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t& offset) {
    if (offset + sizeof(T) > bytes.size()) throw ProtocolError("packet truncated");
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(T{bytes[offset + i]} << (8 * i));
    offset += sizeof(T);
    return value;
}

}  // namespace

std::uint64_t LatentPacket::class_mask() const {
    std::uint64_t mask = 0;
    for (const auto& [cls, _] : entries) mask |= std::uint64_t{1} << cls;
    return mask;
}

LatentMap LatentPacket::as_doubles() const {
    LatentMap out;
    for (const auto& [cls, v] : entries) out[cls] = std::vector<double>(v.begin(), v.end());
    return out;
}

LatentPacket make_packet(std::uint16_t sender, std::uint32_t round, std::size_t dim, const LatentMap& entries) {
    if (dim == 0 || dim > 0xFFFF) throw ShapeError("packet dim out of range");
    LatentPacket packet{sender, round, static_cast<std::uint16_t>(dim), {}};
    for (const auto& [cls, v] : entries) {
        if (cls < 0 || static_cast<std::size_t>(cls) >= kMaxClasses) {
            throw DomainError("class " + std::to_string(cls) + " does not fit the 64-bit class mask");
        }
        if (v.size() != dim) {
            throw ShapeError("packet entry for class " + std::to_string(cls) + " has length " +
                             std::to_string(v.size()) + ", expected " + std::to_string(dim));
        }
        packet.entries[cls] = std::vector<float>(v.begin(), v.end());
    }
    return packet;
}

std::vector<std::uint8_t> encode_packet(const LatentPacket& packet) {
    std::vector<std::uint8_t> out;
    out.reserve(packet.wire_size());
    put_le(out, packet.sender);
    put_le(out, packet.round);
    put_le(out, packet.dim);
    put_le(out, packet.class_mask());
    for (const auto& [cls, v] : packet.entries) {
        if (v.size() != packet.dim) throw ShapeError("packet entry length mismatch for class " + std::to_string(cls));
        for (float f : v) put_le(out, std::bit_cast<std::uint32_t>(f));
    }
    return out;
}

LatentPacket decode_packet(std::span<const std::uint8_t> bytes) {
    std::size_t offset = 0;
    LatentPacket packet;
    packet.sender = get_le<std::uint16_t>(bytes, offset);
    packet.round = get_le<std::uint32_t>(bytes, offset);
    packet.dim = get_le<std::uint16_t>(bytes, offset);
    const auto mask = get_le<std::uint64_t>(bytes, offset);
    for (std::size_t cls = 0; cls < kMaxClasses; ++cls) {
        if (!(mask & (std::uint64_t{1} << cls))) continue;
        std::vector<float> v(packet.dim);
        for (float& f : v) f = std::bit_cast<float>(get_le<std::uint32_t>(bytes, offset));
        packet.entries[static_cast<ClassId>(cls)] = std::move(v);
    }
    if (offset != bytes.size()) throw ProtocolError("packet has " + std::to_string(bytes.size() - offset) + " trailing bytes");
    return packet;
}

}  // namespace comfed
