#pragma once

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fada/tensor.hpp"

// Reader for the IDX container used by the MNIST/USPS digit corpora:
// 0x00 0x00 <type> <ndims>, then ndims big-endian u32 sizes, then payload.
// Only unsigned-byte payloads (type 0x08) are accepted.
namespace fada::idx {

inline constexpr std::uint32_t kLabelMagic = 0x00000801;
inline constexpr std::uint32_t kImageMagic = 0x00000803;
// N x H x W x 3 colour images; produced by the external SVHN conversion step.
inline constexpr std::uint32_t kColorImageMagic = 0x00000804;

class IdxError : public std::runtime_error {
public:
    IdxError(std::size_t offset, const std::string& detail)
        : std::runtime_error("idx: at byte offset " + std::to_string(offset) + ": " + detail),
          offset_(offset),
          detail_(detail) {}
    std::size_t offset() const { return offset_; }
    const std::string& detail() const { return detail_; }

private:
    std::size_t offset_;
    std::string detail_;
};

struct IdxArray {
    std::uint32_t magic = 0;
    Shape dims;
    std::vector<std::uint8_t> data;

    bool is_labels() const { return magic == kLabelMagic; }
};

inline std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
    if (offset + 4 > bytes.size()) throw IdxError(offset, "truncated header (need 4 bytes)");
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

inline IdxArray parse(std::span<const std::uint8_t> bytes) {
    if (bytes.empty()) throw IdxError(0, "empty input");
    IdxArray out;
    out.magic = read_be32(bytes, 0);
    std::size_t ndims = 0;
    switch (out.magic) {
        case kLabelMagic:
            ndims = 1;
            break;
        case kImageMagic:
            ndims = 3;
            break;
        case kColorImageMagic:
            ndims = 4;
            break;
        default: {
            char buf[16];
            std::snprintf(buf, sizeof buf, "0x%08x", out.magic);
            throw IdxError(
                0, std::string("unsupported magic ") + buf + " (expected 0x00000801 labels or 0x00000803 images)");
        }
    }
    std::size_t offset = 4;
    std::size_t count = 1;
    for (std::size_t d = 0; d < ndims; ++d, offset += 4) {
        const std::uint32_t n = read_be32(bytes, offset);
        if (n == 0) throw IdxError(offset, "zero-sized dimension " + std::to_string(d));
        out.dims.push_back(n);
        count *= n;
    }
    if (out.magic == kColorImageMagic && out.dims[3] != 3) {
        throw IdxError(16, "colour images must have 3 channels, got " + std::to_string(out.dims[3]));
    }
    if (bytes.size() - offset < count) {
        throw IdxError(bytes.size(), "truncated payload: need " + std::to_string(count) + " bytes after header, have " +
                                         std::to_string(bytes.size() - offset));
    }
    if (bytes.size() - offset > count) {
        throw IdxError(offset + count, "trailing bytes after payload");
    }
    out.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset), bytes.end());
    return out;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline IdxArray load(const std::string& path) {
    try {
        return parse(read_file_bytes(path));
    } catch (const IdxError& e) {
        throw IdxError(e.offset(), e.detail() + " [" + path + "]");
    }
}

// Serializes an unsigned-byte IDX array; used for fixtures and conversions.
inline std::vector<std::uint8_t> encode(std::uint32_t magic, const Shape& dims, std::span<const std::uint8_t> data) {
    std::vector<std::uint8_t> out;
    auto put = [&out](std::uint32_t v) {
        for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
    };
    put(magic);
    for (auto d : dims) put(static_cast<std::uint32_t>(d));
    out.insert(out.end(), data.begin(), data.end());
    return out;
}

}  // namespace fada::idx
