#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fada/idx.hpp"
#include "fada/image.hpp"
#include "fada/log.hpp"
#include "fada/random.hpp"
#include "fada/tensor.hpp"

namespace fada {

inline constexpr std::size_t kDigitClasses = 10;

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Labelled samples of one domain. Image datasets use sample shape
// {1,16,16} with pixels in [0,1]; vector datasets use {d}.
struct Dataset {
    Shape sample_shape{1, image::kSide, image::kSide};
    std::vector<float> features;
    std::vector<int> labels;
    std::size_t num_classes = kDigitClasses;
    std::string domain_tag;
    std::string provenance;

    std::size_t size() const { return labels.size(); }
    bool empty() const { return labels.empty(); }
    std::size_t sample_size() const { return shape_size(sample_shape); }
    bool is_image() const { return sample_shape == Shape{1, image::kSide, image::kSide}; }

    std::span<const float> sample(std::size_t i) const {
        return std::span<const float>(features).subspan(i * sample_size(), sample_size());
    }

    void validate() const {
        if (features.size() != labels.size() * sample_size()) {
            throw DatasetError("dataset '" + domain_tag + "': feature length does not match label count");
        }
        for (int y : labels) {
            if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
                throw DatasetError("dataset '" + domain_tag + "': label " + std::to_string(y) + " outside [0," +
                                   std::to_string(num_classes) + ")");
            }
        }
        if (is_image()) {
            for (float v : features) {
                if (!(v >= 0.0f && v <= 1.0f)) throw DatasetError("dataset '" + domain_tag + "': pixel outside [0,1]");
            }
        }
    }

    Dataset subset(std::span<const std::size_t> idx) const {
        Dataset out;
        out.sample_shape = sample_shape;
        out.num_classes = num_classes;
        out.domain_tag = domain_tag;
        out.provenance = provenance;
        out.features.reserve(idx.size() * sample_size());
        out.labels.reserve(idx.size());
        for (auto i : idx) {
            if (i >= size()) throw std::out_of_range("dataset subset index out of range");
            auto s = sample(i);
            out.features.insert(out.features.end(), s.begin(), s.end());
            out.labels.push_back(labels[i]);
        }
        return out;
    }

    // Stacks the selected samples into a [B x sample_shape...] tensor.
    template <typename T>
    Tensor<T> batch(std::span<const std::size_t> idx) const {
        Shape shape{idx.size()};
        shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
        Tensor<T> out(shape);
        const std::size_t n = sample_size();
        for (std::size_t b = 0; b < idx.size(); ++b) {
            auto s = sample(idx[b]);
            std::copy(s.begin(), s.end(), out.data().begin() + static_cast<std::ptrdiff_t>(b * n));
        }
        return out;
    }

    std::vector<int> batch_labels(std::span<const std::size_t> idx) const {
        std::vector<int> out;
        out.reserve(idx.size());
        for (auto i : idx) out.push_back(labels[i]);
        return out;
    }

    std::vector<std::size_t> class_counts() const {
        std::vector<std::size_t> counts(num_classes, 0);
        for (int y : labels) ++counts[static_cast<std::size_t>(y)];
        return counts;
    }

    std::vector<std::vector<std::size_t>> indices_by_class() const {
        std::vector<std::vector<std::size_t>> out(num_classes);
        for (std::size_t i = 0; i < size(); ++i) out[static_cast<std::size_t>(labels[i])].push_back(i);
        return out;
    }
};

inline std::vector<std::size_t> iota_indices(std::size_t n) {
    std::vector<std::size_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = i;
    return v;
}

// ---------------------------------------------------------------------------
// Canonical archive: "FADA" 0x01, LE u32 N C H W, N*C*H*W LE f32, N label bytes.

namespace archive {

inline constexpr std::array<char, 4> kMagic{'F', 'A', 'D', 'A'};
inline constexpr std::uint8_t kVersion = 0x01;

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

inline std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t off) {
    return std::uint32_t{b[off]} | (std::uint32_t{b[off + 1]} << 8) | (std::uint32_t{b[off + 2]} << 16) |
           (std::uint32_t{b[off + 3]} << 24);
}

}  // namespace detail

inline std::array<std::uint32_t, 3> chw_of(const Shape& s) {
    if (s.size() == 3)
        return {static_cast<std::uint32_t>(s[0]), static_cast<std::uint32_t>(s[1]), static_cast<std::uint32_t>(s[2])};
    if (s.size() == 1) return {1, 1, static_cast<std::uint32_t>(s[0])};
    throw DatasetError("archive: unsupported sample shape " + shape_str(s));
}

inline std::vector<std::uint8_t> encode(const Dataset& ds) {
    ds.validate();
    if (ds.num_classes > 256) throw DatasetError("archive: labels must fit in one byte");
    const auto [c, h, w] = chw_of(ds.sample_shape);
    std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
    out.push_back(kVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(ds.size()));
    detail::put_u32(out, c);
    detail::put_u32(out, h);
    detail::put_u32(out, w);
    out.reserve(out.size() + ds.features.size() * 4 + ds.size());
    for (float v : ds.features) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
    for (int y : ds.labels) out.push_back(static_cast<std::uint8_t>(y));
    return out;
}

inline Dataset decode(std::span<const std::uint8_t> b, const std::string& tag = {}) {
    constexpr std::size_t header = 4 + 1 + 16;
    if (b.size() < header) throw DatasetError("archive: truncated header (" + std::to_string(b.size()) + " bytes)");
    if (!std::equal(kMagic.begin(), kMagic.end(), b.begin())) throw DatasetError("archive: bad magic");
    if (b[4] != kVersion) throw DatasetError("archive: unsupported version " + std::to_string(b[4]));
    const std::size_t n = detail::get_u32(b, 5), c = detail::get_u32(b, 9), h = detail::get_u32(b, 13),
                      w = detail::get_u32(b, 17);
    if (c == 0 || h == 0 || w == 0) throw DatasetError("archive: zero sample dimension");
    const std::size_t per = c * h * w;
    if (b.size() != header + n * per * 4 + n) {
        throw DatasetError("archive: payload size " + std::to_string(b.size() - header) + " does not match header");
    }
    Dataset ds;
    ds.sample_shape = (c == 1 && h == 1) ? Shape{w} : Shape{c, h, w};
    ds.domain_tag = tag;
    ds.features.resize(n * per);
    for (std::size_t i = 0; i < n * per; ++i) ds.features[i] = std::bit_cast<float>(detail::get_u32(b, header + 4 * i));
    ds.labels.resize(n);
    int max_label = -1;
    for (std::size_t i = 0; i < n; ++i) {
        ds.labels[i] = b[header + n * per * 4 + i];
        max_label = std::max(max_label, ds.labels[i]);
    }
    const auto seen = static_cast<std::size_t>(max_label + 1);
    ds.num_classes = ds.is_image() ? std::max(kDigitClasses, seen) : std::max<std::size_t>(1, seen);
    return ds;
}

inline void write(const Dataset& ds, const std::string& path) {
    const auto bytes = encode(ds);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + path);
}

inline bool has_magic(std::span<const std::uint8_t> b) {
    return b.size() >= 4 && std::equal(kMagic.begin(), kMagic.end(), b.begin());
}

inline Dataset read(const std::string& path, const std::string& tag = {}) {
    const auto bytes = idx::read_file_bytes(path);
    Dataset ds = decode(bytes, tag);
    ds.provenance = path;
    return ds;
}

}  // namespace archive

// Builds a normalized 16x16 grayscale dataset from IDX image and label
// arrays: bytes / 255, colour -> luminance, then bilinear resize.
inline Dataset dataset_from_idx(const idx::IdxArray& images, const idx::IdxArray& labels, const std::string& tag) {
    if (images.is_labels()) throw DatasetError("expected an IDX image array, got labels");
    if (!labels.is_labels()) throw DatasetError("expected an IDX label array");
    const std::size_t n = images.dims[0], h = images.dims[1], w = images.dims[2];
    if (labels.dims[0] != n) {
        throw DatasetError("image count " + std::to_string(n) + " != label count " + std::to_string(labels.dims[0]));
    }
    const bool colour = images.magic == idx::kColorImageMagic;
    const std::size_t per = h * w * (colour ? 3 : 1);
    Dataset ds;
    ds.domain_tag = tag;
    ds.features.reserve(n * image::kSide * image::kSide);
    std::vector<float> px;
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t* src = images.data.data() + i * per;
        std::vector<float> gray;
        if (colour) {
            // Interleaved HxWx3 -> planar 3xHxW.
            px.assign(per, 0.0f);
            for (std::size_t p = 0; p < h * w; ++p)
                for (std::size_t c = 0; c < 3; ++c) px[c * h * w + p] = image::normalize_byte(src[p * 3 + c]);
            gray = image::rgb_to_gray(px, 3, h, w);
        } else {
            gray.resize(per);
            for (std::size_t p = 0; p < per; ++p) gray[p] = image::normalize_byte(src[p]);
        }
        auto small = image::resize_bilinear(gray, h, w);
        for (auto& v : small) v = std::clamp(v, 0.0f, 1.0f);
        ds.features.insert(ds.features.end(), small.begin(), small.end());
        const int y = labels.data[i];
        ds.labels.push_back(y);
    }
    ds.validate();
    return ds;
}

inline Dataset load_idx_dataset(const std::string& images_path, const std::string& labels_path,
                                const std::string& tag) {
    Dataset ds = dataset_from_idx(idx::load(images_path), idx::load(labels_path), tag);
    ds.provenance = images_path + " + " + labels_path;
    return ds;
}

// ---------------------------------------------------------------------------
// Seeded subsets.

// Uniform sample of `count` items without replacement, in draw order.
inline Dataset sample_source_subset(const Dataset& ds, std::size_t count, std::uint64_t seed) {
    if (count > ds.size()) {
        throw DatasetError("cannot sample " + std::to_string(count) + " items from " + std::to_string(ds.size()));
    }
    Rng rng = make_rng(seed, 0x5eed5);
    const auto idx = sample_without_replacement(ds.size(), count, rng);
    return ds.subset(idx);
}

struct FewShotSplit {
    Dataset train;
    Dataset heldout;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> heldout_indices;
    std::vector<int> absent_classes;
};

// Picks up to n samples per class (all of them when a class has fewer) as
// the labelled target set; everything else is held out.
inline FewShotSplit sample_few_shot_target(const Dataset& ds, std::size_t n_per_class, std::uint64_t seed) {
    if (n_per_class < 1) throw DatasetError("few-shot sampling needs n >= 1");
    Rng rng = make_rng(seed, 0xf5407);
    auto by_class = ds.indices_by_class();
    FewShotSplit split;
    std::vector<bool> picked(ds.size(), false);
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& members = by_class[c];
        if (members.empty()) {
            split.absent_classes.push_back(static_cast<int>(c));
            continue;
        }
        const std::size_t k = std::min(n_per_class, members.size());
        for (auto pos : sample_without_replacement(members.size(), k, rng)) {
            split.train_indices.push_back(members[pos]);
            picked[members[pos]] = true;
        }
    }
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (!picked[i]) split.heldout_indices.push_back(i);
    if (!split.absent_classes.empty()) {
        std::string list;
        for (int c : split.absent_classes) list += (list.empty() ? "" : ",") + std::to_string(c);
        warn("few-shot target set has no samples for classes {" + list + "} in '" + ds.domain_tag + "'");
    }
    split.train = ds.subset(split.train_indices);
    split.heldout = ds.subset(split.heldout_indices);
    return split;
}

}  // namespace fada
