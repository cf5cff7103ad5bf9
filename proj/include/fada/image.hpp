#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fada::image {

inline constexpr std::size_t kSide = 16;

// Bilinear resize with corner-aligned sampling: output pixel (i, j) reads
// input coordinate (i * (H-1)/(oh-1), j * (W-1)/(ow-1)), so the four corners
// map exactly onto the input corners.
inline std::vector<float> resize_bilinear(std::span<const float> img, std::size_t h, std::size_t w,
                                          std::size_t oh = kSide, std::size_t ow = kSide) {
    if (h < 2 || w < 2 || oh < 1 || ow < 1) {
        throw std::invalid_argument("resize_bilinear: degenerate dimensions " + std::to_string(h) + "x" +
                                    std::to_string(w) + " -> " + std::to_string(oh) + "x" + std::to_string(ow));
    }
    if (img.size() != h * w) throw std::invalid_argument("resize_bilinear: pixel count does not match dimensions");
    if (h == oh && w == ow) return {img.begin(), img.end()};
    const double sy = oh > 1 ? static_cast<double>(h - 1) / static_cast<double>(oh - 1) : 0.0;
    const double sx = ow > 1 ? static_cast<double>(w - 1) / static_cast<double>(ow - 1) : 0.0;
    std::vector<float> out(oh * ow);
    for (std::size_t i = 0; i < oh; ++i) {
        const double y = static_cast<double>(i) * sy;
        const std::size_t y0 = std::min(static_cast<std::size_t>(y), h - 2);
        const double fy = y - static_cast<double>(y0);
        for (std::size_t j = 0; j < ow; ++j) {
            const double x = static_cast<double>(j) * sx;
            const std::size_t x0 = std::min(static_cast<std::size_t>(x), w - 2);
            const double fx = x - static_cast<double>(x0);
            const double top = (1.0 - fx) * img[y0 * w + x0] + fx * img[y0 * w + x0 + 1];
            const double bot = (1.0 - fx) * img[(y0 + 1) * w + x0] + fx * img[(y0 + 1) * w + x0 + 1];
            out[i * ow + j] = static_cast<float>((1.0 - fy) * top + fy * bot);
        }
    }
    return out;
}

// Luminance 0.299 R + 0.587 G + 0.114 B of a planar 3xHxW image.
inline std::vector<float> rgb_to_gray(std::span<const float> img, std::size_t channels, std::size_t h, std::size_t w) {
    if (channels != 3) {
        throw std::invalid_argument("rgb_to_gray: expected 3 channels, got " + std::to_string(channels));
    }
    if (img.size() != 3 * h * w) throw std::invalid_argument("rgb_to_gray: pixel count does not match dimensions");
    const std::size_t plane = h * w;
    std::vector<float> out(plane);
    for (std::size_t i = 0; i < plane; ++i) {
        const double g = 0.299 * img[i] + 0.587 * img[plane + i] + 0.114 * img[2 * plane + i];
        out[i] = static_cast<float>(std::clamp(g, 0.0, 1.0));
    }
    return out;
}

inline float normalize_byte(unsigned char v) { return static_cast<float>(v) / 255.0f; }

}  // namespace fada::image
