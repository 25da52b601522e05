#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "veil/util.hpp"

namespace veil {

struct ImageError : std::runtime_error {
    explicit ImageError(const std::string& what) : std::runtime_error(what) {}
};

// H x W x C pixels in [0,1], row-major, interleaved channels. All bundled
// images originate from 8-bit sources, so pixel values are k/255 grid points
// unless a perturbation has been applied.
struct ImageTensor {
    size_t height = 0;
    size_t width = 0;
    size_t channels = 3;
    std::vector<double> pixels;
    int source_bit_depth = 8;

    size_t size() const { return height * width * channels; }
    double& at(size_t y, size_t x, size_t c) {
        return pixels[(y * width + x) * channels + c];
    }
    double at(size_t y, size_t x, size_t c) const {
        return pixels[(y * width + x) * channels + c];
    }
    uint64_t fingerprint() const {
        uint64_t h = fnv1a(&height, sizeof height);
        h = fnv1a(&width, sizeof width, h);
        h = fnv1a(&channels, sizeof channels, h);
        return fnv1a(pixels.data(), pixels.size() * sizeof(double), h);
    }
};

ImageTensor make_image(size_t height, size_t width, double fill = 0.0);
void validate_image(const ImageTensor& img);

// round(v*255) clamped to [0,255].
uint8_t quantize_pixel(double v);
std::vector<uint8_t> quantize_image(const ImageTensor& img);
ImageTensor image_from_bytes(size_t height, size_t width, size_t channels,
                             const std::vector<uint8_t>& bytes);

}  // namespace veil
