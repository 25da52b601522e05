#include "veil/image.hpp"

#include <cmath>

namespace veil {

ImageTensor make_image(size_t height, size_t width, double fill) {
    ImageTensor img;
    img.height = height;
    img.width = width;
    img.channels = 3;
    img.pixels.assign(height * width * 3, fill);
    return img;
}

void validate_image(const ImageTensor& img) {
    if (img.height == 0 || img.width == 0)
        throw ImageError("image dimensions must be positive");
    if (img.channels != 3)
        throw ImageError("expected 3 channels, got " +
                         std::to_string(img.channels));
    if (img.pixels.size() != img.size())
        throw ImageError("pixel buffer size mismatch");
    for (double v : img.pixels)
        if (!(v >= 0.0 && v <= 1.0))
            throw ImageError("pixel value " + std::to_string(v) +
                             " outside [0,1]");
}

uint8_t quantize_pixel(double v) {
    const double scaled = std::round(v * 255.0);
    if (scaled <= 0.0) return 0;
    if (scaled >= 255.0) return 255;
    return static_cast<uint8_t>(scaled);
}

std::vector<uint8_t> quantize_image(const ImageTensor& img) {
    std::vector<uint8_t> out(img.pixels.size());
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = quantize_pixel(img.pixels[i]);
    return out;
}

ImageTensor image_from_bytes(size_t height, size_t width, size_t channels,
                             const std::vector<uint8_t>& bytes) {
    if (channels != 3) throw ImageError("expected 3 channels");
    if (bytes.size() != height * width * channels)
        throw ImageError("byte buffer size mismatch");
    ImageTensor img = make_image(height, width);
    for (size_t i = 0; i < bytes.size(); ++i)
        img.pixels[i] = static_cast<double>(bytes[i]) / 255.0;
    return img;
}

}  // namespace veil
