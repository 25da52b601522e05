#pragma once

#include <string>
#include <vector>

#include "veil/image.hpp"

namespace veil {

struct Perturbation;  // protect.hpp

// Reads an 8-bit RGB PNG or binary PPM (P6, maxval 255). Any other format,
// bit depth, or a truncated file is rejected with a message naming it.
ImageTensor load_image(const std::string& path);
ImageTensor decode_image(const std::vector<uint8_t>& bytes,
                         const std::string& origin);

// Format picked from the extension (.png or .ppm). v -> round(v*255).
void save_image(const ImageTensor& img, const std::string& path);
std::vector<uint8_t> encode_png(const ImageTensor& img);
std::vector<uint8_t> encode_ppm(const ImageTensor& img);

// Quantizes base+delta to the 8-bit grid after validating the perturbation
// constraint against the base image. Evaluation consumes only this image:
// a shared image survives as 8-bit bytes, so protection must too.
ImageTensor apply_and_quantize(const ImageTensor& base, const Perturbation& p);

}  // namespace veil
