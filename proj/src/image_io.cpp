#include "veil/image_io.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>

#include "veil/protect.hpp"

namespace veil {

namespace {

constexpr uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};

uint32_t be32(const uint8_t* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) |
           (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

void put_be32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(uint8_t(v >> 24));
    out.push_back(uint8_t(v >> 16));
    out.push_back(uint8_t(v >> 8));
    out.push_back(uint8_t(v));
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

ImageTensor decode_png(const std::vector<uint8_t>& data,
                       const std::string& origin) {
    if (data.size() < 8 + 25 || std::memcmp(data.data(), kPngSig, 8) != 0)
        throw ImageError(origin + ": truncated PNG");

    size_t pos = 8;
    uint32_t width = 0, height = 0;
    int bit_depth = -1, color_type = -1, interlace = -1;
    bool saw_ihdr = false, saw_iend = false;
    std::vector<uint8_t> idat;

    while (pos + 12 <= data.size()) {
        const uint32_t len = be32(&data[pos]);
        if (pos + 12 + len > data.size())
            throw ImageError(origin + ": truncated PNG chunk");
        const char* type = reinterpret_cast<const char*>(&data[pos + 4]);
        const uint8_t* payload = &data[pos + 8];
        const uint32_t stored_crc = be32(&data[pos + 8 + len]);
        uint32_t crc = crc32(0L, Z_NULL, 0);
        crc = crc32(crc, &data[pos + 4], len + 4);
        if (crc != stored_crc)
            throw ImageError(origin + ": PNG chunk CRC mismatch");

        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw ImageError(origin + ": bad IHDR length");
            width = be32(payload);
            height = be32(payload + 4);
            bit_depth = payload[8];
            color_type = payload[9];
            interlace = payload[12];
            saw_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            saw_iend = true;
            break;
        }
        pos += 12 + len;
    }
    if (!saw_ihdr || !saw_iend || idat.empty())
        throw ImageError(origin + ": truncated PNG");
    if (bit_depth != 8)
        throw ImageError(origin + ": unsupported PNG bit depth " +
                         std::to_string(bit_depth) + " (only 8-bit RGB)");
    if (color_type != 2)
        throw ImageError(origin + ": unsupported PNG color type " +
                         std::to_string(color_type) + " (only 8-bit RGB)");
    if (interlace != 0)
        throw ImageError(origin + ": interlaced PNG not supported");
    if (width == 0 || height == 0)
        throw ImageError(origin + ": empty PNG");

    const size_t stride = size_t(width) * 3;
    const size_t raw_size = size_t(height) * (stride + 1);
    std::vector<uint8_t> raw(raw_size);
    uLongf dest_len = raw_size;
    const int zret = uncompress(raw.data(), &dest_len, idat.data(),
                                static_cast<uLong>(idat.size()));
    if (zret != Z_OK || dest_len != raw_size)
        throw ImageError(origin + ": PNG pixel data corrupt or truncated");

    std::vector<uint8_t> px(size_t(height) * stride);
    const size_t bpp = 3;
    for (size_t y = 0; y < height; ++y) {
        const uint8_t filter = raw[y * (stride + 1)];
        const uint8_t* src = &raw[y * (stride + 1) + 1];
        uint8_t* cur = &px[y * stride];
        const uint8_t* up = y > 0 ? &px[(y - 1) * stride] : nullptr;
        for (size_t x = 0; x < stride; ++x) {
            const int a = x >= bpp ? cur[x - bpp] : 0;
            const int b = up ? up[x] : 0;
            const int c = (up && x >= bpp) ? up[x - bpp] : 0;
            int v = src[x];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default:
                    throw ImageError(origin + ": bad PNG filter type " +
                                     std::to_string(filter));
            }
            cur[x] = uint8_t(v & 0xff);
        }
    }
    return image_from_bytes(height, width, 3, px);
}

ImageTensor decode_ppm(const std::vector<uint8_t>& data,
                       const std::string& origin) {
    size_t pos = 2;  // past "P6"
    auto skip_ws = [&] {
        for (;;) {
            while (pos < data.size() &&
                   std::isspace(static_cast<unsigned char>(data[pos])))
                ++pos;
            if (pos < data.size() && data[pos] == '#') {
                while (pos < data.size() && data[pos] != '\n') ++pos;
            } else {
                break;
            }
        }
    };
    auto read_int = [&]() -> long {
        skip_ws();
        if (pos >= data.size() || !std::isdigit(data[pos]))
            throw ImageError(origin + ": malformed PPM header");
        long v = 0;
        while (pos < data.size() && std::isdigit(data[pos]))
            v = v * 10 + (data[pos++] - '0');
        return v;
    };
    const long width = read_int();
    const long height = read_int();
    const long maxval = read_int();
    if (width <= 0 || height <= 0)
        throw ImageError(origin + ": bad PPM dimensions");
    if (maxval != 255)
        throw ImageError(origin + ": unsupported PPM maxval " +
                         std::to_string(maxval) + " (only 8-bit)");
    ++pos;  // single whitespace after maxval
    const size_t need = size_t(width) * size_t(height) * 3;
    if (pos + need > data.size())
        throw ImageError(origin + ": truncated PPM");
    std::vector<uint8_t> px(data.begin() + pos, data.begin() + pos + need);
    return image_from_bytes(size_t(height), size_t(width), 3, px);
}

}  // namespace

ImageTensor decode_image(const std::vector<uint8_t>& bytes,
                         const std::string& origin) {
    if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSig, 8) == 0)
        return decode_png(bytes, origin);
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6')
        return decode_ppm(bytes, origin);
    throw ImageError(origin + ": unsupported image format (PNG or PPM P6 only)");
}

ImageTensor load_image(const std::string& path) {
    return decode_image(read_file(path), path);
}

std::vector<uint8_t> encode_png(const ImageTensor& img) {
    validate_image(img);
    const auto px = quantize_image(img);
    const size_t stride = img.width * 3;
    std::vector<uint8_t> raw(img.height * (stride + 1));
    for (size_t y = 0; y < img.height; ++y) {
        raw[y * (stride + 1)] = 0;  // filter: none
        std::memcpy(&raw[y * (stride + 1) + 1], &px[y * stride], stride);
    }
    uLongf comp_cap = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> comp(comp_cap);
    if (compress2(comp.data(), &comp_cap, raw.data(),
                  static_cast<uLong>(raw.size()), 9) != Z_OK)
        throw ImageError("PNG compression failed");
    comp.resize(comp_cap);

    std::vector<uint8_t> out(kPngSig, kPngSig + 8);
    auto chunk = [&](const char* type, const std::vector<uint8_t>& payload) {
        put_be32(out, static_cast<uint32_t>(payload.size()));
        const size_t type_pos = out.size();
        out.insert(out.end(), type, type + 4);
        out.insert(out.end(), payload.begin(), payload.end());
        uint32_t crc = crc32(0L, Z_NULL, 0);
        crc = crc32(crc, &out[type_pos], static_cast<uInt>(4 + payload.size()));
        put_be32(out, crc);
    };

    std::vector<uint8_t> ihdr;
    put_be32(ihdr, static_cast<uint32_t>(img.width));
    put_be32(ihdr, static_cast<uint32_t>(img.height));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // truecolor
    ihdr.push_back(0);   // compression
    ihdr.push_back(0);   // filter
    ihdr.push_back(0);   // no interlace
    chunk("IHDR", ihdr);
    chunk("IDAT", comp);
    chunk("IEND", {});
    return out;
}

std::vector<uint8_t> encode_ppm(const ImageTensor& img) {
    validate_image(img);
    const std::string header = "P6\n" + std::to_string(img.width) + " " +
                               std::to_string(img.height) + "\n255\n";
    std::vector<uint8_t> out(header.begin(), header.end());
    const auto px = quantize_image(img);
    out.insert(out.end(), px.begin(), px.end());
    return out;
}

void save_image(const ImageTensor& img, const std::string& path) {
    std::vector<uint8_t> bytes;
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".png")
        bytes = encode_png(img);
    else if (path.size() >= 4 && path.substr(path.size() - 4) == ".ppm")
        bytes = encode_ppm(img);
    else
        throw ImageError(path + ": unsupported output extension (.png or .ppm)");
    write_file_atomic(path, bytes.data(), bytes.size());
}

ImageTensor apply_and_quantize(const ImageTensor& base, const Perturbation& p) {
    validate_image(base);
    if (p.height != base.height || p.width != base.width ||
        p.channels != base.channels)
        throw ImageError("perturbation shape does not match image");
    constexpr double kTol = 1e-9;
    ImageTensor out = base;
    for (size_t i = 0; i < base.pixels.size(); ++i) {
        const double d = p.delta[i];
        if (std::abs(d) > p.epsilon + kTol)
            throw ImageError("perturbation exceeds epsilon budget at pixel " +
                             std::to_string(i));
        const double v = base.pixels[i] + d;
        if (v < -kTol || v > 1.0 + kTol)
            throw ImageError("perturbed pixel " + std::to_string(i) +
                             " outside [0,1]");
        const double clamped = std::min(1.0, std::max(0.0, v));
        out.pixels[i] = static_cast<double>(quantize_pixel(clamped)) / 255.0;
    }
    return out;
}

}  // namespace veil
