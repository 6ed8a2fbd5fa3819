#include "dragsplat/png_io.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace dragsplat::png {

namespace {

void put_u32(std::vector<uint8_t>& v, uint32_t x) {
    v.push_back(static_cast<uint8_t>(x >> 24));
    v.push_back(static_cast<uint8_t>(x >> 16));
    v.push_back(static_cast<uint8_t>(x >> 8));
    v.push_back(static_cast<uint8_t>(x));
}

uint32_t get_u32(const uint8_t* p) {
    return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
           (static_cast<uint32_t>(p[2]) << 8) | p[3];
}

void write_chunk(std::vector<uint8_t>& out, const char* type, const std::vector<uint8_t>& payload) {
    put_u32(out, static_cast<uint32_t>(payload.size()));
    size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    uint32_t crc = crc32(0, out.data() + start, static_cast<uInt>(out.size() - start));
    put_u32(out, crc);
}

void write_png(const std::string& path, int height, int width, int channels,
               const std::vector<uint8_t>& pixels) {
    if (height <= 0 || width <= 0) throw std::invalid_argument("png: non-positive size");
    if (pixels.size() != static_cast<size_t>(height) * width * channels)
        throw std::invalid_argument("png: pixel buffer size mismatch");

    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(height) * (static_cast<size_t>(width) * channels + 1));
    for (int r = 0; r < height; ++r) {
        raw.push_back(0);  // filter: none
        const uint8_t* row = pixels.data() + static_cast<size_t>(r) * width * channels;
        raw.insert(raw.end(), row, row + static_cast<size_t>(width) * channels);
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> compressed(bound);
    if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw std::runtime_error("png: deflate failed");
    compressed.resize(bound);

    std::vector<uint8_t> out = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    std::vector<uint8_t> ihdr;
    put_u32(ihdr, static_cast<uint32_t>(width));
    put_u32(ihdr, static_cast<uint32_t>(height));
    ihdr.push_back(8);                                        // bit depth
    ihdr.push_back(channels == 4 ? 6 : 0);                    // color type
    ihdr.push_back(0);                                        // compression
    ihdr.push_back(0);                                        // filter method
    ihdr.push_back(0);                                        // no interlace
    write_chunk(out, "IHDR", ihdr);
    write_chunk(out, "IDAT", compressed);
    write_chunk(out, "IEND", {});

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("png: cannot open " + path);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace

void write_rgba(const std::string& path, int height, int width, const std::vector<uint8_t>& rgba) {
    write_png(path, height, width, 4, rgba);
}

void write_gray(const std::string& path, int height, int width, const std::vector<uint8_t>& gray) {
    write_png(path, height, width, 1, gray);
}

ImageU8 read(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("png: cannot open " + path);
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    if (buf.size() < 8 || std::memcmp(buf.data(), sig, 8) != 0)
        throw std::runtime_error("png: bad signature in " + path);

    ImageU8 img;
    std::vector<uint8_t> idat;
    size_t pos = 8;
    while (pos + 12 <= buf.size()) {
        uint32_t len = get_u32(buf.data() + pos);
        const char* type = reinterpret_cast<const char*>(buf.data() + pos + 4);
        const uint8_t* payload = buf.data() + pos + 8;
        if (pos + 12 + len > buf.size()) throw std::runtime_error("png: truncated chunk in " + path);
        if (std::memcmp(type, "IHDR", 4) == 0) {
            img.width = static_cast<int>(get_u32(payload));
            img.height = static_cast<int>(get_u32(payload + 4));
            int depth = payload[8], color = payload[9], interlace = payload[12];
            if (depth != 8 || (color != 0 && color != 6) || interlace != 0)
                throw std::runtime_error("png: unsupported format in " + path);
            img.channels = color == 6 ? 4 : 1;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    if (img.channels == 0) throw std::runtime_error("png: missing IHDR in " + path);

    const size_t stride = static_cast<size_t>(img.width) * img.channels;
    std::vector<uint8_t> raw((stride + 1) * img.height);
    uLongf raw_len = static_cast<uLongf>(raw.size());
    if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
        raw_len != raw.size())
        throw std::runtime_error("png: inflate failed for " + path);

    img.data.resize(stride * img.height);
    const int bpp = img.channels;
    for (int r = 0; r < img.height; ++r) {
        uint8_t filter = raw[r * (stride + 1)];
        const uint8_t* src = raw.data() + r * (stride + 1) + 1;
        uint8_t* dst = img.data.data() + static_cast<size_t>(r) * stride;
        const uint8_t* prev = r > 0 ? dst - stride : nullptr;
        for (size_t i = 0; i < stride; ++i) {
            int a = i >= static_cast<size_t>(bpp) ? dst[i - bpp] : 0;
            int b = prev ? prev[i] : 0;
            int c = (prev && i >= static_cast<size_t>(bpp)) ? prev[i - bpp] : 0;
            int x = src[i];
            switch (filter) {
                case 0: dst[i] = static_cast<uint8_t>(x); break;
                case 1: dst[i] = static_cast<uint8_t>(x + a); break;
                case 2: dst[i] = static_cast<uint8_t>(x + b); break;
                case 3: dst[i] = static_cast<uint8_t>(x + (a + b) / 2); break;
                case 4: dst[i] = static_cast<uint8_t>(x + paeth(a, b, c)); break;
                default: throw std::runtime_error("png: bad filter byte in " + path);
            }
        }
    }
    return img;
}

}  // namespace dragsplat::png
