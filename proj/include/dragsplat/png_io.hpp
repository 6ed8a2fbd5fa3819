#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dragsplat::png {

// Minimal PNG support: 8-bit RGBA (color type 6) and 8-bit grayscale (color
// type 0), non-interlaced. The writer always emits filter type 0; the reader
// handles all five standard filters.
void write_rgba(const std::string& path, int height, int width, const std::vector<uint8_t>& rgba);
void write_gray(const std::string& path, int height, int width, const std::vector<uint8_t>& gray);

struct ImageU8 {
    int height = 0;
    int width = 0;
    int channels = 0;  // 1 or 4
    std::vector<uint8_t> data;
};

ImageU8 read(const std::string& path);

}  // namespace dragsplat::png
