#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace radiomamba {

// 8-bit single-channel image, row-major.
struct GrayImage {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> pixels;
};

GrayImage read_png_gray(const std::string& path);
void write_png_gray(const std::string& path, const GrayImage& img);

// Lossless 32-bit grid interchange: magic "F32G", u32 rows, u32 cols,
// then rows*cols little-endian float32 in row-major order.
struct F32Grid {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> values;
};

F32Grid read_f32grid(const std::string& path);
void write_f32grid(const std::string& path, const F32Grid& grid);

}  // namespace radiomamba
