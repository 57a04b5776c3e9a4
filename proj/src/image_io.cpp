#include "radiomamba/image_io.hpp"

#include <png.h>

#include <bit>
#include <cstdio>
#include <cstring>
#include <memory>

#include "radiomamba/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "f32grid I/O assumes a little-endian host");

namespace radiomamba {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

GrayImage read_png_gray(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw DataError("cannot open image: " + path);

    png_byte header[8];
    if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
        throw DataError("not a PNG file: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw DataError("libpng allocation failure reading " + path);
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw DataError("libpng allocation failure reading " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("libpng failed to decode " + path);
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const int depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    if (color != PNG_COLOR_TYPE_GRAY || depth != 8) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("expected 8-bit single-channel PNG: " + path);
    }

    GrayImage img;
    img.rows = h;
    img.cols = w;
    img.pixels.resize(static_cast<std::size_t>(w) * h);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 r = 0; r < h; ++r) rows[r] = img.pixels.data() + r * w;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_png_gray(const std::string& path, const GrayImage& img) {
    if (img.pixels.size() != img.rows * img.cols)
        throw DataError("image buffer does not match its dimensions: " + path);
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw DataError("cannot write image: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw DataError("libpng allocation failure writing " + path);
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw DataError("libpng allocation failure writing " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw DataError("libpng failed to encode " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.cols),
                 static_cast<png_uint_32>(img.rows), 8, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(img.rows);
    for (std::size_t r = 0; r < img.rows; ++r)
        rows[r] = const_cast<png_bytep>(img.pixels.data() + r * img.cols);
    png_write_rows(png, rows.data(), static_cast<png_uint_32>(img.rows));
    png_write_end(png, info);
    png_destroy_write_struct(&png, &info);
}

F32Grid read_f32grid(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw DataError("cannot open grid: " + path);
    char magic[4];
    if (std::fread(magic, 1, 4, fp.get()) != 4 || std::memcmp(magic, "F32G", 4) != 0)
        throw DataError("bad f32grid magic in " + path);
    std::uint32_t rows = 0, cols = 0;
    if (std::fread(&rows, 4, 1, fp.get()) != 1 || std::fread(&cols, 4, 1, fp.get()) != 1)
        throw DataError("truncated f32grid header in " + path);
    F32Grid g;
    g.rows = rows;
    g.cols = cols;
    g.values.resize(static_cast<std::size_t>(rows) * cols);
    if (std::fread(g.values.data(), 4, g.values.size(), fp.get()) != g.values.size())
        throw DataError("truncated f32grid payload in " + path);
    return g;
}

void write_f32grid(const std::string& path, const F32Grid& grid) {
    if (grid.values.size() != grid.rows * grid.cols)
        throw DataError("grid buffer does not match its dimensions: " + path);
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw DataError("cannot write grid: " + path);
    const std::uint32_t rows = static_cast<std::uint32_t>(grid.rows);
    const std::uint32_t cols = static_cast<std::uint32_t>(grid.cols);
    if (std::fwrite("F32G", 1, 4, fp.get()) != 4 || std::fwrite(&rows, 4, 1, fp.get()) != 1 ||
        std::fwrite(&cols, 4, 1, fp.get()) != 1 ||
        std::fwrite(grid.values.data(), 4, grid.values.size(), fp.get()) != grid.values.size())
        throw DataError("short write for grid: " + path);
}

}  // namespace radiomamba
