#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <png.h>

#include "lunar/common.hpp"
#include "lunar/image.hpp"

namespace lunar {

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open file: " + path);
    f.seekg(0, std::ios::end);
    const auto len = static_cast<std::size_t>(f.tellg());
    f.seekg(0, std::ios::beg);
    std::vector<unsigned char> bytes(len);
    if (len > 0) f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(len));
    if (!f) throw io_error("short read: " + path);
    return bytes;
}

inline void write_file_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw io_error("cannot create file: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw io_error("short write: " + path);
}

// ---------------------------------------------------------------------------
// PGM (P5, binary, maxval 255)
// ---------------------------------------------------------------------------

namespace detail {

// Netpbm header tokenizer: skips whitespace and '#' comments.
inline long pgm_next_int(const std::vector<unsigned char>& bytes, std::size_t& pos, const std::string& what) {
    while (pos < bytes.size()) {
        const char c = static_cast<char>(bytes[pos]);
        if (c == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            ++pos;
        } else {
            break;
        }
    }
    if (pos >= bytes.size() || bytes[pos] < '0' || bytes[pos] > '9')
        throw format_error("PGM: expected " + what);
    long v = 0;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
        v = v * 10 + (bytes[pos] - '0');
        ++pos;
    }
    return v;
}

}  // namespace detail

inline std::vector<unsigned char> encode_pgm(const GrayImage& img) {
    const std::string header = "P5\n" + std::to_string(img.w) + " " + std::to_string(img.h) + "\n255\n";
    std::vector<unsigned char> out(header.begin(), header.end());
    const auto bytes = quantize(img);
    out.insert(out.end(), bytes.begin(), bytes.end());
    return out;
}

inline GrayImage decode_pgm(const std::vector<unsigned char>& bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
        throw format_error("PGM: not a P5 raster");
    std::size_t pos = 2;
    const long w = detail::pgm_next_int(bytes, pos, "width");
    const long h = detail::pgm_next_int(bytes, pos, "height");
    const long maxval = detail::pgm_next_int(bytes, pos, "maxval");
    if (w < 1 || h < 1) throw format_error("PGM: non-positive dimensions");
    if (maxval != 255) throw format_error("PGM: unsupported maxval " + std::to_string(maxval) + " (only 8-bit supported)");
    ++pos;  // single whitespace byte after maxval
    const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    if (bytes.size() < pos + need) throw format_error("PGM: truncated pixel data");
    GrayImage img(static_cast<int>(w), static_cast<int>(h));
    for (std::size_t i = 0; i < need; ++i) img.pixels[i] = byte_to_intensity(bytes[pos + i]);
    return img;
}

inline void write_pgm(const GrayImage& img, const std::string& path) {
    write_file_bytes(path, encode_pgm(img));
}

inline GrayImage read_pgm(const std::string& path) {
    return decode_pgm(read_file_bytes(path));
}

// ---------------------------------------------------------------------------
// PNG (8-bit grayscale only)
// ---------------------------------------------------------------------------

namespace detail {

struct PngMemReader {
    const unsigned char* data;
    std::size_t size;
    std::size_t pos;
};

inline void png_mem_read(png_structp png, png_bytep out, png_size_t n) {
    auto* r = static_cast<PngMemReader*>(png_get_io_ptr(png));
    if (r->pos + n > r->size) {
        png_error(png, "read past end of buffer");
        return;
    }
    std::memcpy(out, r->data + r->pos, n);
    r->pos += n;
}

inline void png_mem_write(png_structp png, png_bytep data, png_size_t n) {
    auto* v = static_cast<std::vector<unsigned char>*>(png_get_io_ptr(png));
    v->insert(v->end(), data, data + n);
}

inline void png_mem_flush(png_structp) {}

}  // namespace detail

inline std::vector<unsigned char> encode_png(const GrayImage& img) {
    const auto rowbytes = quantize(img);
    std::vector<unsigned char> out;

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw io_error("libpng: cannot create write struct");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw io_error("libpng: cannot create info struct");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw io_error("libpng: write failed");
    }
    png_set_write_fn(png, &out, detail::png_mem_write, detail::png_mem_flush);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h), 8,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.h; ++y)
        png_write_row(png, const_cast<png_bytep>(rowbytes.data() + static_cast<std::size_t>(y) * img.w));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

inline GrayImage decode_png(const std::vector<unsigned char>& bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0)
        throw format_error("PNG: bad signature");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw io_error("libpng: cannot create read struct");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw io_error("libpng: cannot create info struct");
    }

    detail::PngMemReader reader{bytes.data(), bytes.size(), 0};
    std::vector<png_byte> pixels;
    png_uint_32 w = 0, h = 0;
    int bit_depth = 0, color_type = 0;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw format_error("PNG: decode failed");
    }
    png_set_read_fn(png, &reader, detail::png_mem_read);
    png_read_info(png, info);
    png_get_IHDR(png, info, &w, &h, &bit_depth, &color_type, nullptr, nullptr, nullptr);

    if (color_type != PNG_COLOR_TYPE_GRAY) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw format_error("PNG: only 8-bit grayscale is supported (got color type " +
                           std::to_string(color_type) + ")");
    }
    if (bit_depth != 8) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw format_error("PNG: only 8-bit grayscale is supported (got bit depth " +
                           std::to_string(bit_depth) + ")");
    }

    pixels.resize(static_cast<std::size_t>(w) * h);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = pixels.data() + static_cast<std::size_t>(y) * w;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    GrayImage img(static_cast<int>(w), static_cast<int>(h));
    for (std::size_t i = 0; i < img.size(); ++i) img.pixels[i] = byte_to_intensity(pixels[i]);
    return img;
}

inline void write_png(const GrayImage& img, const std::string& path) {
    write_file_bytes(path, encode_png(img));
}

inline GrayImage read_png(const std::string& path) {
    return decode_png(read_file_bytes(path));
}

// ---------------------------------------------------------------------------
// Format-dispatching entry points. Reads sniff the magic bytes; writes pick
// the codec from the file extension (.png or .pgm).
// ---------------------------------------------------------------------------

inline GrayImage read_image(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    if (bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0) return decode_png(bytes);
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return decode_pgm(bytes);
    throw format_error("unrecognized image format: " + path);
}

inline void write_image(const GrayImage& img, const std::string& path) {
    const auto ext = std::filesystem::path(path).extension().string();
    if (ext == ".png" || ext == ".PNG") {
        write_png(img, path);
    } else if (ext == ".pgm" || ext == ".PGM") {
        write_pgm(img, path);
    } else {
        throw validation_error("write_image: unsupported extension '" + ext + "' (use .png or .pgm)");
    }
}

}  // namespace lunar
