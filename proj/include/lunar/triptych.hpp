#pragma once

#include <cmath>
#include <cstdio>
#include <string>

#include "lunar/common.hpp"
#include "lunar/image.hpp"
#include "lunar/image_io.hpp"

namespace lunar {

namespace detail {

// 5x7 bitmap glyphs for PSNR labels.
inline const char* glyph_rows(char c) {
    switch (c) {
        case '0': return "01110""10001""10011""10101""11001""10001""01110";
        case '1': return "00100""01100""00100""00100""00100""00100""01110";
        case '2': return "01110""10001""00001""00010""00100""01000""11111";
        case '3': return "11111""00010""00100""00010""00001""10001""01110";
        case '4': return "00010""00110""01010""10010""11111""00010""00010";
        case '5': return "11111""10000""11110""00001""00001""10001""01110";
        case '6': return "00110""01000""10000""11110""10001""10001""01110";
        case '7': return "11111""00001""00010""00100""01000""01000""01000";
        case '8': return "01110""10001""10001""01110""10001""10001""01110";
        case '9': return "01110""10001""10001""01111""00001""00010""01100";
        case '.': return "00000""00000""00000""00000""00000""01100""01100";
        case '-': return "00000""00000""00000""01110""00000""00000""00000";
        case '+': return "00000""00100""00100""11111""00100""00100""00000";
        case 'd': return "00001""00001""01111""10001""10001""10001""01111";
        case 'B': return "11110""10001""10001""11110""10001""10001""11110";
        case 'i': return "00100""00000""01100""00100""00100""00100""01110";
        case 'n': return "00000""00000""10110""11001""10001""10001""10001";
        case 'f': return "00110""01001""01000""11100""01000""01000""01000";
        default: return nullptr;  // unknown chars render as blanks
    }
}

inline void draw_text(GrayImage& img, int x, int y, const std::string& text, double value) {
    for (char c : text) {
        const char* rows = glyph_rows(c);
        if (rows) {
            for (int r = 0; r < 7; ++r)
                for (int k = 0; k < 5; ++k)
                    if (rows[r * 5 + k] == '1' && x + k >= 0 && x + k < img.w && y + r >= 0 && y + r < img.h)
                        img.at(x + k, y + r) = value;
        }
        x += 6;
    }
}

inline std::string format_db(double psnr_db) {
    if (std::isinf(psnr_db)) return psnr_db > 0 ? "inf dB" : "-inf dB";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f dB", psnr_db);
    return buf;
}

}  // namespace detail

inline constexpr int kTriptychSeparator = 4;
inline constexpr int kTriptychLabelStrip = 11;  // 7px font + 2px padding each side

// Fig-4-style panel row: corrupted | restored | original, left to right, with
// PSNR labels under the first two panels. Returns the rendered image and
// writes it as an 8-bit grayscale PNG.
inline GrayImage render_triptych(const GrayImage& corrupted, const GrayImage& restored, const GrayImage& clean,
                                 double psnr_corrupted, double psnr_restored, const std::string& path) {
    if (!corrupted.same_dims(restored) || !corrupted.same_dims(clean))
        throw validation_error("render_triptych: panel dimensions differ");

    const int w = corrupted.w, h = corrupted.h;
    const int out_w = 3 * w + 2 * kTriptychSeparator;
    const int out_h = h + kTriptychLabelStrip;
    GrayImage out(out_w, out_h, 0.0);

    const GrayImage* panels[3] = {&corrupted, &restored, &clean};
    for (int p = 0; p < 3; ++p) {
        const int x0 = p * (w + kTriptychSeparator);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out.at(x0 + x, y) = panels[p]->at(x, y);
    }
    // Separator bars, full output height.
    for (int p = 0; p < 2; ++p) {
        const int x0 = (p + 1) * w + p * kTriptychSeparator;
        for (int y = 0; y < out_h; ++y)
            for (int x = 0; x < kTriptychSeparator; ++x) out.at(x0 + x, y) = 1.0;
    }
    detail::draw_text(out, 2, h + 2, detail::format_db(psnr_corrupted), 1.0);
    detail::draw_text(out, w + kTriptychSeparator + 2, h + 2, detail::format_db(psnr_restored), 1.0);

    write_image(out, path);
    return out;
}

}  // namespace lunar
