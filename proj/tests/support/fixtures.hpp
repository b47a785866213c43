#pragma once

// Shared test fixtures: synthetic crater-like imagery, scratch directories,
// and naive reference implementations used as independent oracles.

#include <unistd.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "lunar/geo.hpp"
#include "lunar/image.hpp"
#include "lunar/image_io.hpp"
#include "lunar/rng.hpp"
#include "lunar/stripes.hpp"
#include "lunar/tensor.hpp"

namespace testsupport {

// Unique scratch directory under the system temp dir; removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        const auto base = std::filesystem::temp_directory_path();
        for (int i = 0; i < 10000; ++i) {
            auto candidate = base / (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter_++));
            std::error_code ec;
            if (std::filesystem::create_directory(candidate, ec)) {
                path_ = candidate.string();
                return;
            }
        }
        throw std::runtime_error("TempDir: could not create scratch directory");
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::string& path() const { return path_; }
    std::string file(const std::string& name) const { return (std::filesystem::path(path_) / name).string(); }

private:
    static inline int counter_ = 0;
    std::string path_;
};

// Smooth synthetic crater field: low-frequency value noise plus a few bowl-
// and-rim craters. Intensities stay inside [0.25, 0.9] so black stripes are
// far from real content.
inline lunar::GrayImage crater_field(int w, int h, std::uint64_t seed) {
    lunar::SplitMix64 rng(seed);

    const int gw = 6, gh = 6;
    lunar::GrayImage coarse(gw, gh);
    for (auto& v : coarse.pixels) v = 0.45 + 0.35 * rng.next_double();
    lunar::GrayImage img = lunar::resize_bilinear(coarse, w, h);

    const int n_craters = 2 + static_cast<int>(rng.next_below(3));
    for (int k = 0; k < n_craters; ++k) {
        const double cx = rng.next_double() * w;
        const double cy = rng.next_double() * h;
        const double r = (0.08 + 0.17 * rng.next_double()) * std::min(w, h);
        const double depth = 0.15 + 0.2 * rng.next_double();
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double dx = (x - cx) / r, dy = (y - cy) / r;
                const double d2 = dx * dx + dy * dy;
                if (d2 < 4.0) {
                    const double d = std::sqrt(d2);
                    img.at(x, y) += -depth * std::exp(-3.0 * d2) + 0.6 * depth * std::exp(-18.0 * (d - 1.0) * (d - 1.0));
                }
            }
        }
    }
    for (auto& v : img.pixels) v = std::clamp(v, 0.25, 0.9);
    return img;
}

// Writes n clean crater crops into dir, returning their paths.
inline std::vector<std::string> write_clean_crops(const std::string& dir, int n, int size, std::uint64_t seed) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> paths;
    for (int i = 0; i < n; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "clean_%03d.png", i);
        const auto p = (std::filesystem::path(dir) / name).string();
        lunar::write_png(crater_field(size, size, lunar::mix64(seed, static_cast<std::uint64_t>(i))), p);
        paths.push_back(p);
    }
    return paths;
}

// A small template file with a couple of thin vertical stripes.
inline std::string write_stripe_templates(const std::string& path, int variant = 0) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    lunar::StripeTemplate tpl;
    if (variant == 0) {
        tpl.runs.push_back({0, 1, 0.0, 1.0});
    } else {
        // Two offset half-height runs; ~1.5% coverage on a 64px crop.
        tpl.runs.push_back({0, 1, 0.0, 0.5});
        tpl.runs.push_back({4, 1, 0.55, 1.0});
    }
    lunar::save_template(tpl, path);
    return path;
}

// Fixture mosaic: PGM + geo sidecar with pixel values from a generator.
template <typename F>
inline void write_fixture_mosaic(const std::string& pgm_path, const lunar::MosaicHeader& hdr, F&& pixel_at) {
    lunar::GrayImage img(static_cast<int>(hdr.width_px), static_cast<int>(hdr.height_px));
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) img.at(x, y) = pixel_at(x, y);
    lunar::write_pgm(img, pgm_path);
    lunar::save_geo_sidecar(hdr, lunar::default_sidecar_path(pgm_path));
}

// ---------------------------------------------------------------------------
// Naive reference ops (independent oracles for the fast kernels).
// ---------------------------------------------------------------------------

inline lunar::Tensor naive_conv3x3(const lunar::Tensor& in, const lunar::Tensor& w, const lunar::Tensor& b) {
    const auto N = in.dim(0), Ci = in.dim(1), H = in.dim(2), W = in.dim(3);
    const auto Co = w.dim(0);
    lunar::Tensor out = lunar::Tensor::zeros4(N, Co, H, W);
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t co = 0; co < Co; ++co)
            for (std::int64_t y = 0; y < H; ++y)
                for (std::int64_t x = 0; x < W; ++x) {
                    double acc = b.data[static_cast<std::size_t>(co)];
                    for (std::int64_t ci = 0; ci < Ci; ++ci)
                        for (int ky = 0; ky < 3; ++ky)
                            for (int kx = 0; kx < 3; ++kx) {
                                const std::int64_t yy = y + ky - 1, xx = x + kx - 1;
                                if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
                                acc += w.data[static_cast<std::size_t>(((co * Ci + ci) * 3 + ky) * 3 + kx)] *
                                       in.at4(n, ci, yy, xx);
                            }
                    out.at4(n, co, y, x) = acc;
                }
    return out;
}

inline lunar::Tensor naive_upconv2x2(const lunar::Tensor& in, const lunar::Tensor& w, const lunar::Tensor& b) {
    const auto N = in.dim(0), Ci = in.dim(1), H = in.dim(2), W = in.dim(3);
    const auto Co = w.dim(1);
    lunar::Tensor out = lunar::Tensor::zeros4(N, Co, 2 * H, 2 * W);
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t co = 0; co < Co; ++co)
            for (std::int64_t y = 0; y < 2 * H; ++y)
                for (std::int64_t x = 0; x < 2 * W; ++x) {
                    double acc = b.data[static_cast<std::size_t>(co)];
                    for (std::int64_t ci = 0; ci < Ci; ++ci)
                        acc += w.data[static_cast<std::size_t>(((ci * Co + co) * 2 + (y & 1)) * 2 + (x & 1))] *
                               in.at4(n, ci, y / 2, x / 2);
                    out.at4(n, co, y, x) = acc;
                }
    return out;
}

inline lunar::Tensor naive_maxpool2x2(const lunar::Tensor& in) {
    const auto N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
    lunar::Tensor out = lunar::Tensor::zeros4(N, C, H / 2, W / 2);
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t y = 0; y < H / 2; ++y)
                for (std::int64_t x = 0; x < W / 2; ++x) {
                    double m = in.at4(n, c, 2 * y, 2 * x);
                    m = std::max(m, in.at4(n, c, 2 * y, 2 * x + 1));
                    m = std::max(m, in.at4(n, c, 2 * y + 1, 2 * x));
                    m = std::max(m, in.at4(n, c, 2 * y + 1, 2 * x + 1));
                    out.at4(n, c, y, x) = m;
                }
    return out;
}

inline lunar::Tensor random_tensor4(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w,
                                    std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    lunar::Tensor t = lunar::Tensor::zeros4(n, c, h, w);
    lunar::SplitMix64 rng(seed);
    for (auto& v : t.data) v = lo + (hi - lo) * rng.next_double();
    return t;
}

}  // namespace testsupport
