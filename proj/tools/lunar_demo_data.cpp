// Generates a small synthetic demo workspace so the pipeline can be exercised
// end to end without the real Kaguya mosaic: a fixture mosaic with a few
// black stripes, a directory of clean crater crops, and one striped crop to
// run `detect` on.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "lunar/geo.hpp"
#include "lunar/image.hpp"
#include "lunar/image_io.hpp"
#include "lunar/rng.hpp"

namespace fs = std::filesystem;

namespace {

lunar::GrayImage crater_field(int w, int h, std::uint64_t seed) {
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
                    img.at(x, y) +=
                        -depth * std::exp(-3.0 * d2) + 0.6 * depth * std::exp(-18.0 * (d - 1.0) * (d - 1.0));
                }
            }
        }
    }
    for (auto& v : img.pixels) v = std::clamp(v, 0.25, 0.9);
    return img;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Generate synthetic demo data for the restoration pipeline"};
    std::string out_dir = "demo_data";
    std::uint64_t seed = 1;
    int n_clean = 12;
    int crop = 96;
    app.add_option("--out-dir", out_dir, "Output directory");
    app.add_option("--seed", seed, "Generator seed");
    app.add_option("--n-clean", n_clean, "Number of clean crater crops");
    app.add_option("--crop-size", crop, "Clean crop side length");
    CLI11_PARSE(app, argc, argv);

    try {
        fs::create_directories(fs::path(out_dir) / "clean");

        // 512x256 mosaic: 64 px/deg over lon [+4,-4], lat [+2,-2].
        const auto hdr = lunar::MosaicHeader::from_bounds(4.0, -4.0, 2.0, -2.0, 64.0);
        lunar::GrayImage mosaic = crater_field(static_cast<int>(hdr.width_px), static_cast<int>(hdr.height_px), seed);
        lunar::SplitMix64 rng(seed + 17);
        for (int band = 0; band < 4; ++band) {
            const int x0 = 40 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(hdr.width_px - 80)));
            const int width = 1 + static_cast<int>(rng.next_below(2));
            for (int y = 0; y < mosaic.h; ++y)
                for (int x = x0; x < x0 + width; ++x) mosaic.at(x, y) = 0.0;
        }
        const auto mosaic_path = (fs::path(out_dir) / "mosaic.pgm").string();
        lunar::write_pgm(mosaic, mosaic_path);
        lunar::save_geo_sidecar(hdr, lunar::default_sidecar_path(mosaic_path));

        for (int i = 0; i < n_clean; ++i) {
            char name[32];
            std::snprintf(name, sizeof(name), "crater_%03d.png", i);
            lunar::write_png(crater_field(crop, crop, lunar::mix64(seed, 100 + static_cast<std::uint64_t>(i))),
                             (fs::path(out_dir) / "clean" / name).string());
        }

        // One corrupted crop with a couple of stripes, for `detect`.
        lunar::GrayImage striped = crater_field(crop, crop, lunar::mix64(seed, 999));
        for (int y = 0; y < crop; ++y) {
            striped.at(crop / 4, y) = 0.0;
            if (y < crop * 3 / 4) striped.at(crop / 2 + 3, y) = 0.0;
        }
        lunar::write_png(striped, (fs::path(out_dir) / "striped_crater.png").string());

        std::cout << "demo data written to " << out_dir << "\n"
                  << "  mosaic.pgm + mosaic.pgm.geo.json (" << hdr.width_px << "x" << hdr.height_px << ")\n"
                  << "  clean/ (" << n_clean << " crops), striped_crater.png\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
