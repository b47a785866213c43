#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "lunar/common.hpp"

namespace lunar {

// Geodetic metadata binding a raster to lon/lat bounds.
//
// Axis orientation (pinned for the whole project): x grows as longitude
// DECREASES from lon_max_deg (east-positive ranges are listed +180..-180),
// y grows as latitude DECREASES from lat_max_deg. Pixel (0,0) is the
// north-west corner at (lon_max_deg, lat_max_deg).
struct MosaicHeader {
    std::int64_t width_px = 0;
    std::int64_t height_px = 0;
    double lon_max_deg = 0.0;
    double lon_min_deg = 0.0;
    double lat_max_deg = 0.0;
    double lat_min_deg = 0.0;
    double px_per_degree = 0.0;
    int bit_depth = 8;

    void validate() const {
        if (width_px < 1 || height_px < 1)
            throw validation_error("MosaicHeader: raster dimensions must be positive");
        if (px_per_degree <= 0.0)
            throw validation_error("MosaicHeader: px_per_degree must be positive");
        if (lon_max_deg <= lon_min_deg)
            throw validation_error("MosaicHeader: lon_max_deg must exceed lon_min_deg");
        if (lat_max_deg <= lat_min_deg)
            throw validation_error("MosaicHeader: lat_max_deg must exceed lat_min_deg");
        if (bit_depth != 8)
            throw validation_error("MosaicHeader: only bit_depth 8 is supported");
        const auto want_w = static_cast<std::int64_t>(std::llround((lon_max_deg - lon_min_deg) * px_per_degree));
        const auto want_h = static_cast<std::int64_t>(std::llround((lat_max_deg - lat_min_deg) * px_per_degree));
        if (want_w != width_px)
            throw validation_error("MosaicHeader: width_px " + std::to_string(width_px) +
                                   " does not match lon span * px_per_degree = " + std::to_string(want_w));
        if (want_h != height_px)
            throw validation_error("MosaicHeader: height_px " + std::to_string(height_px) +
                                   " does not match lat span * px_per_degree = " + std::to_string(want_h));
    }

    static MosaicHeader from_bounds(double lon_max, double lon_min, double lat_max, double lat_min,
                                    double px_per_degree, int bit_depth = 8) {
        MosaicHeader hdr;
        hdr.lon_max_deg = lon_max;
        hdr.lon_min_deg = lon_min;
        hdr.lat_max_deg = lat_max;
        hdr.lat_min_deg = lat_min;
        hdr.px_per_degree = px_per_degree;
        hdr.bit_depth = bit_depth;
        hdr.width_px = static_cast<std::int64_t>(std::llround((lon_max - lon_min) * px_per_degree));
        hdr.height_px = static_cast<std::int64_t>(std::llround((lat_max - lat_min) * px_per_degree));
        hdr.validate();
        return hdr;
    }
};

struct GeoPoint {
    double lon_deg = 0.0;
    double lat_deg = 0.0;
};

struct PixelCoord {
    std::int64_t x = 0;
    std::int64_t y = 0;
    bool operator==(const PixelCoord&) const = default;
};

// Top-left anchored pixel rectangle, origin at the north-west raster corner.
struct PixelRect {
    std::int64_t x0 = 0;
    std::int64_t y0 = 0;
    std::int64_t w = 0;
    std::int64_t h = 0;

    void validate_within(std::int64_t raster_w, std::int64_t raster_h) const {
        if (w < 1 || h < 1)
            throw validation_error("PixelRect: extent must be positive, got " + std::to_string(w) + "x" +
                                   std::to_string(h));
        if (x0 < 0 || y0 < 0 || x0 + w > raster_w || y0 + h > raster_h)
            throw validation_error("PixelRect: rect (" + std::to_string(x0) + "," + std::to_string(y0) + "," +
                                   std::to_string(w) + "," + std::to_string(h) + ") exceeds raster " +
                                   std::to_string(raster_w) + "x" + std::to_string(raster_h));
    }
};

namespace detail {
// floor with a tiny snap toward the upper boundary so that values an FP
// rounding error below an integer do not fall into the previous pixel.
inline std::int64_t snapped_floor(double v) {
    auto f = static_cast<std::int64_t>(std::floor(v));
    if (v - static_cast<double>(f) > 1.0 - 1e-7) ++f;
    return f;
}
}  // namespace detail

// x = floor((lon_max - lon) * ppd), y = floor((lat_max - lat) * ppd), with the
// result clamped into the raster so the exact minimum bound maps to the last
// valid index.
inline PixelCoord geo_to_pixel(const MosaicHeader& hdr, const GeoPoint& p) {
    if (p.lon_deg < hdr.lon_min_deg || p.lon_deg > hdr.lon_max_deg)
        throw validation_error("geo_to_pixel: longitude " + std::to_string(p.lon_deg) + " outside [" +
                               std::to_string(hdr.lon_min_deg) + ", " + std::to_string(hdr.lon_max_deg) + "]");
    if (p.lat_deg < hdr.lat_min_deg || p.lat_deg > hdr.lat_max_deg)
        throw validation_error("geo_to_pixel: latitude " + std::to_string(p.lat_deg) + " outside [" +
                               std::to_string(hdr.lat_min_deg) + ", " + std::to_string(hdr.lat_max_deg) + "]");
    PixelCoord c;
    c.x = detail::snapped_floor((hdr.lon_max_deg - p.lon_deg) * hdr.px_per_degree);
    c.y = detail::snapped_floor((hdr.lat_max_deg - p.lat_deg) * hdr.px_per_degree);
    c.x = std::min(std::max<std::int64_t>(c.x, 0), hdr.width_px - 1);
    c.y = std::min(std::max<std::int64_t>(c.y, 0), hdr.height_px - 1);
    return c;
}

// Geodetic location of the pixel's top-left corner.
inline GeoPoint pixel_to_geo(const MosaicHeader& hdr, std::int64_t x, std::int64_t y) {
    if (x < 0 || x >= hdr.width_px)
        throw validation_error("pixel_to_geo: x " + std::to_string(x) + " outside raster width " +
                               std::to_string(hdr.width_px));
    if (y < 0 || y >= hdr.height_px)
        throw validation_error("pixel_to_geo: y " + std::to_string(y) + " outside raster height " +
                               std::to_string(hdr.height_px));
    GeoPoint p;
    p.lon_deg = hdr.lon_max_deg - static_cast<double>(x) / hdr.px_per_degree;
    p.lat_deg = hdr.lat_max_deg - static_cast<double>(y) / hdr.px_per_degree;
    return p;
}

// ---------------------------------------------------------------------------
// JSON sidecar: <mosaic>.geo.json
// ---------------------------------------------------------------------------

inline std::string default_sidecar_path(const std::string& mosaic_path) {
    return mosaic_path + ".geo.json";
}

inline void save_geo_sidecar(const MosaicHeader& hdr, const std::string& path) {
    nlohmann::json j = {
        {"width_px", hdr.width_px},       {"height_px", hdr.height_px},
        {"lon_max_deg", hdr.lon_max_deg}, {"lon_min_deg", hdr.lon_min_deg},
        {"lat_max_deg", hdr.lat_max_deg}, {"lat_min_deg", hdr.lat_min_deg},
        {"px_per_degree", hdr.px_per_degree}, {"bit_depth", hdr.bit_depth},
    };
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw io_error("cannot create sidecar: " + path);
    f << j.dump(2) << "\n";
    if (!f) throw io_error("short write: " + path);
}

inline MosaicHeader load_geo_sidecar(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot open sidecar: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw format_error("sidecar " + path + ": " + e.what());
    }
    MosaicHeader hdr;
    try {
        hdr.width_px = j.at("width_px").get<std::int64_t>();
        hdr.height_px = j.at("height_px").get<std::int64_t>();
        hdr.lon_max_deg = j.at("lon_max_deg").get<double>();
        hdr.lon_min_deg = j.at("lon_min_deg").get<double>();
        hdr.lat_max_deg = j.at("lat_max_deg").get<double>();
        hdr.lat_min_deg = j.at("lat_min_deg").get<double>();
        hdr.px_per_degree = j.at("px_per_degree").get<double>();
        hdr.bit_depth = j.at("bit_depth").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw format_error("sidecar " + path + ": " + e.what());
    }
    hdr.validate();
    return hdr;
}

}  // namespace lunar
