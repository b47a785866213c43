#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lunar/common.hpp"
#include "lunar/image.hpp"
#include "lunar/rng.hpp"

namespace lunar {

// Boolean corruption mask; true = missing pixel.
struct StripeMask {
    int w = 0;
    int h = 0;
    std::vector<std::uint8_t> bits;  // row-major, 0/1

    StripeMask() = default;
    StripeMask(int width, int height) : w(width), h(height) {
        if (width < 1 || height < 1)
            throw validation_error("StripeMask dimensions must be positive");
        bits.assign(static_cast<std::size_t>(w) * h, 0);
    }

    bool test(int x, int y) const { return bits[static_cast<std::size_t>(y) * w + x] != 0; }
    void set(int x, int y, bool v) { bits[static_cast<std::size_t>(y) * w + x] = v ? 1 : 0; }

    std::size_t count_true() const {
        std::size_t n = 0;
        for (auto b : bits) n += b;
        return n;
    }
    bool any() const {
        for (auto b : bits)
            if (b) return true;
        return false;
    }
};

inline double mask_coverage(const StripeMask& mask) {
    if (mask.bits.empty()) return 0.0;
    return static_cast<double>(mask.count_true()) / static_cast<double>(mask.bits.size());
}

// One vertical stripe band: a column range with a row interval stored as
// fractions of the image height, so templates survive resizing.
struct StripeRun {
    std::int64_t col_offset = 0;
    std::int64_t width_px = 1;
    double row_start_frac = 0.0;
    double row_end_frac = 1.0;
};

struct StripeTemplate {
    std::vector<StripeRun> runs;

    bool empty() const { return runs.empty(); }

    // Total column extent needed to place the template (offsets normalized to 0).
    std::int64_t extent_cols() const {
        std::int64_t e = 0;
        for (const auto& r : runs) e = std::max(e, r.col_offset + r.width_px);
        return e;
    }
};

struct DetectConfig {
    double zero_thresh = 1.0 / 255.0;   // pixel counts as dark iff value <= this
    double col_frac_thresh = 0.5;       // vertical run must cover >= this fraction of the height
};

// A pixel is masked iff it is dark and lies inside a maximal vertical run of
// dark pixels whose length is at least col_frac_thresh * h within its column.
inline StripeMask detect_stripes(const GrayImage& img, const DetectConfig& cfg = {}) {
    if (img.empty()) throw validation_error("detect_stripes: empty image");
    StripeMask mask(img.w, img.h);
    const double min_len = cfg.col_frac_thresh * img.h;
    for (int x = 0; x < img.w; ++x) {
        int y = 0;
        while (y < img.h) {
            if (img.at(x, y) <= cfg.zero_thresh) {
                int y1 = y;
                while (y1 < img.h && img.at(x, y1) <= cfg.zero_thresh) ++y1;
                if (static_cast<double>(y1 - y) >= min_len)
                    for (int yy = y; yy < y1; ++yy) mask.set(x, yy, true);
                y = y1;
            } else {
                ++y;
            }
        }
    }
    return mask;
}

// Distills a detected mask into a reusable template: one run per maximal group
// of adjacent columns sharing the same row interval. A column's interval is
// the bounding span of its masked pixels.
inline StripeTemplate extract_template(const StripeMask& mask) {
    struct ColSpan {
        int x;
        int y0;
        int y1;  // exclusive
    };
    std::vector<ColSpan> cols;
    for (int x = 0; x < mask.w; ++x) {
        int first = -1, last = -1;
        for (int y = 0; y < mask.h; ++y) {
            if (mask.test(x, y)) {
                if (first < 0) first = y;
                last = y;
            }
        }
        if (first >= 0) cols.push_back({x, first, last + 1});
    }
    if (cols.empty()) throw validation_error("extract_template: no stripes found");

    StripeTemplate tpl;
    const std::int64_t min_col = cols.front().x;
    std::size_t i = 0;
    while (i < cols.size()) {
        std::size_t j = i + 1;
        while (j < cols.size() && cols[j].x == cols[j - 1].x + 1 && cols[j].y0 == cols[i].y0 &&
               cols[j].y1 == cols[i].y1)
            ++j;
        StripeRun run;
        run.col_offset = cols[i].x - min_col;
        run.width_px = static_cast<std::int64_t>(j - i);
        run.row_start_frac = static_cast<double>(cols[i].y0) / mask.h;
        run.row_end_frac = static_cast<double>(cols[i].y1) / mask.h;
        tpl.runs.push_back(run);
        i = j;
    }
    return tpl;
}

namespace detail {
inline void run_row_range(const StripeRun& run, int h, int& y0, int& y1) {
    y0 = static_cast<int>(std::llround(run.row_start_frac * h));
    y1 = static_cast<int>(std::llround(run.row_end_frac * h));
    y0 = std::clamp(y0, 0, h);
    y1 = std::clamp(y1, 0, h);
}
}  // namespace detail

// Fraction of a w*h image the template would cover when rendered.
inline double template_coverage(const StripeTemplate& tpl, int w, int h) {
    if (w < 1 || h < 1) throw validation_error("template_coverage: dims must be positive");
    std::int64_t covered = 0;
    for (const auto& run : tpl.runs) {
        int y0, y1;
        detail::run_row_range(run, h, y0, y1);
        if (y1 > y0) covered += run.width_px * (y1 - y0);
    }
    return static_cast<double>(covered) / (static_cast<double>(w) * h);
}

struct SuperimposeResult {
    GrayImage corrupted;
    StripeMask mask;
};

// Renders the template at a horizontal placement drawn uniformly from the
// valid offsets (deterministic in `seed`). Masked pixels are set to exactly 0;
// everything else is bit-identical to `clean`.
inline SuperimposeResult superimpose(const GrayImage& clean, const StripeTemplate& tpl, std::uint64_t seed) {
    if (clean.empty()) throw validation_error("superimpose: empty clean image");
    SuperimposeResult res{clean, StripeMask(clean.w, clean.h)};
    if (tpl.empty()) return res;

    const std::int64_t extent = tpl.extent_cols();
    if (extent > clean.w)
        throw validation_error("superimpose: template spans " + std::to_string(extent) +
                               " columns but image is only " + std::to_string(clean.w) + " wide");
    SplitMix64 rng(seed);
    const auto placement = static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(clean.w - extent + 1)));

    for (const auto& run : tpl.runs) {
        int y0, y1;
        detail::run_row_range(run, clean.h, y0, y1);
        const auto x0 = static_cast<int>(placement + run.col_offset);
        const auto x1 = static_cast<int>(x0 + run.width_px);
        for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) {
                res.corrupted.at(x, y) = 0.0;
                res.mask.set(x, y, true);
            }
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Template JSON serialization: {"version":1, "runs":[{col_offset, width_px,
// row_start_frac, row_end_frac}, ...]}
// ---------------------------------------------------------------------------

inline nlohmann::json template_to_json(const StripeTemplate& tpl) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : tpl.runs) {
        runs.push_back({{"col_offset", r.col_offset},
                        {"width_px", r.width_px},
                        {"row_start_frac", r.row_start_frac},
                        {"row_end_frac", r.row_end_frac}});
    }
    return {{"version", 1}, {"runs", runs}};
}

inline StripeTemplate template_from_json(const nlohmann::json& j) {
    StripeTemplate tpl;
    try {
        for (const auto& rj : j.at("runs")) {
            StripeRun r;
            r.col_offset = rj.at("col_offset").get<std::int64_t>();
            r.width_px = rj.at("width_px").get<std::int64_t>();
            r.row_start_frac = rj.at("row_start_frac").get<double>();
            r.row_end_frac = rj.at("row_end_frac").get<double>();
            if (r.width_px < 1) throw format_error("stripe template: run width must be >= 1");
            if (!(r.row_end_frac > r.row_start_frac) || r.row_start_frac < 0.0 || r.row_end_frac > 1.0)
                throw format_error("stripe template: bad row fractions");
            tpl.runs.push_back(r);
        }
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("stripe template JSON: ") + e.what());
    }
    return tpl;
}

inline void save_template(const StripeTemplate& tpl, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw io_error("cannot create template file: " + path);
    f << template_to_json(tpl).dump(2) << "\n";
    if (!f) throw io_error("short write: " + path);
}

inline StripeTemplate load_template(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot open template file: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw format_error("template " + path + ": " + e.what());
    }
    return template_from_json(j);
}

// Accepts either a single template file or a directory of *.json templates
// (sorted by filename; the index in the returned vector is the template id).
inline std::vector<StripeTemplate> load_templates(const std::string& path) {
    namespace fs = std::filesystem;
    std::vector<StripeTemplate> out;
    if (fs::is_directory(path)) {
        std::vector<std::string> files;
        for (const auto& e : fs::directory_iterator(path))
            if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path().string());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) out.push_back(load_template(f));
    } else {
        out.push_back(load_template(path));
    }
    if (out.empty()) throw validation_error("no stripe templates found at " + path);
    return out;
}

}  // namespace lunar
