#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lunar/checkpoint.hpp"
#include "lunar/common.hpp"
#include "lunar/dataset.hpp"
#include "lunar/metrics.hpp"
#include "lunar/restorer.hpp"
#include "lunar/triptych.hpp"

namespace lunar {

struct SampleEval {
    std::int64_t id = 0;
    double psnr_corrupted_db = 0.0;
    double psnr_restored_db = 0.0;
    double masked_psnr_restored_db = 0.0;  // NaN when the mask is empty
    double mse_restored = 0.0;
};

struct EvalReport {
    std::vector<SampleEval> records;
    double mean_psnr_corrupted = 0.0;
    double mean_psnr_restored = 0.0;
    double median_psnr_corrupted = 0.0;
    double median_psnr_restored = 0.0;
    double mean_masked_psnr_restored = 0.0;
    double mean_mse_restored = 0.0;
    double fraction_improved = 0.0;  // psnr_restored strictly above psnr_corrupted
};

namespace detail {

inline double median_of(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double mean_of(const std::vector<double>& v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
}

}  // namespace detail

// Aggregates are a pure function of the records; recomputed on demand so the
// invariant "aggregates recomputable from records" holds by construction.
inline void recompute_aggregates(EvalReport& rep) {
    std::vector<double> pc, pr, mm, ms;
    std::int64_t improved = 0;
    for (const auto& r : rep.records) {
        pc.push_back(r.psnr_corrupted_db);
        pr.push_back(r.psnr_restored_db);
        ms.push_back(r.mse_restored);
        if (!std::isnan(r.masked_psnr_restored_db)) mm.push_back(r.masked_psnr_restored_db);
        if (r.psnr_restored_db > r.psnr_corrupted_db) ++improved;
    }
    rep.mean_psnr_corrupted = detail::mean_of(pc);
    rep.mean_psnr_restored = detail::mean_of(pr);
    rep.median_psnr_corrupted = detail::median_of(pc);
    rep.median_psnr_restored = detail::median_of(pr);
    rep.mean_masked_psnr_restored = detail::mean_of(mm);
    rep.mean_mse_restored = detail::mean_of(ms);
    rep.fraction_improved =
        rep.records.empty() ? 0.0 : static_cast<double>(improved) / static_cast<double>(rep.records.size());
}

// Restoration hook: (corrupted, mask) -> restored. Lets tests run the
// evaluator with stub models.
using RestoreFn = std::function<GrayImage(const GrayImage&, const StripeMask&)>;

struct EvalOptions {
    std::string triptych_dir;  // render per-sample triptychs here when nonempty
};

inline EvalReport evaluate_with(const RestoreFn& restore, const DatasetManifest& man, Split split,
                                const EvalOptions& opts = {}) {
    const auto idx = man.split_indices(split);
    if (idx.empty())
        throw validation_error(std::string("evaluate: split ") + split_name(split) + " is empty");
    if (!opts.triptych_dir.empty()) std::filesystem::create_directories(opts.triptych_dir);

    EvalReport rep;
    for (const auto i : idx) {
        const auto& sp = man.samples[static_cast<std::size_t>(i)];
        GrayImage corrupted, clean, mask_img;
        try {
            corrupted = read_image(man.resolve(sp.corrupted_path));
            clean = read_image(man.resolve(sp.clean_path));
            mask_img = read_image(man.resolve(sp.mask_path));
        } catch (const io_error& e) {
            throw io_error("sample " + std::to_string(sp.id) + ": " + e.what());
        }
        const StripeMask mask = mask_from_image(mask_img);
        const GrayImage restored = restore(corrupted, mask);

        SampleEval rec;
        rec.id = sp.id;
        rec.psnr_corrupted_db = psnr(clean, corrupted);
        rec.psnr_restored_db = psnr(clean, restored);
        rec.mse_restored = mse(clean, restored);
        rec.masked_psnr_restored_db = mask.any() ? masked_psnr(clean, restored, mask)
                                                 : std::numeric_limits<double>::quiet_NaN();
        rep.records.push_back(rec);

        if (!opts.triptych_dir.empty()) {
            char name[40];
            std::snprintf(name, sizeof(name), "triptych_%06lld.png", static_cast<long long>(sp.id));
            render_triptych(corrupted, restored, clean, rec.psnr_corrupted_db, rec.psnr_restored_db,
                            (std::filesystem::path(opts.triptych_dir) / name).string());
        }
    }
    recompute_aggregates(rep);
    return rep;
}

inline EvalReport evaluate(const Checkpoint& ckpt, const DatasetManifest& man, Split split,
                           const EvalOptions& opts = {}) {
    return evaluate_with(
        [&](const GrayImage& corrupted, const StripeMask& mask) { return restore_crop(ckpt, corrupted, mask); },
        man, split, opts);
}

// ---------------------------------------------------------------------------
// Report serialization. JSON cannot carry inf/nan numbers, so non-finite
// metric values are encoded as strings ("inf", "-inf", "nan"); the CSV uses
// the same spellings.
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json metric_to_json(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

inline std::string metric_to_string(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

inline nlohmann::json report_to_json(const EvalReport& rep) {
    nlohmann::json records = nlohmann::json::array();
    for (const auto& r : rep.records) {
        records.push_back({{"id", r.id},
                           {"psnr_corrupted_db", detail::metric_to_json(r.psnr_corrupted_db)},
                           {"psnr_restored_db", detail::metric_to_json(r.psnr_restored_db)},
                           {"masked_psnr_restored_db", detail::metric_to_json(r.masked_psnr_restored_db)},
                           {"mse_restored", detail::metric_to_json(r.mse_restored)}});
    }
    return {{"records", records},
            {"aggregates",
             {{"mean_psnr_corrupted", detail::metric_to_json(rep.mean_psnr_corrupted)},
              {"mean_psnr_restored", detail::metric_to_json(rep.mean_psnr_restored)},
              {"median_psnr_corrupted", detail::metric_to_json(rep.median_psnr_corrupted)},
              {"median_psnr_restored", detail::metric_to_json(rep.median_psnr_restored)},
              {"mean_masked_psnr_restored", detail::metric_to_json(rep.mean_masked_psnr_restored)},
              {"mean_mse_restored", detail::metric_to_json(rep.mean_mse_restored)},
              {"fraction_improved", detail::metric_to_json(rep.fraction_improved)}}}};
}

inline void save_report_json(const EvalReport& rep, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw io_error("cannot create report: " + path);
    f << report_to_json(rep).dump(2) << "\n";
    if (!f) throw io_error("short write: " + path);
}

inline void save_report_csv(const EvalReport& rep, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw io_error("cannot create report CSV: " + path);
    f << "id,psnr_corrupted_db,psnr_restored_db,masked_psnr_restored_db,mse_restored\n";
    for (const auto& r : rep.records) {
        f << r.id << "," << detail::metric_to_string(r.psnr_corrupted_db) << ","
          << detail::metric_to_string(r.psnr_restored_db) << ","
          << detail::metric_to_string(r.masked_psnr_restored_db) << ","
          << detail::metric_to_string(r.mse_restored) << "\n";
    }
    if (!f) throw io_error("short write: " + path);
}

}  // namespace lunar
