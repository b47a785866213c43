#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lunar/common.hpp"
#include "lunar/image.hpp"
#include "lunar/image_io.hpp"
#include "lunar/rng.hpp"
#include "lunar/stripes.hpp"
#include "lunar/tensor.hpp"

namespace lunar {

enum class Split { train, val, test };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

inline Split split_from_name(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw validation_error("unknown split '" + s + "' (expected train|val|test)");
}

// One clean/corrupted/mask triple. Paths are relative to the manifest's
// directory; `seed` is the per-sample seed that re-derives the whole triple.
struct SamplePair {
    std::int64_t id = 0;
    Split split = Split::train;
    std::string source_path;  // original clean image the crop came from
    std::string clean_path;
    std::string corrupted_path;
    std::string mask_path;
    std::int64_t template_id = 0;
    std::uint64_t seed = 0;
};

struct DatasetManifest {
    int version = 1;
    int crop_size = 64;
    std::uint64_t master_seed = 0;
    std::int64_t n_train = 0;
    std::int64_t n_val = 0;
    std::int64_t n_test = 0;
    std::string template_path;  // as given to build_dataset
    // Per-split source pools in assignment order; sample seeds index into
    // these, so verification replays the exact same draws.
    std::array<std::vector<std::string>, 3> split_sources;
    std::vector<SamplePair> samples;
    std::string root_dir;  // directory of the manifest file; not serialized

    std::vector<std::int64_t> split_indices(Split s) const {
        std::vector<std::int64_t> idx;
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(samples.size()); ++i)
            if (samples[static_cast<std::size_t>(i)].split == s) idx.push_back(i);
        return idx;
    }

    std::string resolve(const std::string& rel) const {
        return (std::filesystem::path(root_dir) / rel).string();
    }
};

struct BuildConfig {
    int crop_size = 64;          // desk-scale default; paper scale 256 via config
    std::int64_t n_train = 200;
    std::int64_t n_val = 40;
    std::int64_t n_test = 40;
    std::uint64_t master_seed = 0;
    double max_coverage = 0.02;
};

namespace detail {

// Internal seed-domain tags so different draws never share a stream.
constexpr std::uint64_t kSeedSplitShuffle = 0x5350u;   // source split assignment
constexpr std::uint64_t kSeedSampleBase = 0x53414du;   // per-sample streams

inline std::vector<std::string> list_clean_sources(const std::string& clean_dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(clean_dir)) throw io_error("clean dir not found: " + clean_dir);
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(clean_dir)) {
        if (!e.is_regular_file()) continue;
        const auto ext = e.path().extension().string();
        if (ext == ".png" || ext == ".pgm" || ext == ".PNG" || ext == ".PGM") files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw validation_error("no clean images (*.png, *.pgm) in " + clean_dir);
    return files;
}

// Proportional allocation of sources across the nonempty splits; every split
// that requests samples gets at least one source.
inline std::array<std::int64_t, 3> allocate_sources(std::int64_t n_sources,
                                                    const std::array<std::int64_t, 3>& requested) {
    std::array<std::int64_t, 3> alloc{0, 0, 0};
    const double total = static_cast<double>(requested[0] + requested[1] + requested[2]);
    std::int64_t active = 0;
    for (auto r : requested) active += (r > 0) ? 1 : 0;
    if (n_sources < active)
        throw validation_error("need at least " + std::to_string(active) +
                               " clean sources for the requested splits, have " + std::to_string(n_sources));
    std::int64_t used = 0;
    for (int s = 0; s < 3; ++s) {
        if (requested[s] <= 0) continue;
        alloc[s] = std::max<std::int64_t>(
            1, static_cast<std::int64_t>(static_cast<double>(n_sources) * requested[s] / total));
        used += alloc[s];
    }
    // Settle rounding drift deterministically, biggest split first.
    while (used > n_sources) {
        int big = -1;
        for (int s = 0; s < 3; ++s)
            if (alloc[s] > 1 && (big < 0 || alloc[s] > alloc[big])) big = s;
        --alloc[big];
        --used;
    }
    while (used < n_sources) {
        int big = -1;
        for (int s = 0; s < 3; ++s)
            if (requested[s] > 0 && (big < 0 || alloc[s] > alloc[big])) big = s;
        ++alloc[big];
        ++used;
    }
    return alloc;
}

}  // namespace detail

// Deterministically renders one sample from its source crop, template and
// per-sample seed. Shared by build and verify so they cannot drift apart.
struct RenderedSample {
    GrayImage clean;
    GrayImage corrupted;
    StripeMask mask;
    std::size_t source_index = 0;
    std::size_t template_index = 0;
};

inline RenderedSample render_sample(const std::vector<GrayImage>& split_sources,
                                    const std::vector<StripeTemplate>& templates, int crop_size,
                                    std::uint64_t sample_seed) {
    SplitMix64 rng(sample_seed);
    RenderedSample out;
    out.source_index = static_cast<std::size_t>(rng.next_below(split_sources.size()));
    out.template_index = static_cast<std::size_t>(rng.next_below(templates.size()));
    const std::uint64_t placement_seed = rng.next();
    out.clean = resize_bilinear(split_sources[out.source_index], crop_size, crop_size);
    auto res = superimpose(out.clean, templates[out.template_index], placement_seed);
    out.corrupted = std::move(res.corrupted);
    out.mask = std::move(res.mask);
    return out;
}

inline GrayImage mask_to_image(const StripeMask& mask) {
    GrayImage img(mask.w, mask.h);
    for (std::size_t i = 0; i < mask.bits.size(); ++i) img.pixels[i] = mask.bits[i] ? 1.0 : 0.0;
    return img;
}

inline StripeMask mask_from_image(const GrayImage& img) {
    StripeMask mask(img.w, img.h);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) mask.bits[i] = img.pixels[i] > 0.5 ? 1 : 0;
    return mask;
}

// ---------------------------------------------------------------------------
// Manifest JSON
// ---------------------------------------------------------------------------

inline void save_manifest(const DatasetManifest& man, const std::string& path) {
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& s : man.samples) {
        samples.push_back({{"id", s.id},
                           {"split", split_name(s.split)},
                           {"source_path", s.source_path},
                           {"clean_path", s.clean_path},
                           {"corrupted_path", s.corrupted_path},
                           {"mask_path", s.mask_path},
                           {"template_id", s.template_id},
                           {"seed", s.seed}});
    }
    const nlohmann::json j = {{"version", man.version},
                              {"crop_size", man.crop_size},
                              {"master_seed", man.master_seed},
                              {"counts", {{"train", man.n_train}, {"val", man.n_val}, {"test", man.n_test}}},
                              {"template_path", man.template_path},
                              {"sources",
                               {{"train", man.split_sources[0]},
                                {"val", man.split_sources[1]},
                                {"test", man.split_sources[2]}}},
                              {"samples", samples}};
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw io_error("cannot create manifest: " + path);
    f << j.dump(2) << "\n";
    if (!f) throw io_error("short write: " + path);
}

inline DatasetManifest load_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot open manifest: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw format_error("manifest " + path + ": " + e.what());
    }
    DatasetManifest man;
    try {
        man.version = j.at("version").get<int>();
        man.crop_size = j.at("crop_size").get<int>();
        man.master_seed = j.at("master_seed").get<std::uint64_t>();
        man.n_train = j.at("counts").at("train").get<std::int64_t>();
        man.n_val = j.at("counts").at("val").get<std::int64_t>();
        man.n_test = j.at("counts").at("test").get<std::int64_t>();
        man.template_path = j.at("template_path").get<std::string>();
        man.split_sources[0] = j.at("sources").at("train").get<std::vector<std::string>>();
        man.split_sources[1] = j.at("sources").at("val").get<std::vector<std::string>>();
        man.split_sources[2] = j.at("sources").at("test").get<std::vector<std::string>>();
        for (const auto& js : j.at("samples")) {
            SamplePair s;
            s.id = js.at("id").get<std::int64_t>();
            s.split = split_from_name(js.at("split").get<std::string>());
            s.source_path = js.at("source_path").get<std::string>();
            s.clean_path = js.at("clean_path").get<std::string>();
            s.corrupted_path = js.at("corrupted_path").get<std::string>();
            s.mask_path = js.at("mask_path").get<std::string>();
            s.template_id = js.at("template_id").get<std::int64_t>();
            s.seed = js.at("seed").get<std::uint64_t>();
            man.samples.push_back(s);
        }
    } catch (const nlohmann::json::exception& e) {
        throw format_error("manifest " + path + ": " + e.what());
    }
    man.root_dir = std::filesystem::path(path).parent_path().string();

    // Split tags must partition the samples with the declared counts.
    std::int64_t c_train = 0, c_val = 0, c_test = 0;
    for (const auto& s : man.samples) {
        if (s.split == Split::train) ++c_train;
        else if (s.split == Split::val) ++c_val;
        else ++c_test;
    }
    if (c_train != man.n_train || c_val != man.n_val || c_test != man.n_test)
        throw format_error("manifest " + path + ": split counts do not match sample tags");
    return man;
}

// ---------------------------------------------------------------------------
// build_dataset
// ---------------------------------------------------------------------------

// Builds sample triples under out_dir (clean/, corrupted/, masks/) plus
// manifest.json. Clean sources are split source-disjointly across
// train/val/test by a seeded shuffle; every sample is a pure function of
// (sources, templates, config, master_seed).
inline DatasetManifest build_dataset(const std::string& clean_dir, const std::string& template_path,
                                     const BuildConfig& cfg, const std::string& out_dir) {
    namespace fs = std::filesystem;
    if (cfg.crop_size < 1) throw validation_error("build_dataset: crop_size must be positive");
    if (cfg.n_train < 1) throw validation_error("build_dataset: n_train must be >= 1");
    if (cfg.n_val < 0 || cfg.n_test < 0)
        throw validation_error("build_dataset: n_val/n_test must be >= 0");

    const auto source_files = detail::list_clean_sources(clean_dir);
    const auto templates = load_templates(template_path);
    for (std::size_t t = 0; t < templates.size(); ++t) {
        const double cov = template_coverage(templates[t], cfg.crop_size, cfg.crop_size);
        if (cov > cfg.max_coverage)
            throw validation_error("template " + std::to_string(t) + " covers " + std::to_string(cov) +
                                   " of a " + std::to_string(cfg.crop_size) + "px crop, exceeding max_coverage " +
                                   std::to_string(cfg.max_coverage));
    }

    // Source-disjoint split assignment.
    std::vector<std::size_t> order(source_files.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    SplitMix64 shuffle_rng(mix64(cfg.master_seed, detail::kSeedSplitShuffle));
    shuffle_rng.shuffle(order);
    const auto alloc = detail::allocate_sources(static_cast<std::int64_t>(source_files.size()),
                                                {cfg.n_train, cfg.n_val, cfg.n_test});
    std::array<std::vector<std::string>, 3> split_files;
    std::size_t cursor = 0;
    for (int s = 0; s < 3; ++s)
        for (std::int64_t k = 0; k < alloc[static_cast<std::size_t>(s)]; ++k)
            split_files[static_cast<std::size_t>(s)].push_back(source_files[order[cursor++]]);

    std::array<std::vector<GrayImage>, 3> split_sources;
    for (int s = 0; s < 3; ++s)
        for (const auto& f : split_files[static_cast<std::size_t>(s)])
            split_sources[static_cast<std::size_t>(s)].push_back(read_image(f));

    fs::create_directories(fs::path(out_dir) / "clean");
    fs::create_directories(fs::path(out_dir) / "corrupted");
    fs::create_directories(fs::path(out_dir) / "masks");

    DatasetManifest man;
    man.crop_size = cfg.crop_size;
    man.master_seed = cfg.master_seed;
    man.n_train = cfg.n_train;
    man.n_val = cfg.n_val;
    man.n_test = cfg.n_test;
    man.template_path = template_path;
    man.split_sources = split_files;
    man.root_dir = out_dir;

    const std::array<std::int64_t, 3> counts{cfg.n_train, cfg.n_val, cfg.n_test};
    std::int64_t id = 0;
    for (int s = 0; s < 3; ++s) {
        for (std::int64_t k = 0; k < counts[static_cast<std::size_t>(s)]; ++k, ++id) {
            const std::uint64_t sample_seed = mix64(cfg.master_seed, detail::kSeedSampleBase + static_cast<std::uint64_t>(id));
            const auto rendered =
                render_sample(split_sources[static_cast<std::size_t>(s)], templates, cfg.crop_size, sample_seed);

            char name[32];
            std::snprintf(name, sizeof(name), "sample_%06lld.png", static_cast<long long>(id));
            SamplePair sp;
            sp.id = id;
            sp.split = static_cast<Split>(s);
            sp.source_path = split_files[static_cast<std::size_t>(s)][rendered.source_index];
            sp.clean_path = (fs::path("clean") / name).string();
            sp.corrupted_path = (fs::path("corrupted") / name).string();
            sp.mask_path = (fs::path("masks") / name).string();
            sp.template_id = static_cast<std::int64_t>(rendered.template_index);
            sp.seed = sample_seed;

            write_png(rendered.clean, man.resolve(sp.clean_path));
            write_png(rendered.corrupted, man.resolve(sp.corrupted_path));
            write_png(mask_to_image(rendered.mask), man.resolve(sp.mask_path));
            man.samples.push_back(std::move(sp));
        }
    }

    save_manifest(man, (fs::path(out_dir) / "manifest.json").string());
    return man;
}

// ---------------------------------------------------------------------------
// load_batch
// ---------------------------------------------------------------------------

struct Batch {
    Tensor corrupted;  // [N,1,H,W]
    Tensor clean;      // [N,1,H,W]
    Tensor masks;      // [N,1,H,W], values {0,1}
};

inline Batch load_batch(const DatasetManifest& man, Split split, const std::vector<std::int64_t>& indices) {
    const auto split_idx = man.split_indices(split);
    if (indices.empty()) throw validation_error("load_batch: empty index list");
    const std::int64_t N = static_cast<std::int64_t>(indices.size());
    const std::int64_t HW = man.crop_size;

    Batch batch{Tensor::zeros4(N, 1, HW, HW), Tensor::zeros4(N, 1, HW, HW), Tensor::zeros4(N, 1, HW, HW)};
    for (std::int64_t row = 0; row < N; ++row) {
        const std::int64_t i = indices[static_cast<std::size_t>(row)];
        if (i < 0 || i >= static_cast<std::int64_t>(split_idx.size()))
            throw validation_error("load_batch: index " + std::to_string(i) + " out of range for split " +
                                   split_name(split));
        const auto& sp = man.samples[static_cast<std::size_t>(split_idx[static_cast<std::size_t>(i)])];

        GrayImage corrupted, clean, mask_img;
        try {
            corrupted = read_image(man.resolve(sp.corrupted_path));
            clean = read_image(man.resolve(sp.clean_path));
            mask_img = read_image(man.resolve(sp.mask_path));
        } catch (const io_error& e) {
            throw io_error("sample " + std::to_string(sp.id) + ": " + e.what());
        }
        if (corrupted.w != HW || corrupted.h != HW || !corrupted.same_dims(clean) ||
            !corrupted.same_dims(mask_img))
            throw validation_error("sample " + std::to_string(sp.id) + ": raster dimensions disagree");

        // Pairing spot-check: corrupted must equal clean off-mask, 0 on-mask.
        for (std::size_t k = 0; k < corrupted.pixels.size(); ++k) {
            const bool masked = mask_img.pixels[k] > 0.5;
            const bool ok = masked ? corrupted.pixels[k] == 0.0 : corrupted.pixels[k] == clean.pixels[k];
            if (!ok)
                throw validation_error("sample " + std::to_string(sp.id) +
                                       ": corrupted/clean pairing violated at pixel " + std::to_string(k));
        }

        std::copy(corrupted.pixels.begin(), corrupted.pixels.end(), batch.corrupted.plane(row, 0));
        std::copy(clean.pixels.begin(), clean.pixels.end(), batch.clean.plane(row, 0));
        for (std::size_t k = 0; k < mask_img.pixels.size(); ++k)
            batch.masks.plane(row, 0)[k] = mask_img.pixels[k] > 0.5 ? 1.0 : 0.0;
    }
    return batch;
}

// ---------------------------------------------------------------------------
// verify_manifest
// ---------------------------------------------------------------------------

struct VerifyReport {
    std::int64_t n_train = 0;
    std::int64_t n_val = 0;
    std::int64_t n_test = 0;
    double mean_mask_coverage = 0.0;
    std::vector<std::string> discrepancies;

    bool clean() const { return discrepancies.empty(); }
};

// Re-derives every sample from (source pool, template file, per-sample seed)
// and confirms byte equality with the stored files. Discrepancies are report
// entries, never exceptions.
inline VerifyReport verify_manifest(const DatasetManifest& man) {
    VerifyReport rep;
    std::vector<StripeTemplate> templates;
    std::array<std::vector<GrayImage>, 3> pools;
    try {
        templates = load_templates(man.template_path);
        for (int s = 0; s < 3; ++s)
            for (const auto& f : man.split_sources[static_cast<std::size_t>(s)])
                pools[static_cast<std::size_t>(s)].push_back(read_image(f));
    } catch (const error& e) {
        rep.discrepancies.push_back(std::string("inputs: ") + e.what());
        return rep;
    }

    // Source-disjointness across splits.
    for (int a = 0; a < 3; ++a) {
        for (int b = a + 1; b < 3; ++b) {
            for (const auto& f : man.split_sources[static_cast<std::size_t>(a)]) {
                const auto& other = man.split_sources[static_cast<std::size_t>(b)];
                if (std::find(other.begin(), other.end(), f) != other.end())
                    rep.discrepancies.push_back("source " + f + " appears in both " +
                                                split_name(static_cast<Split>(a)) + " and " +
                                                split_name(static_cast<Split>(b)));
            }
        }
    }

    double coverage_sum = 0.0;
    std::int64_t coverage_n = 0;
    for (const auto& sp : man.samples) {
        switch (sp.split) {
            case Split::train: ++rep.n_train; break;
            case Split::val: ++rep.n_val; break;
            case Split::test: ++rep.n_test; break;
        }
        try {
            const auto& pool = pools[static_cast<std::size_t>(sp.split)];
            const auto& pool_files = man.split_sources[static_cast<std::size_t>(sp.split)];
            const auto rendered = render_sample(pool, templates, man.crop_size, sp.seed);

            if (pool_files[rendered.source_index] != sp.source_path) {
                rep.discrepancies.push_back("sample " + std::to_string(sp.id) + ": source path mismatch");
                continue;
            }
            if (static_cast<std::int64_t>(rendered.template_index) != sp.template_id) {
                rep.discrepancies.push_back("sample " + std::to_string(sp.id) + ": template id mismatch");
                continue;
            }

            const auto check = [&](const std::vector<unsigned char>& want, const std::string& rel) {
                const auto got = read_file_bytes(man.resolve(rel));
                if (got != want)
                    rep.discrepancies.push_back("sample " + std::to_string(sp.id) + ": " + rel +
                                                " differs from re-derived bytes");
            };
            check(encode_png(rendered.clean), sp.clean_path);
            check(encode_png(rendered.corrupted), sp.corrupted_path);
            check(encode_png(mask_to_image(rendered.mask)), sp.mask_path);

            coverage_sum += mask_coverage(rendered.mask);
            ++coverage_n;
        } catch (const error& e) {
            rep.discrepancies.push_back("sample " + std::to_string(sp.id) + ": " + e.what());
        }
    }
    if (coverage_n > 0) rep.mean_mask_coverage = coverage_sum / static_cast<double>(coverage_n);
    return rep;
}

}  // namespace lunar
