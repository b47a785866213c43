// lunar-restore: command-line front end for the lunar surface restoration
// pipeline. Subcommands: crop, detect, synth, train, eval, restore.
//
// Exit codes: 0 ok, 1 I/O error, 2 validation error, 3 numeric failure.
// Every run writes a run-record JSON (resolved config, seeds, input hashes)
// beside its outputs.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lunar/lunar.hpp"

namespace fs = std::filesystem;

namespace {

struct CropArgs {
    std::string mosaic, geo_json, out;
    double lon = 0.0, lat = 0.0;
    std::int64_t size_px = 256;
    std::int64_t resize = 0;  // 0 = keep native size
};

struct DetectArgs {
    std::string in, template_out;
    double zero_thresh = 1.0 / 255.0;
    double col_frac = 0.5;
};

struct SynthArgs {
    std::string clean_dir, templates, out_dir;
    std::int64_t n_train = 200, n_val = 40, n_test = 40;
    std::uint64_t seed = 0;
    int crop_size = 64;
    double max_coverage = 0.02;
};

struct TrainArgs {
    std::string manifest, out_dir, resume;
    int depth = 2;
    int base_channels = 8;
    double lr = 1e-3;
    int batch_size = 4;
    int epochs = 50;
    std::uint64_t seed = 0;
    int checkpoint_every = 10;
    bool masked_loss = false;
};

struct EvalArgs {
    std::string manifest, ckpt, split = "test", report, report_csv, triptych_dir;
    bool stub_identity = false;
    bool raw = false;
};

struct RestoreArgs {
    std::string mosaic, geo_json, ckpt, out;
    std::vector<double> rect;  // lon1 lat1 lon2 lat2
    double zero_thresh = 1.0 / 255.0;
    double col_frac = 0.5;
};

std::string sibling_record_path(const std::string& out_file) { return out_file + ".run.json"; }

int run_crop(const CropArgs& a) {
    const std::string sidecar = a.geo_json.empty() ? lunar::default_sidecar_path(a.mosaic) : a.geo_json;
    auto reader = lunar::MosaicReader::open(a.mosaic, sidecar);
    const auto& hdr = reader.header();
    if (a.size_px < 1 || a.size_px > std::min(hdr.width_px, hdr.height_px))
        throw lunar::validation_error("crop: --size-px must be in [1, " +
                                      std::to_string(std::min(hdr.width_px, hdr.height_px)) + "]");

    const auto center = lunar::geo_to_pixel(hdr, {a.lon, a.lat});
    lunar::PixelRect rect;
    rect.w = a.size_px;
    rect.h = a.size_px;
    // Center the window on the point, shifting inward at raster edges.
    rect.x0 = std::clamp<std::int64_t>(center.x - a.size_px / 2, 0, hdr.width_px - a.size_px);
    rect.y0 = std::clamp<std::int64_t>(center.y - a.size_px / 2, 0, hdr.height_px - a.size_px);

    lunar::GrayImage img = reader.read_window(rect);
    if (a.resize > 0) img = lunar::resize_bilinear(img, static_cast<int>(a.resize), static_cast<int>(a.resize));
    lunar::write_image(img, a.out);

    lunar::RunRecord rec;
    rec.subcommand = "crop";
    rec.args = {{"mosaic", a.mosaic}, {"geo_json", sidecar}, {"lon", a.lon},       {"lat", a.lat},
                {"size_px", a.size_px}, {"resize", a.resize}, {"out", a.out},
                {"rect", {{"x0", rect.x0}, {"y0", rect.y0}, {"w", rect.w}, {"h", rect.h}}}};
    rec.input_hashes[a.mosaic] = lunar::hash_file(a.mosaic);
    rec.input_hashes[sidecar] = lunar::hash_file(sidecar);
    rec.outputs = {a.out};
    lunar::save_run_record(rec, sibling_record_path(a.out));
    return 0;
}

int run_detect(const DetectArgs& a) {
    const auto img = lunar::read_image(a.in);
    lunar::DetectConfig cfg;
    cfg.zero_thresh = a.zero_thresh;
    cfg.col_frac_thresh = a.col_frac;
    const auto mask = lunar::detect_stripes(img, cfg);
    const auto tpl = lunar::extract_template(mask);  // throws if no stripes found
    lunar::save_template(tpl, a.template_out);
    std::cout << "detected " << tpl.runs.size() << " stripe run(s), coverage " << lunar::mask_coverage(mask)
              << "\n";

    lunar::RunRecord rec;
    rec.subcommand = "detect";
    rec.args = {{"in", a.in},
                {"zero_thresh", a.zero_thresh},
                {"col_frac", a.col_frac},
                {"template_out", a.template_out}};
    rec.input_hashes[a.in] = lunar::hash_file(a.in);
    rec.outputs = {a.template_out};
    lunar::save_run_record(rec, sibling_record_path(a.template_out));
    return 0;
}

int run_synth(const SynthArgs& a) {
    lunar::BuildConfig cfg;
    cfg.crop_size = a.crop_size;
    cfg.n_train = a.n_train;
    cfg.n_val = a.n_val;
    cfg.n_test = a.n_test;
    cfg.master_seed = a.seed;
    cfg.max_coverage = a.max_coverage;
    const auto man = lunar::build_dataset(a.clean_dir, a.templates, cfg, a.out_dir);
    std::cout << "built " << man.samples.size() << " samples (" << man.n_train << "/" << man.n_val << "/"
              << man.n_test << ") in " << a.out_dir << "\n";

    lunar::RunRecord rec;
    rec.subcommand = "synth";
    rec.args = {{"clean_dir", a.clean_dir}, {"templates", a.templates}, {"n_train", a.n_train},
                {"n_val", a.n_val},         {"n_test", a.n_test},       {"seed", a.seed},
                {"crop_size", a.crop_size}, {"max_coverage", a.max_coverage}, {"out_dir", a.out_dir}};
    for (int s = 0; s < 3; ++s)
        for (const auto& f : man.split_sources[static_cast<std::size_t>(s)])
            rec.input_hashes[f] = lunar::hash_file(f);
    rec.outputs = {(fs::path(a.out_dir) / "manifest.json").string()};
    lunar::save_run_record(rec, (fs::path(a.out_dir) / "run_record.json").string());
    return 0;
}

int run_train(const TrainArgs& a) {
    const auto man = lunar::load_manifest(a.manifest);
    lunar::UNetConfig unet;
    unet.depth = a.depth;
    unet.base_channels = a.base_channels;
    lunar::TrainConfig cfg;
    cfg.learning_rate = a.lr;
    cfg.batch_size = a.batch_size;
    cfg.epochs = a.epochs;
    cfg.seed = a.seed;
    cfg.checkpoint_every = a.checkpoint_every;
    cfg.masked_loss = a.masked_loss;

    lunar::Checkpoint resume_ckpt;
    const lunar::Checkpoint* resume = nullptr;
    if (!a.resume.empty()) {
        resume_ckpt = lunar::load_checkpoint(a.resume);
        resume = &resume_ckpt;
    }
    const auto res = lunar::fit(man, unet, cfg, a.out_dir, resume, &std::cout);
    std::cout << "final checkpoint: " << res.checkpoint_path << "\n";

    lunar::RunRecord rec;
    rec.subcommand = "train";
    rec.args = {{"manifest", a.manifest},   {"out_dir", a.out_dir},
                {"depth", a.depth},         {"base_channels", a.base_channels},
                {"lr", a.lr},               {"batch_size", a.batch_size},
                {"epochs", a.epochs},       {"seed", a.seed},
                {"checkpoint_every", a.checkpoint_every}, {"masked_loss", a.masked_loss},
                {"resume", a.resume}};
    rec.input_hashes[a.manifest] = lunar::hash_file(a.manifest);
    if (!a.resume.empty()) rec.input_hashes[a.resume] = lunar::hash_file(a.resume);
    rec.outputs = {res.checkpoint_path, res.loss_csv_path};
    lunar::save_run_record(rec, (fs::path(a.out_dir) / "run_record.json").string());
    return 0;
}

int run_eval(const EvalArgs& a) {
    if (!a.stub_identity && a.ckpt.empty())
        throw lunar::validation_error("eval: --ckpt is required unless --stub-identity is given");
    const auto man = lunar::load_manifest(a.manifest);
    const auto split = lunar::split_from_name(a.split);
    lunar::EvalOptions opts;
    opts.triptych_dir = a.triptych_dir;

    lunar::EvalReport rep;
    std::string ckpt_hash = "stub-identity";
    if (a.stub_identity) {
        rep = lunar::evaluate_with(
            [](const lunar::GrayImage& corrupted, const lunar::StripeMask&) { return corrupted; }, man, split,
            opts);
    } else {
        const auto ckpt = lunar::load_checkpoint(a.ckpt);
        ckpt_hash = ckpt.params_hash();
        if (a.raw) {
            rep = lunar::evaluate_with(
                [&](const lunar::GrayImage& corrupted, const lunar::StripeMask& mask) {
                    return lunar::restore_crop(ckpt, corrupted, mask, /*composite=*/false);
                },
                man, split, opts);
        } else {
            rep = lunar::evaluate(ckpt, man, split, opts);
        }
    }
    lunar::save_report_json(rep, a.report);
    if (!a.report_csv.empty()) lunar::save_report_csv(rep, a.report_csv);
    std::cout << "split " << a.split << ": mean psnr corrupted " << rep.mean_psnr_corrupted << " dB, restored "
              << rep.mean_psnr_restored << " dB, improved " << rep.fraction_improved * 100.0 << "%\n";

    lunar::RunRecord rec;
    rec.subcommand = "eval";
    rec.args = {{"manifest", a.manifest},   {"ckpt", a.ckpt},
                {"split", a.split},         {"report", a.report},
                {"report_csv", a.report_csv}, {"triptych_dir", a.triptych_dir},
                {"stub_identity", a.stub_identity}, {"raw", a.raw},
                {"checkpoint_id", ckpt_hash}};
    rec.input_hashes[a.manifest] = lunar::hash_file(a.manifest);
    if (!a.ckpt.empty()) rec.input_hashes[a.ckpt] = lunar::hash_file(a.ckpt);
    rec.outputs = {a.report};
    if (!a.report_csv.empty()) rec.outputs.push_back(a.report_csv);
    lunar::save_run_record(rec, sibling_record_path(a.report));
    return 0;
}

int run_restore(const RestoreArgs& a) {
    const std::string sidecar = a.geo_json.empty() ? lunar::default_sidecar_path(a.mosaic) : a.geo_json;
    auto reader = lunar::MosaicReader::open(a.mosaic, sidecar);
    const auto ckpt = lunar::load_checkpoint(a.ckpt);
    lunar::DetectConfig detect;
    detect.zero_thresh = a.zero_thresh;
    detect.col_frac_thresh = a.col_frac;

    const lunar::GeoPoint corner_a{a.rect[0], a.rect[1]};
    const lunar::GeoPoint corner_b{a.rect[2], a.rect[3]};
    const auto res = lunar::restore_region(reader, corner_a, corner_b, ckpt, a.out, detect);
    std::cout << (res.restored ? "restored" : "stripe-free copy") << ", coverage " << res.coverage << ", rect ("
              << res.rect.x0 << "," << res.rect.y0 << "," << res.rect.w << "," << res.rect.h << ")\n";

    lunar::RunRecord rec;
    rec.subcommand = "restore";
    rec.args = {{"mosaic", a.mosaic}, {"geo_json", sidecar}, {"rect", a.rect},
                {"ckpt", a.ckpt},     {"out", a.out},        {"zero_thresh", a.zero_thresh},
                {"col_frac", a.col_frac}};
    rec.input_hashes[a.mosaic] = lunar::hash_file(a.mosaic);
    rec.input_hashes[sidecar] = lunar::hash_file(sidecar);
    rec.input_hashes[a.ckpt] = lunar::hash_file(a.ckpt);
    rec.outputs = {a.out, res.sidecar_path};
    lunar::save_run_record(rec, sibling_record_path(a.out));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Lunar surface mosaic restoration pipeline"};
    app.require_subcommand(1);
    app.fallthrough();  // lets --config appear after the subcommand name
    app.set_config("--config", "",
                   "TOML-style config file with one [section] per subcommand; flags override file values");

    CropArgs crop_args;
    auto* crop = app.add_subcommand("crop", "Crop a crater window by selenographic coordinates");
    crop->add_option("--mosaic", crop_args.mosaic, "P5 mosaic file")->required();
    crop->add_option("--geo-json", crop_args.geo_json, "Geo sidecar (default: <mosaic>.geo.json)");
    crop->add_option("--lon", crop_args.lon, "Center longitude, degrees")->required();
    crop->add_option("--lat", crop_args.lat, "Center latitude, degrees")->required();
    crop->add_option("--size-px", crop_args.size_px, "Window size in mosaic pixels")->required();
    crop->add_option("--resize", crop_args.resize, "Resize the crop to this many pixels");
    crop->add_option("--out", crop_args.out, "Output image (.png or .pgm)")->required();

    DetectArgs detect_args;
    auto* detect = app.add_subcommand("detect", "Detect black stripes and extract a reusable template");
    detect->add_option("--in", detect_args.in, "Input crop with stripes")->required();
    detect->add_option("--zero-thresh", detect_args.zero_thresh, "Dark-pixel threshold in [0,1]");
    detect->add_option("--col-frac", detect_args.col_frac, "Minimum vertical run as a fraction of height");
    detect->add_option("--template-out", detect_args.template_out, "Template JSON output")->required();

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "Build a clean/corrupted training dataset");
    synth->add_option("--clean-dir", synth_args.clean_dir, "Directory of clean crops")->required();
    synth->add_option("--templates", synth_args.templates, "Template JSON file or directory")->required();
    synth->add_option("--n-train", synth_args.n_train, "Training pairs");
    synth->add_option("--n-val", synth_args.n_val, "Validation pairs");
    synth->add_option("--n-test", synth_args.n_test, "Test pairs");
    synth->add_option("--seed", synth_args.seed, "Master seed");
    synth->add_option("--crop-size", synth_args.crop_size, "Crop side length in pixels");
    synth->add_option("--max-coverage", synth_args.max_coverage, "Maximum stripe coverage per template");
    synth->add_option("--out-dir", synth_args.out_dir, "Output dataset directory")->required();

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "Train the inpainting model");
    train->add_option("--manifest", train_args.manifest, "Dataset manifest JSON")->required();
    train->add_option("--out-dir", train_args.out_dir, "Run output directory")->required();
    train->add_option("--depth", train_args.depth, "U-Net pooling depth");
    train->add_option("--base-channels", train_args.base_channels, "Channels at the first encoder level");
    train->add_option("--lr", train_args.lr, "Adam learning rate");
    train->add_option("--batch-size", train_args.batch_size, "Batch size");
    train->add_option("--epochs", train_args.epochs, "Total epochs");
    train->add_option("--seed", train_args.seed, "Training seed");
    train->add_option("--checkpoint-every", train_args.checkpoint_every, "Epochs between checkpoints");
    train->add_flag("--masked-loss", train_args.masked_loss, "Restrict L2 loss to masked pixels");
    train->add_option("--resume", train_args.resume, "Checkpoint to resume from");

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "Evaluate restorations with PSNR metrics");
    eval->add_option("--manifest", eval_args.manifest, "Dataset manifest JSON")->required();
    eval->add_option("--ckpt", eval_args.ckpt, "Model checkpoint");
    eval->add_option("--split", eval_args.split, "Split: train|val|test");
    eval->add_option("--report", eval_args.report, "Report JSON output")->required();
    eval->add_option("--report-csv", eval_args.report_csv, "Report CSV output");
    eval->add_option("--triptych-dir", eval_args.triptych_dir, "Render per-sample triptychs here");
    eval->add_flag("--stub-identity", eval_args.stub_identity, "Bypass the model: restored = corrupted");
    eval->add_flag("--raw", eval_args.raw, "Evaluate raw network output without compositing");

    RestoreArgs restore_args;
    auto* restore = app.add_subcommand("restore", "Restore a mosaic region given two geodetic corners");
    restore->add_option("--mosaic", restore_args.mosaic, "P5 mosaic file")->required();
    restore->add_option("--geo-json", restore_args.geo_json, "Geo sidecar (default: <mosaic>.geo.json)");
    restore->add_option("--rect", restore_args.rect, "Region corners: lon1 lat1 lon2 lat2")
        ->expected(4)
        ->required();
    restore->add_option("--ckpt", restore_args.ckpt, "Model checkpoint")->required();
    restore->add_option("--zero-thresh", restore_args.zero_thresh, "Dark-pixel threshold in [0,1]");
    restore->add_option("--col-frac", restore_args.col_frac, "Minimum vertical run fraction");
    restore->add_option("--out", restore_args.out, "Restored crop output (.png)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (crop->parsed()) return run_crop(crop_args);
        if (detect->parsed()) return run_detect(detect_args);
        if (synth->parsed()) return run_synth(synth_args);
        if (train->parsed()) return run_train(train_args);
        if (eval->parsed()) return run_eval(eval_args);
        if (restore->parsed()) return run_restore(restore_args);
    } catch (const lunar::validation_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const lunar::numeric_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const lunar::io_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
