#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "lunar/adam.hpp"
#include "lunar/checkpoint.hpp"
#include "lunar/common.hpp"
#include "lunar/dataset.hpp"
#include "lunar/rng.hpp"
#include "lunar/unet.hpp"

namespace lunar {

namespace detail {
constexpr std::uint64_t kSeedParamInit = 0x494e49u;
constexpr std::uint64_t kSeedEpochShuffleBase = 0x455053u;
}  // namespace detail

struct FitResult {
    Checkpoint checkpoint;
    std::string checkpoint_path;
    std::string loss_csv_path;
};

inline void write_loss_csv(const std::vector<LossEntry>& history, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw io_error("cannot create loss CSV: " + path);
    f << "epoch,train_loss,val_loss\n";
    for (const auto& e : history) {
        f << e.epoch << "," << std::scientific;
        f.precision(17);
        f << e.train_loss << ",";
        if (e.val_loss) f << *e.val_loss;
        f << "\n";
    }
    if (!f) throw io_error("short write: " + path);
}

namespace detail {

inline double validation_loss(const DatasetManifest& man, const UNetConfig& unet, const TrainConfig& cfg,
                              const ModelParams& params) {
    const auto val_idx = man.split_indices(Split::val);
    if (val_idx.empty()) return std::numeric_limits<double>::quiet_NaN();
    double acc = 0.0;
    std::int64_t n = 0;
    for (std::size_t start = 0; start < val_idx.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
        std::vector<std::int64_t> ids;
        for (std::size_t k = start; k < std::min(val_idx.size(), start + static_cast<std::size_t>(cfg.batch_size)); ++k)
            ids.push_back(static_cast<std::int64_t>(k));
        const Batch b = load_batch(man, Split::val, ids);
        const double l = cfg.masked_loss ? loss_only(params, unet, b.corrupted, b.clean, &b.masks)
                                         : loss_only(params, unet, b.corrupted, b.clean);
        acc += l * static_cast<double>(ids.size());
        n += static_cast<std::int64_t>(ids.size());
    }
    return acc / static_cast<double>(n);
}

}  // namespace detail

// Minimizes the L2 loss over the train split with Adam. Deterministic in
// (manifest, configs): the per-epoch shuffle is seeded by (seed, epoch), so a
// run resumed from a checkpoint continues bit-identically (single-threaded,
// double precision). `resume` continues a previous run; cfg.epochs is the
// total epoch count including the resumed part.
inline FitResult fit(const DatasetManifest& man, const UNetConfig& unet, const TrainConfig& cfg,
                     const std::string& out_dir, const Checkpoint* resume = nullptr,
                     std::ostream* log = nullptr) {
    namespace fs = std::filesystem;
    unet.validate();
    cfg.validate();
    if (man.crop_size % unet.divisor() != 0)
        throw validation_error("fit: crop size " + std::to_string(man.crop_size) +
                               " not divisible by 2^depth = " + std::to_string(unet.divisor()));
    const auto train_idx = man.split_indices(Split::train);
    if (train_idx.empty()) throw validation_error("fit: manifest has no train split");
    fs::create_directories(out_dir);

    Checkpoint ckpt;
    if (resume) {
        ckpt = *resume;
        const auto& u = ckpt.unet;
        if (u.depth != unet.depth || u.base_channels != unet.base_channels ||
            u.in_channels != unet.in_channels || u.out_channels != unet.out_channels)
            throw validation_error("fit: resume checkpoint architecture does not match requested config");
    } else {
        ckpt.unet = unet;
        ckpt.params = init_params(unet, mix64(cfg.seed, detail::kSeedParamInit));
        ckpt.adam_m = ModelParams::zeros_like(ckpt.params);
        ckpt.adam_v = ModelParams::zeros_like(ckpt.params);
    }
    ckpt.train = cfg;

    AdamState adam;
    adam.m = std::move(ckpt.adam_m);
    adam.v = std::move(ckpt.adam_v);
    adam.step = ckpt.adam_steps;

    const AdamConfig adam_cfg = cfg.adam();
    const std::int64_t n_train = static_cast<std::int64_t>(train_idx.size());

    for (std::int64_t epoch = ckpt.epoch; epoch < cfg.epochs; ++epoch) {
        std::vector<std::int64_t> order(static_cast<std::size_t>(n_train));
        for (std::int64_t i = 0; i < n_train; ++i) order[static_cast<std::size_t>(i)] = i;
        SplitMix64 rng(mix64(cfg.seed, detail::kSeedEpochShuffleBase + static_cast<std::uint64_t>(epoch)));
        rng.shuffle(order);

        double loss_acc = 0.0;
        std::int64_t batch_no = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size), ++batch_no) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            const std::vector<std::int64_t> ids(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                order.begin() + static_cast<std::ptrdiff_t>(stop));
            const Batch b = load_batch(man, Split::train, ids);
            LossGrads lg = cfg.masked_loss ? loss_and_grads(ckpt.params, unet, b.corrupted, b.clean, &b.masks)
                                           : loss_and_grads(ckpt.params, unet, b.corrupted, b.clean);
            if (!std::isfinite(lg.loss))
                throw numeric_error("non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                                    std::to_string(batch_no));
            adam_step(ckpt.params, lg.grads, adam, adam_cfg);
            loss_acc += lg.loss * static_cast<double>(ids.size());
        }

        LossEntry entry;
        entry.epoch = epoch;
        entry.train_loss = loss_acc / static_cast<double>(n_train);

        const bool at_checkpoint = ((epoch + 1) % cfg.checkpoint_every == 0) || (epoch + 1 == cfg.epochs);
        if (at_checkpoint) {
            const double vl = detail::validation_loss(man, unet, cfg, ckpt.params);
            if (std::isfinite(vl)) entry.val_loss = vl;
        }
        ckpt.history.push_back(entry);
        ckpt.epoch = epoch + 1;

        if (log) {
            (*log) << "epoch " << epoch << " train_loss " << entry.train_loss;
            if (entry.val_loss) (*log) << " val_loss " << *entry.val_loss;
            (*log) << "\n";
        }

        if (at_checkpoint) {
            ckpt.adam_m = adam.m;
            ckpt.adam_v = adam.v;
            ckpt.adam_steps = adam.step;
            char name[48];
            std::snprintf(name, sizeof(name), "checkpoint_epoch%06lld.ckpt", static_cast<long long>(epoch + 1));
            save_checkpoint(ckpt, (fs::path(out_dir) / name).string());
        }
    }

    ckpt.adam_m = std::move(adam.m);
    ckpt.adam_v = std::move(adam.v);
    ckpt.adam_steps = adam.step;

    FitResult res;
    res.checkpoint_path = (fs::path(out_dir) / "checkpoint_final.ckpt").string();
    res.loss_csv_path = (fs::path(out_dir) / "loss_history.csv").string();
    save_checkpoint(ckpt, res.checkpoint_path);
    write_loss_csv(ckpt.history, res.loss_csv_path);
    res.checkpoint = std::move(ckpt);
    return res;
}

}  // namespace lunar
