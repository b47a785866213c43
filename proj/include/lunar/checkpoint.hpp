#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lunar/adam.hpp"
#include "lunar/common.hpp"
#include "lunar/unet.hpp"

namespace lunar {

struct TrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int batch_size = 4;
    int epochs = 50;
    std::uint64_t seed = 0;
    int checkpoint_every = 10;  // epochs between periodic saves / val passes
    bool masked_loss = false;   // restrict the L2 loss to masked pixels

    void validate() const {
        AdamConfig{learning_rate, beta1, beta2, epsilon}.validate();
        if (batch_size < 1) throw validation_error("TrainConfig: batch_size must be >= 1");
        if (epochs < 1) throw validation_error("TrainConfig: epochs must be >= 1");
        if (checkpoint_every < 1) throw validation_error("TrainConfig: checkpoint_every must be >= 1");
    }

    AdamConfig adam() const { return {learning_rate, beta1, beta2, epsilon}; }
};

struct LossEntry {
    std::int64_t epoch = 0;
    double train_loss = 0.0;
    std::optional<double> val_loss;
};

struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;

    UNetConfig unet;
    TrainConfig train;
    std::int64_t epoch = 0;  // number of completed epochs
    ModelParams params;
    ModelParams adam_m;
    ModelParams adam_v;
    std::int64_t adam_steps = 0;
    std::vector<LossEntry> history;

    // Stable identifier for sidecars/reports: hash of the parameter payload.
    std::string params_hash() const {
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (const auto& [name, t] : params.items) {
            h = fnv1a(name.data(), name.size(), h);
            h = fnv1a(t.data.data(), t.data.size() * sizeof(double), h);
        }
        return to_hex(h);
    }
};

// ---------------------------------------------------------------------------
// Binary format: magic "LRUC", u32 version, u64 JSON header length, JSON
// header (configs, epoch, tensor names/shapes, loss history), then tensor
// payloads as 64-bit IEEE-754 little-endian doubles in header order.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32le(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

inline void put_u64le(std::vector<unsigned char>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t get_u32le(const unsigned char* p) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

inline std::uint64_t get_u64le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

inline void put_f64le(std::vector<unsigned char>& out, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, sizeof(bits));
    put_u64le(out, bits);
}

inline double get_f64le(const unsigned char* p) {
    const std::uint64_t bits = get_u64le(p);
    double d;
    std::memcpy(&d, &bits, sizeof(d));
    return d;
}

inline nlohmann::json unet_config_to_json(const UNetConfig& c) {
    return {{"depth", c.depth},
            {"base_channels", c.base_channels},
            {"in_channels", c.in_channels},
            {"out_channels", c.out_channels}};
}

inline UNetConfig unet_config_from_json(const nlohmann::json& j) {
    UNetConfig c;
    c.depth = j.at("depth").get<int>();
    c.base_channels = j.at("base_channels").get<int>();
    c.in_channels = j.at("in_channels").get<int>();
    c.out_channels = j.at("out_channels").get<int>();
    return c;
}

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
    return {{"learning_rate", c.learning_rate}, {"beta1", c.beta1},
            {"beta2", c.beta2},                 {"epsilon", c.epsilon},
            {"batch_size", c.batch_size},       {"epochs", c.epochs},
            {"seed", c.seed},                   {"checkpoint_every", c.checkpoint_every},
            {"masked_loss", c.masked_loss}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.learning_rate = j.at("learning_rate").get<double>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.epsilon = j.at("epsilon").get<double>();
    c.batch_size = j.at("batch_size").get<int>();
    c.epochs = j.at("epochs").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.checkpoint_every = j.at("checkpoint_every").get<int>();
    c.masked_loss = j.at("masked_loss").get<bool>();
    return c;
}

inline void append_tensor_list(nlohmann::json& list, const std::string& prefix, const ModelParams& p) {
    for (const auto& [name, t] : p.items)
        list.push_back({{"name", prefix + name}, {"shape", t.shape}});
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    nlohmann::json tensors = nlohmann::json::array();
    detail::append_tensor_list(tensors, "", ckpt.params);
    detail::append_tensor_list(tensors, "adam.m.", ckpt.adam_m);
    detail::append_tensor_list(tensors, "adam.v.", ckpt.adam_v);

    nlohmann::json history = nlohmann::json::array();
    for (const auto& e : ckpt.history) {
        nlohmann::json je = {{"epoch", e.epoch}, {"train_loss", e.train_loss}};
        je["val_loss"] = e.val_loss ? nlohmann::json(*e.val_loss) : nlohmann::json(nullptr);
        history.push_back(je);
    }

    const nlohmann::json header = {{"unet", detail::unet_config_to_json(ckpt.unet)},
                                   {"train", detail::train_config_to_json(ckpt.train)},
                                   {"epoch", ckpt.epoch},
                                   {"adam_steps", ckpt.adam_steps},
                                   {"history", history},
                                   {"tensors", tensors}};
    const std::string header_str = header.dump();

    std::vector<unsigned char> out;
    out.push_back('L');
    out.push_back('R');
    out.push_back('U');
    out.push_back('C');
    detail::put_u32le(out, Checkpoint::kVersion);
    detail::put_u64le(out, header_str.size());
    out.insert(out.end(), header_str.begin(), header_str.end());
    for (const ModelParams* p : {&ckpt.params, &ckpt.adam_m, &ckpt.adam_v})
        for (const auto& [name, t] : p->items)
            for (double d : t.data) detail::put_f64le(out, d);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw io_error("cannot create checkpoint: " + path);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw io_error("short write: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open checkpoint: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    if (bytes.size() < 16 || std::memcmp(bytes.data(), "LRUC", 4) != 0)
        throw corrupt_checkpoint_error("checkpoint " + path + ": bad magic");
    const std::uint32_t version = detail::get_u32le(bytes.data() + 4);
    if (version != Checkpoint::kVersion)
        throw corrupt_checkpoint_error("checkpoint " + path + ": unsupported version " + std::to_string(version));
    const std::uint64_t hlen = detail::get_u64le(bytes.data() + 8);
    if (16 + hlen > bytes.size())
        throw corrupt_checkpoint_error("checkpoint " + path + ": truncated header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(hlen));
    } catch (const nlohmann::json::exception& e) {
        throw corrupt_checkpoint_error("checkpoint " + path + ": bad header: " + e.what());
    }

    Checkpoint ckpt;
    std::vector<std::pair<std::string, std::vector<std::int64_t>>> tensor_list;
    try {
        ckpt.unet = detail::unet_config_from_json(header.at("unet"));
        ckpt.train = detail::train_config_from_json(header.at("train"));
        ckpt.epoch = header.at("epoch").get<std::int64_t>();
        ckpt.adam_steps = header.at("adam_steps").get<std::int64_t>();
        for (const auto& je : header.at("history")) {
            LossEntry e;
            e.epoch = je.at("epoch").get<std::int64_t>();
            e.train_loss = je.at("train_loss").get<double>();
            if (!je.at("val_loss").is_null()) e.val_loss = je.at("val_loss").get<double>();
            ckpt.history.push_back(e);
        }
        for (const auto& jt : header.at("tensors"))
            tensor_list.emplace_back(jt.at("name").get<std::string>(),
                                     jt.at("shape").get<std::vector<std::int64_t>>());
    } catch (const nlohmann::json::exception& e) {
        throw corrupt_checkpoint_error("checkpoint " + path + ": bad header: " + e.what());
    }

    std::size_t pos = 16 + static_cast<std::size_t>(hlen);
    auto read_group = [&](const std::string& prefix, ModelParams& dst) {
        for (const auto& [name, shape] : tensor_list) {
            if (name.rfind(prefix, 0) != 0) continue;
            if (prefix.empty() && (name.rfind("adam.m.", 0) == 0 || name.rfind("adam.v.", 0) == 0)) continue;
            dst.items.emplace_back(name.substr(prefix.size()), Tensor(shape));
        }
    };
    try {
        read_group("", ckpt.params);
        read_group("adam.m.", ckpt.adam_m);
        read_group("adam.v.", ckpt.adam_v);
    } catch (const validation_error& e) {
        throw corrupt_checkpoint_error("checkpoint " + path + ": bad tensor shape: " + e.what());
    }

    // Payloads are stored in header order; replay the same order here.
    for (ModelParams* group : {&ckpt.params, &ckpt.adam_m, &ckpt.adam_v}) {
        for (auto& [name, t] : group->items) {
            const std::size_t need = t.data.size() * 8;
            if (pos + need > bytes.size())
                throw corrupt_checkpoint_error("checkpoint " + path + ": truncated payload at tensor " + name);
            for (std::size_t i = 0; i < t.data.size(); ++i)
                t.data[i] = detail::get_f64le(bytes.data() + pos + i * 8);
            pos += need;
        }
    }
    if (pos != bytes.size())
        throw corrupt_checkpoint_error("checkpoint " + path + ": trailing bytes after payload");

    // Shape sanity against the stored config.
    try {
        ckpt.unet.validate();
        const ModelParams ref = init_params(ckpt.unet, 0);
        auto check = [&](const ModelParams& got, const char* what) {
            if (got.items.size() != ref.items.size())
                throw corrupt_checkpoint_error("checkpoint " + path + ": wrong tensor count in " + what);
            for (std::size_t i = 0; i < ref.items.size(); ++i) {
                if (got.items[i].first != ref.items[i].first ||
                    got.items[i].second.shape != ref.items[i].second.shape)
                    throw corrupt_checkpoint_error("checkpoint " + path + ": tensor " + got.items[i].first +
                                                   " does not match config shape");
            }
        };
        check(ckpt.params, "params");
        check(ckpt.adam_m, "adam.m");
        check(ckpt.adam_v, "adam.v");
    } catch (const validation_error& e) {
        throw corrupt_checkpoint_error("checkpoint " + path + ": invalid config: " + e.what());
    }
    return ckpt;
}

}  // namespace lunar
