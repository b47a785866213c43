#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lunar/common.hpp"
#include "lunar/image_io.hpp"

namespace lunar {

inline std::string hash_file(const std::string& path) {
    return "fnv1a64:" + to_hex(fnv1a(read_file_bytes(path)));
}

// Every CLI run writes one of these beside its outputs: the resolved
// configuration plus input hashes, enough to replay the run exactly.
struct RunRecord {
    int schema_version = 1;
    std::string subcommand;
    nlohmann::json args;  // resolved flag values
    std::map<std::string, std::string> input_hashes;
    std::vector<std::string> outputs;
};

inline void save_run_record(const RunRecord& rec, const std::string& path) {
    const nlohmann::json j = {{"schema_version", rec.schema_version},
                              {"subcommand", rec.subcommand},
                              {"args", rec.args},
                              {"inputs", rec.input_hashes},
                              {"outputs", rec.outputs}};
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw io_error("cannot create run record: " + path);
    f << j.dump(2) << "\n";
    if (!f) throw io_error("short write: " + path);
}

inline nlohmann::json load_run_record(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot open run record: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw format_error("run record " + path + ": " + e.what());
    }
    return j;
}

// Order-independent content hash of every regular file under a directory.
inline std::string hash_tree(const std::string& dir) {
    namespace fs = std::filesystem;
    std::vector<std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& f : files) {
        const auto rel = fs::relative(f, dir).string();
        h = fnv1a(rel.data(), rel.size(), h);
        const auto bytes = read_file_bytes(f);
        h = fnv1a(bytes.data(), bytes.size(), h);
    }
    return to_hex(h);
}

}  // namespace lunar
