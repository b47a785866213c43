#pragma once

#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "lunar/common.hpp"
#include "lunar/geo.hpp"
#include "lunar/image.hpp"

namespace lunar {

// Seekable read-only byte stream. The window reader is written against this
// so tests can substitute counting/procedural sources for real files.
class ByteSource {
public:
    virtual ~ByteSource() = default;
    virtual std::uint64_t size() const = 0;
    // Reads exactly `n` bytes at `offset`; throws io_error on short reads.
    virtual void read_at(std::uint64_t offset, unsigned char* dst, std::size_t n) const = 0;
};

class FileSource final : public ByteSource {
public:
    explicit FileSource(const std::string& path) : path_(path), file_(std::fopen(path.c_str(), "rb")) {
        if (!file_) throw io_error("cannot open mosaic file: " + path);
        std::fseek(file_, 0, SEEK_END);
        const long end = std::ftell(file_);
        if (end < 0) throw io_error("cannot determine size of: " + path);
        size_ = static_cast<std::uint64_t>(end);
    }
    ~FileSource() override {
        if (file_) std::fclose(file_);
    }
    FileSource(const FileSource&) = delete;
    FileSource& operator=(const FileSource&) = delete;

    std::uint64_t size() const override { return size_; }

    void read_at(std::uint64_t offset, unsigned char* dst, std::size_t n) const override {
        if (n == 0) return;
        if (std::fseek(file_, static_cast<long>(offset), SEEK_SET) != 0)
            throw io_error("seek failed in " + path_);
        if (std::fread(dst, 1, n, file_) != n)
            throw io_error("short read in " + path_ + " at offset " + std::to_string(offset));
    }

private:
    std::string path_;
    std::FILE* file_ = nullptr;
    std::uint64_t size_ = 0;
};

class MemorySource final : public ByteSource {
public:
    explicit MemorySource(std::vector<unsigned char> bytes) : bytes_(std::move(bytes)) {}

    std::uint64_t size() const override { return bytes_.size(); }

    void read_at(std::uint64_t offset, unsigned char* dst, std::size_t n) const override {
        if (offset + n > bytes_.size())
            throw io_error("read past end of memory source (offset " + std::to_string(offset) + ")");
        std::copy(bytes_.begin() + static_cast<std::ptrdiff_t>(offset),
                  bytes_.begin() + static_cast<std::ptrdiff_t>(offset + n), dst);
    }

private:
    std::vector<unsigned char> bytes_;
};

struct PgmLayout {
    std::int64_t width = 0;
    std::int64_t height = 0;
    std::uint64_t data_offset = 0;
};

// Parses a P5 header from the front of the source without touching pixel data.
inline PgmLayout parse_pgm_layout(const ByteSource& src) {
    const std::size_t probe = static_cast<std::size_t>(std::min<std::uint64_t>(src.size(), 1024));
    std::vector<unsigned char> head(probe);
    src.read_at(0, head.data(), probe);
    if (probe < 2 || head[0] != 'P' || head[1] != '5') throw format_error("mosaic: not a P5 raster");

    std::size_t pos = 2;
    auto next_int = [&](const char* what) -> long {
        while (pos < head.size()) {
            const char c = static_cast<char>(head[pos]);
            if (c == '#') {
                while (pos < head.size() && head[pos] != '\n') ++pos;
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                ++pos;
            } else {
                break;
            }
        }
        if (pos >= head.size() || head[pos] < '0' || head[pos] > '9')
            throw format_error(std::string("mosaic PGM header: expected ") + what);
        long v = 0;
        while (pos < head.size() && head[pos] >= '0' && head[pos] <= '9') {
            v = v * 10 + (head[pos] - '0');
            ++pos;
        }
        return v;
    };

    PgmLayout layout;
    layout.width = next_int("width");
    layout.height = next_int("height");
    const long maxval = next_int("maxval");
    if (maxval != 255) throw format_error("mosaic PGM: unsupported maxval " + std::to_string(maxval));
    layout.data_offset = ++pos;  // single whitespace byte terminates the header
    if (layout.width < 1 || layout.height < 1) throw format_error("mosaic PGM: non-positive dimensions");

    const std::uint64_t need = layout.data_offset +
                               static_cast<std::uint64_t>(layout.width) * static_cast<std::uint64_t>(layout.height);
    if (src.size() < need)
        throw format_error("mosaic PGM: file shorter than header promises (" + std::to_string(src.size()) +
                           " < " + std::to_string(need) + ")");
    return layout;
}

// Windowed access to a P5 mosaic. Reads only the bytes of the covered rows
// within the covered columns; peak transient memory is O(rect), never
// O(mosaic).
class MosaicReader {
public:
    MosaicReader(std::shared_ptr<const ByteSource> src, MosaicHeader header)
        : src_(std::move(src)), header_(header), layout_(parse_pgm_layout(*src_)) {
        header_.validate();
        if (layout_.width != header_.width_px || layout_.height != header_.height_px)
            throw validation_error("mosaic raster is " + std::to_string(layout_.width) + "x" +
                                   std::to_string(layout_.height) + " but sidecar says " +
                                   std::to_string(header_.width_px) + "x" + std::to_string(header_.height_px));
    }

    static MosaicReader open(const std::string& mosaic_path, const std::string& sidecar_path = "") {
        const std::string sidecar = sidecar_path.empty() ? default_sidecar_path(mosaic_path) : sidecar_path;
        return MosaicReader(std::make_shared<FileSource>(mosaic_path), load_geo_sidecar(sidecar));
    }

    const MosaicHeader& header() const { return header_; }

    GrayImage read_window(const PixelRect& rect) const {
        rect.validate_within(header_.width_px, header_.height_px);
        GrayImage img(static_cast<int>(rect.w), static_cast<int>(rect.h));
        std::vector<unsigned char> row(static_cast<std::size_t>(rect.w));
        for (std::int64_t r = 0; r < rect.h; ++r) {
            const std::uint64_t off = layout_.data_offset +
                                      static_cast<std::uint64_t>(rect.y0 + r) * header_.width_px +
                                      static_cast<std::uint64_t>(rect.x0);
            src_->read_at(off, row.data(), row.size());
            double* dst = img.pixels.data() + static_cast<std::size_t>(r) * rect.w;
            for (std::int64_t c = 0; c < rect.w; ++c) dst[c] = byte_to_intensity(row[static_cast<std::size_t>(c)]);
        }
        return img;
    }

private:
    std::shared_ptr<const ByteSource> src_;
    MosaicHeader header_;
    PgmLayout layout_;
};

}  // namespace lunar
