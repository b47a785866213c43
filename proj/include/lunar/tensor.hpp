#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "lunar/common.hpp"

namespace lunar {

// Dense row-major tensor of doubles. Activations and batches are 4-D
// [N,C,H,W]; parameter tensors use whatever rank fits (conv weights are 4-D,
// biases 1-D).
struct Tensor {
    std::vector<std::int64_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::int64_t> s, double fill = 0.0) : shape(std::move(s)) {
        std::int64_t n = 1;
        for (auto d : shape) {
            if (d < 1) throw validation_error("Tensor: dims must be >= 1");
            n *= d;
        }
        data.assign(static_cast<std::size_t>(n), fill);
    }

    static Tensor zeros4(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
        return Tensor({n, c, h, w});
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    bool is4d() const { return shape.size() == 4; }

    std::int64_t dim(std::size_t i) const { return shape.at(i); }

    // 4-D accessors; valid only when is4d().
    double* plane(std::int64_t n, std::int64_t c) {
        return data.data() + ((n * shape[1] + c) * shape[2]) * shape[3];
    }
    const double* plane(std::int64_t n, std::int64_t c) const {
        return data.data() + ((n * shape[1] + c) * shape[2]) * shape[3];
    }
    double& at4(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) {
        return data[static_cast<std::size_t>(((n * shape[1] + c) * shape[2] + y) * shape[3] + x)];
    }
    double at4(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) const {
        return data[static_cast<std::size_t>(((n * shape[1] + c) * shape[2] + y) * shape[3] + x)];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }
};

using Tensor4 = Tensor;

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw validation_error(std::string(what) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

}  // namespace lunar
