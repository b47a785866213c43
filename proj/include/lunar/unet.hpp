#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lunar/common.hpp"
#include "lunar/rng.hpp"
#include "lunar/tensor.hpp"

namespace lunar {

// Architecture hyperparameters. Encoder level i (0-indexed) outputs
// base_channels << i channels; the bottleneck outputs base_channels << depth.
struct UNetConfig {
    int depth = 2;
    int base_channels = 8;
    int in_channels = 1;
    int out_channels = 1;

    void validate() const {
        if (depth < 1) throw validation_error("UNetConfig: depth must be >= 1");
        if (base_channels < 1) throw validation_error("UNetConfig: base_channels must be >= 1");
        if (in_channels < 1 || out_channels < 1)
            throw validation_error("UNetConfig: channel counts must be >= 1");
    }

    std::int64_t divisor() const { return std::int64_t{1} << depth; }
    std::int64_t enc_channels(int level) const { return std::int64_t{base_channels} << level; }

    void check_input(const Tensor& x) const {
        if (!x.is4d()) throw validation_error("UNet input must be 4-D [N,C,H,W], got " + x.shape_str());
        if (x.dim(1) != in_channels)
            throw validation_error("UNet input has " + std::to_string(x.dim(1)) + " channels, config wants " +
                                   std::to_string(in_channels));
        if (x.dim(2) % divisor() != 0 || x.dim(3) % divisor() != 0)
            throw validation_error("UNet input " + x.shape_str() + " not divisible by 2^depth = " +
                                   std::to_string(divisor()));
    }
};

// Named weight tensors in canonical (execution) order. Order matters: the
// checkpoint payload and the optimizer iterate it.
struct ModelParams {
    std::vector<std::pair<std::string, Tensor>> items;

    Tensor& at(const std::string& name) {
        for (auto& [k, t] : items)
            if (k == name) return t;
        throw validation_error("ModelParams: no tensor named " + name);
    }
    const Tensor& at(const std::string& name) const {
        for (const auto& [k, t] : items)
            if (k == name) return t;
        throw validation_error("ModelParams: no tensor named " + name);
    }

    std::int64_t total_elements() const {
        std::int64_t n = 0;
        for (const auto& [k, t] : items) n += t.numel();
        return n;
    }

    static ModelParams zeros_like(const ModelParams& other) {
        ModelParams p;
        p.items.reserve(other.items.size());
        for (const auto& [k, t] : other.items) p.items.emplace_back(k, Tensor(t.shape));
        return p;
    }
};

// ---------------------------------------------------------------------------
// Primitive ops. Convolutions use zero same-padding; shapes are trusted by
// callers (the model wires them consistently).
// ---------------------------------------------------------------------------

namespace ops {

// w: [Co,Ci,3,3], b: [Co]; out must be preallocated [N,Co,H,W].
inline void conv3x3_forward(const Tensor& in, const Tensor& w, const Tensor& b, Tensor& out) {
    const std::int64_t N = in.dim(0), Ci = in.dim(1), H = in.dim(2), W = in.dim(3);
    const std::int64_t Co = w.dim(0);
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t co = 0; co < Co; ++co) {
            double* op = out.plane(n, co);
            const double bias = b.data[static_cast<std::size_t>(co)];
            for (std::int64_t i = 0; i < H * W; ++i) op[i] = bias;
            for (std::int64_t ci = 0; ci < Ci; ++ci) {
                const double* ip = in.plane(n, ci);
                const double* wp = w.data.data() + (co * Ci + ci) * 9;
                for (int ky = 0; ky < 3; ++ky) {
                    const std::int64_t dy = ky - 1;
                    const std::int64_t ylo = std::max<std::int64_t>(0, -dy);
                    const std::int64_t yhi = std::min<std::int64_t>(H, H - dy);
                    for (int kx = 0; kx < 3; ++kx) {
                        const std::int64_t dx = kx - 1;
                        const double wv = wp[ky * 3 + kx];
                        const std::int64_t xlo = std::max<std::int64_t>(0, -dx);
                        const std::int64_t xhi = std::min<std::int64_t>(W, W - dx);
                        for (std::int64_t y = ylo; y < yhi; ++y) {
                            double* orow = op + y * W;
                            const double* irow = ip + (y + dy) * W + dx;
                            for (std::int64_t x = xlo; x < xhi; ++x) orow[x] += wv * irow[x];
                        }
                    }
                }
            }
        }
    }
}

// Accumulates into din/dw/db (callers pass zero-initialized tensors).
inline void conv3x3_backward(const Tensor& in, const Tensor& w, const Tensor& dout, Tensor& din, Tensor& dw,
                             Tensor& db) {
    const std::int64_t N = in.dim(0), Ci = in.dim(1), H = in.dim(2), W = in.dim(3);
    const std::int64_t Co = w.dim(0);
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t co = 0; co < Co; ++co) {
            const double* dop = dout.plane(n, co);
            double acc_b = 0.0;
            for (std::int64_t i = 0; i < H * W; ++i) acc_b += dop[i];
            db.data[static_cast<std::size_t>(co)] += acc_b;
            for (std::int64_t ci = 0; ci < Ci; ++ci) {
                const double* ip = in.plane(n, ci);
                double* dip = din.plane(n, ci);
                const double* wp = w.data.data() + (co * Ci + ci) * 9;
                double* dwp = dw.data.data() + (co * Ci + ci) * 9;
                for (int ky = 0; ky < 3; ++ky) {
                    const std::int64_t dy = ky - 1;
                    const std::int64_t ylo = std::max<std::int64_t>(0, -dy);
                    const std::int64_t yhi = std::min<std::int64_t>(H, H - dy);
                    for (int kx = 0; kx < 3; ++kx) {
                        const std::int64_t dx = kx - 1;
                        const double wv = wp[ky * 3 + kx];
                        const std::int64_t xlo = std::max<std::int64_t>(0, -dx);
                        const std::int64_t xhi = std::min<std::int64_t>(W, W - dx);
                        double acc_w = 0.0;
                        for (std::int64_t y = ylo; y < yhi; ++y) {
                            const double* dorow = dop + y * W;
                            const double* irow = ip + (y + dy) * W + dx;
                            double* dirow = dip + (y + dy) * W + dx;
                            for (std::int64_t x = xlo; x < xhi; ++x) {
                                acc_w += dorow[x] * irow[x];
                                dirow[x] += wv * dorow[x];
                            }
                        }
                        dwp[ky * 3 + kx] += acc_w;
                    }
                }
            }
        }
    }
}

inline void relu_inplace(Tensor& t) {
    for (auto& v : t.data)
        if (v < 0.0) v = 0.0;
}

// Gate upstream gradient by the post-ReLU activation.
inline void relu_backward_inplace(Tensor& dgrad, const Tensor& post) {
    for (std::size_t i = 0; i < dgrad.data.size(); ++i)
        if (post.data[i] <= 0.0) dgrad.data[i] = 0.0;
}

// 2x2 max-pool, stride 2. argmax stores 0..3 (dy*2+dx), first maximum in scan
// order so backward is deterministic on ties.
inline void maxpool2x2_forward(const Tensor& in, Tensor& out, std::vector<std::uint8_t>& argmax) {
    const std::int64_t N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
    const std::int64_t Ho = H / 2, Wo = W / 2;
    argmax.resize(static_cast<std::size_t>(N * C * Ho * Wo));
    std::size_t ai = 0;
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t c = 0; c < C; ++c) {
            const double* ip = in.plane(n, c);
            double* op = out.plane(n, c);
            for (std::int64_t y = 0; y < Ho; ++y) {
                for (std::int64_t x = 0; x < Wo; ++x) {
                    const double* base = ip + (2 * y) * W + 2 * x;
                    double best = base[0];
                    std::uint8_t bi = 0;
                    if (base[1] > best) { best = base[1]; bi = 1; }
                    if (base[W] > best) { best = base[W]; bi = 2; }
                    if (base[W + 1] > best) { best = base[W + 1]; bi = 3; }
                    op[y * Wo + x] = best;
                    argmax[ai++] = bi;
                }
            }
        }
    }
}

inline void maxpool2x2_backward(const Tensor& dout, const std::vector<std::uint8_t>& argmax, Tensor& din) {
    const std::int64_t N = dout.dim(0), C = dout.dim(1), Ho = dout.dim(2), Wo = dout.dim(3);
    const std::int64_t W = din.dim(3);
    std::size_t ai = 0;
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t c = 0; c < C; ++c) {
            const double* dop = dout.plane(n, c);
            double* dip = din.plane(n, c);
            for (std::int64_t y = 0; y < Ho; ++y) {
                for (std::int64_t x = 0; x < Wo; ++x) {
                    const std::uint8_t bi = argmax[ai++];
                    dip[(2 * y + (bi >> 1)) * W + 2 * x + (bi & 1)] += dop[y * Wo + x];
                }
            }
        }
    }
}

// Transposed 2x2 convolution, stride 2. w: [Ci,Co,2,2], b: [Co];
// out: [N,Co,2H,2W]. Kernel windows do not overlap at stride 2.
inline void upconv2x2_forward(const Tensor& in, const Tensor& w, const Tensor& b, Tensor& out) {
    const std::int64_t N = in.dim(0), Ci = in.dim(1), H = in.dim(2), W = in.dim(3);
    const std::int64_t Co = w.dim(1);
    const std::int64_t Wo = 2 * W;
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t co = 0; co < Co; ++co) {
            double* op = out.plane(n, co);
            const double bias = b.data[static_cast<std::size_t>(co)];
            for (std::int64_t i = 0; i < 4 * H * W; ++i) op[i] = bias;
            for (std::int64_t ci = 0; ci < Ci; ++ci) {
                const double* ip = in.plane(n, ci);
                const double* wp = w.data.data() + (ci * Co + co) * 4;
                for (std::int64_t y = 0; y < H; ++y) {
                    const double* irow = ip + y * W;
                    double* orow0 = op + (2 * y) * Wo;
                    double* orow1 = orow0 + Wo;
                    for (std::int64_t x = 0; x < W; ++x) {
                        const double v = irow[x];
                        orow0[2 * x] += wp[0] * v;
                        orow0[2 * x + 1] += wp[1] * v;
                        orow1[2 * x] += wp[2] * v;
                        orow1[2 * x + 1] += wp[3] * v;
                    }
                }
            }
        }
    }
}

inline void upconv2x2_backward(const Tensor& in, const Tensor& w, const Tensor& dout, Tensor& din, Tensor& dw,
                               Tensor& db) {
    const std::int64_t N = in.dim(0), Ci = in.dim(1), H = in.dim(2), W = in.dim(3);
    const std::int64_t Co = w.dim(1);
    const std::int64_t Wo = 2 * W;
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t co = 0; co < Co; ++co) {
            const double* dop = dout.plane(n, co);
            double acc_b = 0.0;
            for (std::int64_t i = 0; i < 4 * H * W; ++i) acc_b += dop[i];
            db.data[static_cast<std::size_t>(co)] += acc_b;
            for (std::int64_t ci = 0; ci < Ci; ++ci) {
                const double* ip = in.plane(n, ci);
                double* dip = din.plane(n, ci);
                const double* wp = w.data.data() + (ci * Co + co) * 4;
                double* dwp = dw.data.data() + (ci * Co + co) * 4;
                double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0, acc3 = 0.0;
                for (std::int64_t y = 0; y < H; ++y) {
                    const double* irow = ip + y * W;
                    double* dirow = dip + y * W;
                    const double* dorow0 = dop + (2 * y) * Wo;
                    const double* dorow1 = dorow0 + Wo;
                    for (std::int64_t x = 0; x < W; ++x) {
                        const double g0 = dorow0[2 * x], g1 = dorow0[2 * x + 1];
                        const double g2 = dorow1[2 * x], g3 = dorow1[2 * x + 1];
                        const double v = irow[x];
                        acc0 += g0 * v;
                        acc1 += g1 * v;
                        acc2 += g2 * v;
                        acc3 += g3 * v;
                        dirow[x] += wp[0] * g0 + wp[1] * g1 + wp[2] * g2 + wp[3] * g3;
                    }
                }
                dwp[0] += acc0;
                dwp[1] += acc1;
                dwp[2] += acc2;
                dwp[3] += acc3;
            }
        }
    }
}

// w: [Co,Ci,1,1], b: [Co].
inline void conv1x1_forward(const Tensor& in, const Tensor& w, const Tensor& b, Tensor& out) {
    const std::int64_t N = in.dim(0), Ci = in.dim(1), H = in.dim(2), W = in.dim(3);
    const std::int64_t Co = w.dim(0);
    const std::int64_t HW = H * W;
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t co = 0; co < Co; ++co) {
            double* op = out.plane(n, co);
            const double bias = b.data[static_cast<std::size_t>(co)];
            for (std::int64_t i = 0; i < HW; ++i) op[i] = bias;
            for (std::int64_t ci = 0; ci < Ci; ++ci) {
                const double wv = w.data[static_cast<std::size_t>(co * Ci + ci)];
                const double* ip = in.plane(n, ci);
                for (std::int64_t i = 0; i < HW; ++i) op[i] += wv * ip[i];
            }
        }
    }
}

inline void conv1x1_backward(const Tensor& in, const Tensor& w, const Tensor& dout, Tensor& din, Tensor& dw,
                             Tensor& db) {
    const std::int64_t N = in.dim(0), Ci = in.dim(1), H = in.dim(2), W = in.dim(3);
    const std::int64_t Co = w.dim(0);
    const std::int64_t HW = H * W;
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t co = 0; co < Co; ++co) {
            const double* dop = dout.plane(n, co);
            double acc_b = 0.0;
            for (std::int64_t i = 0; i < HW; ++i) acc_b += dop[i];
            db.data[static_cast<std::size_t>(co)] += acc_b;
            for (std::int64_t ci = 0; ci < Ci; ++ci) {
                const double wv = w.data[static_cast<std::size_t>(co * Ci + ci)];
                const double* ip = in.plane(n, ci);
                double* dip = din.plane(n, ci);
                double acc_w = 0.0;
                for (std::int64_t i = 0; i < HW; ++i) {
                    acc_w += dop[i] * ip[i];
                    dip[i] += wv * dop[i];
                }
                dw.data[static_cast<std::size_t>(co * Ci + ci)] += acc_w;
            }
        }
    }
}

inline void sigmoid_inplace(Tensor& t) {
    for (auto& v : t.data) v = 1.0 / (1.0 + std::exp(-v));
}

// First `a_channels` channels of out come from a, the rest from b.
inline void concat_channels(const Tensor& a, const Tensor& b, Tensor& out) {
    const std::int64_t N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), HW = a.dim(2) * a.dim(3);
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t c = 0; c < Ca; ++c) {
            const double* src = a.plane(n, c);
            double* dst = out.plane(n, c);
            for (std::int64_t i = 0; i < HW; ++i) dst[i] = src[i];
        }
        for (std::int64_t c = 0; c < Cb; ++c) {
            const double* src = b.plane(n, c);
            double* dst = out.plane(n, Ca + c);
            for (std::int64_t i = 0; i < HW; ++i) dst[i] = src[i];
        }
    }
}

inline void split_channels(const Tensor& dcat, Tensor& da, Tensor& db) {
    const std::int64_t N = da.dim(0), Ca = da.dim(1), Cb = db.dim(1), HW = da.dim(2) * da.dim(3);
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t c = 0; c < Ca; ++c) {
            const double* src = dcat.plane(n, c);
            double* dst = da.plane(n, c);
            for (std::int64_t i = 0; i < HW; ++i) dst[i] = src[i];
        }
        for (std::int64_t c = 0; c < Cb; ++c) {
            const double* src = dcat.plane(n, Ca + c);
            double* dst = db.plane(n, c);
            for (std::int64_t i = 0; i < HW; ++i) dst[i] = src[i];
        }
    }
}

}  // namespace ops

// ---------------------------------------------------------------------------
// Parameter bookkeeping
// ---------------------------------------------------------------------------

namespace detail {

struct LayerSpec {
    std::string name;       // base name, e.g. "enc0.conv1"
    std::int64_t c_in;
    std::int64_t c_out;
    int kernel;             // 3, 2 (up-conv) or 1 (head)
};

// Canonical layer enumeration; drives naming, init, counting, checkpointing.
inline std::vector<LayerSpec> layer_specs(const UNetConfig& cfg) {
    cfg.validate();
    std::vector<LayerSpec> specs;
    std::int64_t prev = cfg.in_channels;
    for (int i = 0; i < cfg.depth; ++i) {
        const std::int64_t c = cfg.enc_channels(i);
        specs.push_back({"enc" + std::to_string(i) + ".conv1", prev, c, 3});
        specs.push_back({"enc" + std::to_string(i) + ".conv2", c, c, 3});
        prev = c;
    }
    const std::int64_t cb = cfg.enc_channels(cfg.depth);
    specs.push_back({"bottleneck.conv1", prev, cb, 3});
    specs.push_back({"bottleneck.conv2", cb, cb, 3});
    prev = cb;
    for (int i = cfg.depth - 1; i >= 0; --i) {
        const std::int64_t c = cfg.enc_channels(i);
        specs.push_back({"dec" + std::to_string(i) + ".up", prev, c, 2});
        specs.push_back({"dec" + std::to_string(i) + ".conv1", 2 * c, c, 3});
        specs.push_back({"dec" + std::to_string(i) + ".conv2", c, c, 3});
        prev = c;
    }
    specs.push_back({"head", prev, cfg.out_channels, 1});
    return specs;
}

inline Tensor weight_shape_for(const LayerSpec& s) {
    if (s.kernel == 2) return Tensor({s.c_in, s.c_out, 2, 2});  // transposed-conv layout
    return Tensor({s.c_out, s.c_in, s.kernel, s.kernel});
}

}  // namespace detail

inline std::int64_t count_params(const UNetConfig& cfg) {
    std::int64_t total = 0;
    for (const auto& s : detail::layer_specs(cfg))
        total += static_cast<std::int64_t>(s.kernel) * s.kernel * s.c_in * s.c_out + s.c_out;
    return total;
}

// Kaiming-style scaled uniform: weights ~ U[-sqrt(6/fan_in), +sqrt(6/fan_in)],
// fan_in = kernel^2 * c_in; biases zero. Deterministic in `seed`.
inline ModelParams init_params(const UNetConfig& cfg, std::uint64_t seed) {
    ModelParams params;
    SplitMix64 rng(seed);
    for (const auto& s : detail::layer_specs(cfg)) {
        Tensor w = detail::weight_shape_for(s);
        const double bound = std::sqrt(6.0 / (static_cast<double>(s.kernel) * s.kernel * s.c_in));
        for (auto& v : w.data) v = rng.next_symmetric(bound);
        params.items.emplace_back(s.name + ".w", std::move(w));
        params.items.emplace_back(s.name + ".b", Tensor({s.c_out}));
    }
    return params;
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

// Intermediate activations, kept for backprop and for shape bookkeeping tests.
struct UNetTrace {
    std::vector<Tensor> enc_conv1;    // per level, post conv1+ReLU
    std::vector<Tensor> enc_out;      // per level, post conv block (the skip)
    std::vector<Tensor> pooled;       // per level, post max-pool
    std::vector<std::vector<std::uint8_t>> pool_argmax;
    Tensor bott_conv1;
    Tensor bott_out;
    std::vector<Tensor> dec_up;       // indexed by decoder level i (0..depth-1)
    std::vector<Tensor> dec_cat;
    std::vector<Tensor> dec_conv1;
    std::vector<Tensor> dec_out;
    Tensor head_linear;               // pre-sigmoid
    Tensor output;
};

// Runs the model. Output shape equals input shape; values in (0,1) via the
// sigmoid head.
inline Tensor forward(const ModelParams& params, const UNetConfig& cfg, const Tensor& x,
                      UNetTrace* trace_out = nullptr) {
    cfg.check_input(x);
    const std::int64_t N = x.dim(0);

    UNetTrace local;
    UNetTrace& tr = trace_out ? *trace_out : local;
    tr = UNetTrace{};
    tr.enc_conv1.resize(static_cast<std::size_t>(cfg.depth));
    tr.enc_out.resize(static_cast<std::size_t>(cfg.depth));
    tr.pooled.resize(static_cast<std::size_t>(cfg.depth));
    tr.pool_argmax.resize(static_cast<std::size_t>(cfg.depth));
    tr.dec_up.resize(static_cast<std::size_t>(cfg.depth));
    tr.dec_cat.resize(static_cast<std::size_t>(cfg.depth));
    tr.dec_conv1.resize(static_cast<std::size_t>(cfg.depth));
    tr.dec_out.resize(static_cast<std::size_t>(cfg.depth));

    const Tensor* cur = &x;
    std::int64_t h = x.dim(2), w = x.dim(3);

    for (int i = 0; i < cfg.depth; ++i) {
        const std::int64_t c = cfg.enc_channels(i);
        const std::string base = "enc" + std::to_string(i);
        auto& t1 = tr.enc_conv1[static_cast<std::size_t>(i)];
        t1 = Tensor::zeros4(N, c, h, w);
        ops::conv3x3_forward(*cur, params.at(base + ".conv1.w"), params.at(base + ".conv1.b"), t1);
        ops::relu_inplace(t1);
        auto& t2 = tr.enc_out[static_cast<std::size_t>(i)];
        t2 = Tensor::zeros4(N, c, h, w);
        ops::conv3x3_forward(t1, params.at(base + ".conv2.w"), params.at(base + ".conv2.b"), t2);
        ops::relu_inplace(t2);
        h /= 2;
        w /= 2;
        auto& p = tr.pooled[static_cast<std::size_t>(i)];
        p = Tensor::zeros4(N, c, h, w);
        ops::maxpool2x2_forward(t2, p, tr.pool_argmax[static_cast<std::size_t>(i)]);
        cur = &p;
    }

    const std::int64_t cb = cfg.enc_channels(cfg.depth);
    tr.bott_conv1 = Tensor::zeros4(N, cb, h, w);
    ops::conv3x3_forward(*cur, params.at("bottleneck.conv1.w"), params.at("bottleneck.conv1.b"), tr.bott_conv1);
    ops::relu_inplace(tr.bott_conv1);
    tr.bott_out = Tensor::zeros4(N, cb, h, w);
    ops::conv3x3_forward(tr.bott_conv1, params.at("bottleneck.conv2.w"), params.at("bottleneck.conv2.b"),
                         tr.bott_out);
    ops::relu_inplace(tr.bott_out);
    cur = &tr.bott_out;

    for (int i = cfg.depth - 1; i >= 0; --i) {
        const std::int64_t c = cfg.enc_channels(i);
        const std::string base = "dec" + std::to_string(i);
        h *= 2;
        w *= 2;
        auto& up = tr.dec_up[static_cast<std::size_t>(i)];
        up = Tensor::zeros4(N, c, h, w);
        ops::upconv2x2_forward(*cur, params.at(base + ".up.w"), params.at(base + ".up.b"), up);
        auto& cat = tr.dec_cat[static_cast<std::size_t>(i)];
        cat = Tensor::zeros4(N, 2 * c, h, w);
        ops::concat_channels(up, tr.enc_out[static_cast<std::size_t>(i)], cat);
        auto& d1 = tr.dec_conv1[static_cast<std::size_t>(i)];
        d1 = Tensor::zeros4(N, c, h, w);
        ops::conv3x3_forward(cat, params.at(base + ".conv1.w"), params.at(base + ".conv1.b"), d1);
        ops::relu_inplace(d1);
        auto& d2 = tr.dec_out[static_cast<std::size_t>(i)];
        d2 = Tensor::zeros4(N, c, h, w);
        ops::conv3x3_forward(d1, params.at(base + ".conv2.w"), params.at(base + ".conv2.b"), d2);
        ops::relu_inplace(d2);
        cur = &d2;
    }

    tr.head_linear = Tensor::zeros4(N, cfg.out_channels, h, w);
    ops::conv1x1_forward(*cur, params.at("head.w"), params.at("head.b"), tr.head_linear);
    tr.output = tr.head_linear;
    ops::sigmoid_inplace(tr.output);
    return tr.output;
}

// ---------------------------------------------------------------------------
// Loss + exact backprop
// ---------------------------------------------------------------------------

struct LossGrads {
    double loss = 0.0;
    ModelParams grads;
};

// loss = sum_i w_i (y_i - t_i)^2 / sum_i w_i, with w = 1 everywhere when
// `weights` is null (plain mean over N*C*H*W elements). Gradients are exact
// backpropagation through the architecture.
inline LossGrads loss_and_grads(const ModelParams& params, const UNetConfig& cfg, const Tensor& x,
                                const Tensor& target, const Tensor* weights = nullptr) {
    require_same_shape(x, target, "loss_and_grads");
    if (weights) require_same_shape(x, *weights, "loss_and_grads(weights)");

    UNetTrace tr;
    const Tensor y = forward(params, cfg, x, &tr);

    LossGrads out;
    out.grads = ModelParams::zeros_like(params);

    // Loss and dL/dy.
    double wsum = 0.0;
    double acc = 0.0;
    Tensor dy(y.shape);
    if (weights) {
        for (std::size_t i = 0; i < y.data.size(); ++i) wsum += weights->data[i];
        if (wsum <= 0.0) throw validation_error("loss_and_grads: weight sum must be positive");
        for (std::size_t i = 0; i < y.data.size(); ++i) {
            const double d = y.data[i] - target.data[i];
            acc += weights->data[i] * d * d;
            dy.data[i] = 2.0 * weights->data[i] * d / wsum;
        }
    } else {
        wsum = static_cast<double>(y.numel());
        for (std::size_t i = 0; i < y.data.size(); ++i) {
            const double d = y.data[i] - target.data[i];
            acc += d * d;
            dy.data[i] = 2.0 * d / wsum;
        }
    }
    out.loss = acc / wsum;

    // Sigmoid backward: dz = dy * y * (1 - y).
    for (std::size_t i = 0; i < dy.data.size(); ++i) dy.data[i] *= y.data[i] * (1.0 - y.data[i]);

    const std::int64_t N = x.dim(0);

    // Head.
    const Tensor& head_in = cfg.depth > 0 ? tr.dec_out[0] : tr.bott_out;
    Tensor dcur(head_in.shape);
    ops::conv1x1_backward(head_in, params.at("head.w"), dy, dcur, out.grads.at("head.w"),
                          out.grads.at("head.b"));

    // Decoder levels in reverse execution order (0 .. depth-1), accumulating
    // skip gradients for the encoder sweep.
    std::vector<Tensor> dskip(static_cast<std::size_t>(cfg.depth));
    for (int i = 0; i < cfg.depth; ++i) {
        const std::string base = "dec" + std::to_string(i);
        const auto idx = static_cast<std::size_t>(i);
        // conv2
        ops::relu_backward_inplace(dcur, tr.dec_out[idx]);
        Tensor dd1(tr.dec_conv1[idx].shape);
        ops::conv3x3_backward(tr.dec_conv1[idx], params.at(base + ".conv2.w"), dcur, dd1,
                              out.grads.at(base + ".conv2.w"), out.grads.at(base + ".conv2.b"));
        // conv1
        ops::relu_backward_inplace(dd1, tr.dec_conv1[idx]);
        Tensor dcat(tr.dec_cat[idx].shape);
        ops::conv3x3_backward(tr.dec_cat[idx], params.at(base + ".conv1.w"), dd1, dcat,
                              out.grads.at(base + ".conv1.w"), out.grads.at(base + ".conv1.b"));
        // split concat gradient
        Tensor dup(tr.dec_up[idx].shape);
        dskip[idx] = Tensor(tr.enc_out[idx].shape);
        ops::split_channels(dcat, dup, dskip[idx]);
        // up-conv: its input is the next-deeper decoder output, or the bottleneck.
        const Tensor& up_in = (i == cfg.depth - 1) ? tr.bott_out : tr.dec_out[idx + 1];
        Tensor dprev(up_in.shape);
        ops::upconv2x2_backward(up_in, params.at(base + ".up.w"), dup, dprev, out.grads.at(base + ".up.w"),
                                out.grads.at(base + ".up.b"));
        dcur = std::move(dprev);
    }

    // Bottleneck.
    ops::relu_backward_inplace(dcur, tr.bott_out);
    Tensor db1(tr.bott_conv1.shape);
    ops::conv3x3_backward(tr.bott_conv1, params.at("bottleneck.conv2.w"), dcur, db1,
                          out.grads.at("bottleneck.conv2.w"), out.grads.at("bottleneck.conv2.b"));
    ops::relu_backward_inplace(db1, tr.bott_conv1);
    const Tensor& bott_in = tr.pooled[static_cast<std::size_t>(cfg.depth - 1)];
    Tensor dpool(bott_in.shape);
    ops::conv3x3_backward(bott_in, params.at("bottleneck.conv1.w"), db1, dpool,
                          out.grads.at("bottleneck.conv1.w"), out.grads.at("bottleneck.conv1.b"));

    // Encoder levels deepest-first. dpool is the gradient at pooled[i];
    // un-pool, add the skip gradient, then walk the conv block.
    for (int i = cfg.depth - 1; i >= 0; --i) {
        const std::string base = "enc" + std::to_string(i);
        const auto idx = static_cast<std::size_t>(i);
        Tensor dpre(tr.enc_out[idx].shape);
        ops::maxpool2x2_backward(dpool, tr.pool_argmax[idx], dpre);
        for (std::size_t k = 0; k < dpre.data.size(); ++k) dpre.data[k] += dskip[idx].data[k];
        // conv2
        ops::relu_backward_inplace(dpre, tr.enc_out[idx]);
        Tensor dc1(tr.enc_conv1[idx].shape);
        ops::conv3x3_backward(tr.enc_conv1[idx], params.at(base + ".conv2.w"), dpre, dc1,
                              out.grads.at(base + ".conv2.w"), out.grads.at(base + ".conv2.b"));
        // conv1
        ops::relu_backward_inplace(dc1, tr.enc_conv1[idx]);
        const Tensor& level_in = (i == 0) ? x : tr.pooled[idx - 1];
        Tensor dlin(level_in.shape);
        ops::conv3x3_backward(level_in, params.at(base + ".conv1.w"), dc1, dlin,
                              out.grads.at(base + ".conv1.w"), out.grads.at(base + ".conv1.b"));
        dpool = std::move(dlin);  // gradient at pooled[i-1] (or at x when i==0, discarded)
    }

    (void)N;
    return out;
}

// Forward-only loss, for validation passes.
inline double loss_only(const ModelParams& params, const UNetConfig& cfg, const Tensor& x, const Tensor& target,
                        const Tensor* weights = nullptr) {
    require_same_shape(x, target, "loss_only");
    const Tensor y = forward(params, cfg, x);
    double wsum = 0.0, acc = 0.0;
    if (weights) {
        for (std::size_t i = 0; i < y.data.size(); ++i) {
            wsum += weights->data[i];
            const double d = y.data[i] - target.data[i];
            acc += weights->data[i] * d * d;
        }
        if (wsum <= 0.0) throw validation_error("loss_only: weight sum must be positive");
    } else {
        wsum = static_cast<double>(y.numel());
        for (std::size_t i = 0; i < y.data.size(); ++i) {
            const double d = y.data[i] - target.data[i];
            acc += d * d;
        }
    }
    return acc / wsum;
}

}  // namespace lunar
