#pragma once

// 1D convolution and its exact adjoint (transposed convolution).
//
// Three raw kernels cover forward and backward of both directions:
//   gather : out[b,co,t'] += sum_{ci,w} k[co,ci,w] * in[b,ci,t'*s+w-p]
//   scatter: out[b,ci,t'*s+w-p] += sum_{co,w} k[co,ci,w] * in[b,co,t']
//   kgrad  : dk[co,ci,w] += sum_{b,t'} y[b,co,t'] * x[b,ci,t'*s+w-p]
// conv1d forward is gather; its input gradient is scatter; conv1d_transpose
// forward is scatter with the same kernel tensor, so <conv(x,k), y> ==
// <x, convT(y,k)> holds bit for bit and decoder upsampling mirrors encoder
// downsampling by construction.

#include <vector>

#include "ecgen/tensor.hpp"

namespace ecgen {
namespace detail {

struct ConvDims {
    size_t B, Cin, T, Cout, W;
    int stride, pad;
    size_t Tout;
};

inline void conv_gather(const double* x, const double* k, double* out, size_t B, size_t Cin,
                        size_t T, size_t Cout, size_t W, int s, int p, size_t To) {
    for (size_t b = 0; b < B; ++b)
        for (size_t co = 0; co < Cout; ++co) {
            double* orow = out + (b * Cout + co) * To;
            for (size_t ci = 0; ci < Cin; ++ci) {
                const double* xrow = x + (b * Cin + ci) * T;
                const double* krow = k + (co * Cin + ci) * W;
                for (size_t w = 0; w < W; ++w) {
                    double kv = krow[w];
                    if (kv == 0.0) continue;
                    // valid t' range: 0 <= t'*s + w - p <= T-1
                    long lo_num = p - static_cast<long>(w);
                    size_t t0 = lo_num <= 0 ? 0 : static_cast<size_t>((lo_num + s - 1) / s);
                    long hi_num = static_cast<long>(T - 1) + p - static_cast<long>(w);
                    if (hi_num < 0) continue;
                    size_t t1 = std::min(To - 1, static_cast<size_t>(hi_num) / s);
                    const double* xs = xrow + static_cast<long>(t0) * s + static_cast<long>(w) - p;
                    if (s == 1) {
                        for (size_t t = t0; t <= t1; ++t) orow[t] += kv * xs[t - t0];
                    } else {
                        for (size_t t = t0; t <= t1; ++t) orow[t] += kv * xs[(t - t0) * s];
                    }
                }
            }
        }
}

inline void conv_scatter(const double* y, const double* k, double* out, size_t B, size_t Cin,
                         size_t T, size_t Cout, size_t W, int s, int p, size_t To) {
    for (size_t b = 0; b < B; ++b)
        for (size_t ci = 0; ci < Cin; ++ci) {
            double* orow = out + (b * Cin + ci) * T;
            for (size_t co = 0; co < Cout; ++co) {
                const double* yrow = y + (b * Cout + co) * To;
                const double* krow = k + (co * Cin + ci) * W;
                for (size_t w = 0; w < W; ++w) {
                    double kv = krow[w];
                    if (kv == 0.0) continue;
                    long lo_num = p - static_cast<long>(w);
                    size_t t0 = lo_num <= 0 ? 0 : static_cast<size_t>((lo_num + s - 1) / s);
                    long hi_num = static_cast<long>(T - 1) + p - static_cast<long>(w);
                    if (hi_num < 0) continue;
                    size_t t1 = std::min(To - 1, static_cast<size_t>(hi_num) / s);
                    double* os = orow + static_cast<long>(t0) * s + static_cast<long>(w) - p;
                    if (s == 1) {
                        for (size_t t = t0; t <= t1; ++t) os[t - t0] += kv * yrow[t];
                    } else {
                        for (size_t t = t0; t <= t1; ++t) os[(t - t0) * s] += kv * yrow[t];
                    }
                }
            }
        }
}

inline void conv_kgrad(const double* x, const double* y, double* dk, size_t B, size_t Cin,
                       size_t T, size_t Cout, size_t W, int s, int p, size_t To) {
    for (size_t b = 0; b < B; ++b)
        for (size_t co = 0; co < Cout; ++co) {
            const double* yrow = y + (b * Cout + co) * To;
            for (size_t ci = 0; ci < Cin; ++ci) {
                const double* xrow = x + (b * Cin + ci) * T;
                double* krow = dk + (co * Cin + ci) * W;
                for (size_t w = 0; w < W; ++w) {
                    long lo_num = p - static_cast<long>(w);
                    size_t t0 = lo_num <= 0 ? 0 : static_cast<size_t>((lo_num + s - 1) / s);
                    long hi_num = static_cast<long>(T - 1) + p - static_cast<long>(w);
                    if (hi_num < 0) continue;
                    size_t t1 = std::min(To - 1, static_cast<size_t>(hi_num) / s);
                    const double* xs = xrow + static_cast<long>(t0) * s + static_cast<long>(w) - p;
                    double acc = 0;
                    if (s == 1) {
                        for (size_t t = t0; t <= t1; ++t) acc += yrow[t] * xs[t - t0];
                    } else {
                        for (size_t t = t0; t <= t1; ++t) acc += yrow[t] * xs[(t - t0) * s];
                    }
                    krow[w] += acc;
                }
            }
        }
}

inline ConvDims check_conv_dims(const Tensor& x, const Tensor& k, int stride, int pad,
                                const char* who) {
    if (x.rank() != 3)
        throw ContractError(strf("%s: input must be [B,C,T], got %s", who, shape_str(x.shape()).c_str()));
    if (k.rank() != 3)
        throw ContractError(strf("%s: kernel must be [Cout,Cin,W], got %s", who, shape_str(k.shape()).c_str()));
    if (stride < 1) throw ContractError(strf("%s: stride %d < 1", who, stride));
    if (pad < 0) throw ContractError(strf("%s: padding %d < 0", who, pad));
    return ConvDims{x.dim(0), 0, x.dim(2), 0, k.dim(2), stride, pad, 0};
}

}  // namespace detail

// x: [B,Cin,T], k: [Cout,Cin,W] -> [B,Cout,T'], T' = floor((T+2p-W)/s) + 1.
inline Tensor conv1d(const Tensor& x, const Tensor& k, int stride = 1, int padding = 0) {
    auto d = detail::check_conv_dims(x, k, stride, padding, "conv1d");
    d.Cin = x.dim(1);
    d.Cout = k.dim(0);
    if (k.dim(1) != d.Cin)
        throw ContractError(strf("conv1d: input has %zu channels (axis 1) but kernel expects %zu (axis 1)",
                                 d.Cin, k.dim(1)));
    if (d.W > d.T + 2 * static_cast<size_t>(padding))
        throw ContractError(strf("conv1d: kernel width %zu exceeds padded length %zu (input axis 2)",
                                 d.W, d.T + 2 * padding));
    d.Tout = (d.T + 2 * padding - d.W) / stride + 1;
    std::vector<double> out(d.B * d.Cout * d.Tout, 0.0);
    detail::conv_gather(x.data().data(), k.data().data(), out.data(), d.B, d.Cin, d.T, d.Cout,
                        d.W, stride, padding, d.Tout);
    auto xn = x.node(), kn = k.node();
    return detail::make_op({d.B, d.Cout, d.Tout}, std::move(out), {xn, kn}, [d](detail::Node& self) {
        detail::Node& X = *self.parents[0];
        detail::Node& K = *self.parents[1];
        if (X.requires_grad) {
            X.ensure_grad();
            detail::conv_scatter(self.grad.data(), K.value.data(), X.grad.data(), d.B, d.Cin,
                                 d.T, d.Cout, d.W, d.stride, d.pad, d.Tout);
        }
        if (K.requires_grad) {
            K.ensure_grad();
            detail::conv_kgrad(X.value.data(), self.grad.data(), K.grad.data(), d.B, d.Cin, d.T,
                               d.Cout, d.W, d.stride, d.pad, d.Tout);
        }
    });
}

// Exact adjoint of conv1d with the same kernel tensor.
// x: [B,Cout,T'], k: [Cout,Cin,W] -> [B,Cin,T], T = (T'-1)*s - 2p + W.
inline Tensor conv1d_transpose(const Tensor& x, const Tensor& k, int stride = 1, int padding = 0) {
    auto d = detail::check_conv_dims(x, k, stride, padding, "conv1d_transpose");
    d.Cout = k.dim(0);
    d.Cin = k.dim(1);
    if (x.dim(1) != d.Cout)
        throw ContractError(strf("conv1d_transpose: input has %zu channels (axis 1) but kernel expects %zu (axis 0)",
                                 x.dim(1), d.Cout));
    long tlong = static_cast<long>(x.dim(2) - 1) * stride - 2 * padding + static_cast<long>(d.W);
    if (tlong < 1)
        throw ContractError(strf("conv1d_transpose: output length %ld < 1 (input axis 2)", tlong));
    d.Tout = x.dim(2);  // T' of the adjoint pair
    d.T = static_cast<size_t>(tlong);
    std::vector<double> out(d.B * d.Cin * d.T, 0.0);
    detail::conv_scatter(x.data().data(), k.data().data(), out.data(), d.B, d.Cin, d.T, d.Cout,
                         d.W, stride, padding, d.Tout);
    auto xn = x.node(), kn = k.node();
    return detail::make_op({d.B, d.Cin, d.T}, std::move(out), {xn, kn}, [d](detail::Node& self) {
        detail::Node& X = *self.parents[0];
        detail::Node& K = *self.parents[1];
        if (X.requires_grad) {
            X.ensure_grad();
            detail::conv_gather(self.grad.data(), K.value.data(), X.grad.data(), d.B, d.Cin, d.T,
                                d.Cout, d.W, d.stride, d.pad, d.Tout);
        }
        if (K.requires_grad) {
            K.ensure_grad();
            detail::conv_kgrad(self.grad.data(), X.value.data(), K.grad.data(), d.B, d.Cin, d.T,
                               d.Cout, d.W, d.stride, d.pad, d.Tout);
        }
    });
}

// Per-channel bias broadcast over batch and time: x [B,C,T] + b [C].
inline Tensor bias_add(const Tensor& x, const Tensor& b) {
    if (x.rank() != 3 || b.size() != x.dim(1))
        throw ContractError(strf("bias_add: bias %s does not match channels of %s",
                                 shape_str(b.shape()).c_str(), shape_str(x.shape()).c_str()));
    return add(x, reshape(b, {1, b.size(), 1}));
}

}  // namespace ecgen
