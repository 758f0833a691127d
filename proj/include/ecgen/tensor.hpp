#pragma once

// Dense float64 tensor with tape-based reverse-mode autodiff.
//
// Every operation records its parents and a backward closure on the node it
// produces; backward(loss) walks the graph once in reverse topological order.
// A recorded graph is single-use: a second backward through any of its nodes
// raises ContractError. Leaf parameters keep their gradient buffers across
// backward calls and accumulate until zero_grad().

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "ecgen/common.hpp"

namespace ecgen {

using Shape = std::vector<size_t>;

inline size_t shape_numel(const Shape& s) {
    size_t n = 1;
    for (size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // allocated lazily; kept for leaves, freed for interior nodes
    bool requires_grad = false;
    bool leaf = false;
    bool consumed = false;  // backward already ran through this node
    std::string name;       // parameters only
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

using NodePtr = std::shared_ptr<Node>;

// Broadcast plan for elementwise binary ops, numpy-style (shapes right-aligned,
// each axis equal or 1). Normalized to fixed rank 4.
constexpr size_t kMaxRank = 4;

struct BcastPlan {
    Shape out_shape;
    std::array<size_t, kMaxRank> dim{};
    std::array<size_t, kMaxRank> sa{};  // element strides into a (0 on broadcast axes)
    std::array<size_t, kMaxRank> sb{};
    bool same_shape = false;
};

inline BcastPlan make_bcast_plan(const Shape& a, const Shape& b) {
    if (a.size() > kMaxRank || b.size() > kMaxRank)
        throw ContractError(strf("broadcast: rank > %zu unsupported", kMaxRank));
    BcastPlan p;
    if (a == b) {
        p.same_shape = true;
        p.out_shape = a;
        return p;
    }
    size_t rank = std::max(a.size(), b.size());
    std::array<size_t, kMaxRank> da{}, db{};
    da.fill(1);
    db.fill(1);
    for (size_t i = 0; i < a.size(); ++i) da[kMaxRank - a.size() + i] = a[i];
    for (size_t i = 0; i < b.size(); ++i) db[kMaxRank - b.size() + i] = b[i];
    Shape out(rank);
    for (size_t i = 0; i < kMaxRank; ++i) {
        size_t xa = da[i], xb = db[i];
        if (xa != xb && xa != 1 && xb != 1)
            throw ContractError(strf("broadcast: incompatible axis %zd (%zu vs %zu), shapes %s and %s",
                                     static_cast<ssize_t>(i) - static_cast<ssize_t>(kMaxRank - rank),
                                     xa, xb, shape_str(a).c_str(), shape_str(b).c_str()));
        p.dim[i] = std::max(xa, xb);
    }
    // element strides, right to left
    size_t ra = 1, rb = 1;
    for (size_t i = kMaxRank; i-- > 0;) {
        p.sa[i] = (da[i] == 1 && p.dim[i] != 1) ? 0 : ra;
        p.sb[i] = (db[i] == 1 && p.dim[i] != 1) ? 0 : rb;
        ra *= da[i];
        rb *= db[i];
    }
    for (size_t i = 0; i < rank; ++i) out[i] = p.dim[kMaxRank - rank + i];
    p.out_shape = out;
    return p;
}

// f(ai, bi, oi) applied over the whole broadcast domain.
template <class F>
inline void bcast_apply(const BcastPlan& p, F&& f) {
    size_t o = 0;
    for (size_t i0 = 0; i0 < p.dim[0]; ++i0)
        for (size_t i1 = 0; i1 < p.dim[1]; ++i1)
            for (size_t i2 = 0; i2 < p.dim[2]; ++i2) {
                size_t abase = i0 * p.sa[0] + i1 * p.sa[1] + i2 * p.sa[2];
                size_t bbase = i0 * p.sb[0] + i1 * p.sb[1] + i2 * p.sb[2];
                for (size_t i3 = 0; i3 < p.dim[3]; ++i3, ++o)
                    f(abase + i3 * p.sa[3], bbase + i3 * p.sb[3], o);
            }
}

}  // namespace detail

// Inference scope: while alive, new ops record no tape (no parents, no
// backward), so intermediates free as their handles go out of scope.
struct NoGradGuard {
    bool prev;
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

class Tensor {
public:
    Tensor() = default;

    static Tensor from(Shape shape, std::vector<double> data) {
        if (shape_numel(shape) != data.size())
            throw ContractError(strf("tensor: shape %s does not match %zu values",
                                     shape_str(shape).c_str(), data.size()));
        auto n = std::make_shared<detail::Node>();
        n->shape = std::move(shape);
        n->value = std::move(data);
        return Tensor(std::move(n));
    }

    static Tensor zeros(Shape shape) {
        size_t n = shape_numel(shape);
        return from(std::move(shape), std::vector<double>(n, 0.0));
    }

    static Tensor full(Shape shape, double v) {
        size_t n = shape_numel(shape);
        return from(std::move(shape), std::vector<double>(n, v));
    }

    static Tensor scalar(double v) { return from({}, {v}); }

    // Trainable leaf: participates in the tape, keeps a zeroed grad buffer.
    static Tensor param(Shape shape, std::vector<double> data, std::string name = {}) {
        Tensor t = from(std::move(shape), std::move(data));
        t.node_->requires_grad = true;
        t.node_->leaf = true;
        t.node_->name = std::move(name);
        t.node_->ensure_grad();
        return t;
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    size_t size() const { return node_->value.size(); }
    size_t dim(size_t i) const { return node_->shape.at(i); }
    size_t rank() const { return node_->shape.size(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    const std::string& name() const { return node_->name; }

    std::span<const double> data() const { return node_->value; }
    // Direct writes are for leaves and constants only; mutating an interior
    // node would desynchronize the recorded graph.
    std::span<double> mutable_data() { return node_->value; }

    double item() const {
        if (size() != 1)
            throw ContractError(strf("item: tensor %s is not scalar", shape_str(shape()).c_str()));
        return node_->value[0];
    }

    double at(std::initializer_list<size_t> idx) const {
        size_t off = 0;
        size_t i = 0;
        for (size_t v : idx) {
            off = off * node_->shape[i] + v;
            ++i;
        }
        return node_->value[off];
    }

    bool grad_allocated() const { return node_ && node_->grad.size() == node_->value.size(); }

    // Gradient w.r.t. this tensor. Zero for leaves never reached by backward.
    std::span<const double> grad() const {
        if (!grad_allocated())
            throw ContractError(strf("grad: no gradient buffer on '%s'", node_->name.c_str()));
        return node_->grad;
    }

    void zero_grad() {
        node_->ensure_grad();
        std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
    }

    bool all_finite() const {
        for (double v : node_->value)
            if (!std::isfinite(v)) return false;
        return true;
    }

    detail::NodePtr node() const { return node_; }
    explicit Tensor(detail::NodePtr n) : node_(std::move(n)) {}

private:
    detail::NodePtr node_;
};

namespace detail {

inline thread_local bool g_no_grad = false;

inline Tensor make_op(Shape shape, std::vector<double> value, std::vector<NodePtr> parents,
                      std::function<void(Node&)> backward) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    bool rg = false;
    if (!g_no_grad)
        for (const auto& p : parents)
            if (p->requires_grad) rg = true;
    if (rg) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backward = std::move(backward);
    }
    return Tensor(std::move(n));
}

inline void accumulate(Node& p, size_t idx, double v) {
    p.ensure_grad();
    p.grad[idx] += v;
}

}  // namespace detail

inline NoGradGuard::NoGradGuard() : prev(detail::g_no_grad) { detail::g_no_grad = true; }
inline NoGradGuard::~NoGradGuard() { detail::g_no_grad = prev; }

// ---------------------------------------------------------------------------
// Elementwise binary ops with broadcasting
// ---------------------------------------------------------------------------

namespace detail {

template <class Fwd, class Bwd>
inline Tensor binary_op(const Tensor& a, const Tensor& b, Fwd fwd, Bwd bwd) {
    BcastPlan plan = make_bcast_plan(a.shape(), b.shape());
    std::vector<double> out;
    const auto& av = a.node()->value;
    const auto& bv = b.node()->value;
    if (plan.same_shape) {
        out.resize(av.size());
        for (size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bv[i]);
    } else {
        out.resize(shape_numel(plan.out_shape));
        bcast_apply(plan, [&](size_t ai, size_t bi, size_t oi) { out[oi] = fwd(av[ai], bv[bi]); });
    }
    NodePtr an = a.node(), bn = b.node();
    return make_op(plan.out_shape, std::move(out), {an, bn}, [an, bn, plan, bwd](Node& self) {
        Node& A = *self.parents[0];
        Node& B = *self.parents[1];
        bool ga = A.requires_grad, gb = B.requires_grad;
        if (ga) A.ensure_grad();
        if (gb) B.ensure_grad();
        if (plan.same_shape) {
            for (size_t i = 0; i < self.grad.size(); ++i) {
                auto [da, db] = bwd(A.value[i], B.value[i]);
                if (ga) A.grad[i] += self.grad[i] * da;
                if (gb) B.grad[i] += self.grad[i] * db;
            }
        } else {
            bcast_apply(plan, [&](size_t ai, size_t bi, size_t oi) {
                auto [da, db] = bwd(A.value[ai], B.value[bi]);
                if (ga) A.grad[ai] += self.grad[oi] * da;
                if (gb) B.grad[bi] += self.grad[oi] * db;
            });
        }
    });
}

struct Duo {
    double a, b;
};

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
    return detail::binary_op(
        a, b, [](double x, double y) { return x + y; },
        [](double, double) { return detail::Duo{1.0, 1.0}; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    return detail::binary_op(
        a, b, [](double x, double y) { return x - y; },
        [](double, double) { return detail::Duo{1.0, -1.0}; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    return detail::binary_op(
        a, b, [](double x, double y) { return x * y; },
        [](double x, double y) { return detail::Duo{y, x}; });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
    return detail::binary_op(
        a, b, [](double x, double y) { return x / y; },
        [](double x, double y) { return detail::Duo{1.0 / y, -x / (y * y)}; });
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

// ---------------------------------------------------------------------------
// Elementwise unary ops
// ---------------------------------------------------------------------------

namespace detail {

// dfn(x, y) returns dy/dx given input x and output y.
template <class Fwd, class Dfn>
inline Tensor unary_op(const Tensor& a, Fwd fwd, Dfn dfn) {
    const auto& av = a.node()->value;
    std::vector<double> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
    NodePtr an = a.node();
    Tensor t = make_op(a.shape(), std::move(out), {an}, [dfn](Node& self) {
        Node& A = *self.parents[0];
        A.ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
            A.grad[i] += self.grad[i] * dfn(A.value[i], self.value[i]);
    });
    return t;
}

inline double sigmoid_scalar(double x) {
    if (x >= 0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

inline double softplus_scalar(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); }

}  // namespace detail

inline Tensor neg(const Tensor& a) {
    return detail::unary_op(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}
inline Tensor operator-(const Tensor& a) { return neg(a); }

inline Tensor exp(const Tensor& a) {
    return detail::unary_op(a, [](double x) { return std::exp(x); },
                            [](double, double y) { return y; });
}

inline Tensor log(const Tensor& a) {
    return detail::unary_op(a, [](double x) { return std::log(x); },
                            [](double x, double) { return 1.0 / x; });
}

// log with log(0) = -inf and zero subgradient there (mixture components with
// no mass contribute nothing; the caller checks that some component has mass).
inline Tensor safe_log(const Tensor& a) {
    return detail::unary_op(
        a, [](double x) { return x > 0.0 ? std::log(x) : -std::numeric_limits<double>::infinity(); },
        [](double x, double) { return x > 0.0 ? 1.0 / x : 0.0; });
}

inline Tensor sigmoid(const Tensor& a) {
    return detail::unary_op(a, [](double x) { return detail::sigmoid_scalar(x); },
                            [](double, double y) { return y * (1.0 - y); });
}

inline Tensor tanh(const Tensor& a) {
    return detail::unary_op(a, [](double x) { return std::tanh(x); },
                            [](double, double y) { return 1.0 - y * y; });
}

inline Tensor softplus(const Tensor& a) {
    return detail::unary_op(a, [](double x) { return detail::softplus_scalar(x); },
                            [](double x, double) { return detail::sigmoid_scalar(x); });
}

inline Tensor swish(const Tensor& a) {
    return detail::unary_op(
        a, [](double x) { return x * detail::sigmoid_scalar(x); },
        [](double x, double) {
            double s = detail::sigmoid_scalar(x);
            return s + x * s * (1.0 - s);
        });
}

inline Tensor relu(const Tensor& a) {
    return detail::unary_op(a, [](double x) { return x > 0.0 ? x : 0.0; },
                            [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Tensor square(const Tensor& a) {
    return detail::unary_op(a, [](double x) { return x * x; },
                            [](double x, double) { return 2.0 * x; });
}

inline Tensor clamp(const Tensor& a, double lo, double hi) {
    return detail::unary_op(
        a, [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
        [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

inline Tensor scale(const Tensor& a, double c) {
    return detail::unary_op(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

inline Tensor shift(const Tensor& a, double c) {
    return detail::unary_op(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

inline Tensor operator*(const Tensor& a, double c) { return scale(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }
inline Tensor operator+(const Tensor& a, double c) { return shift(a, c); }
inline Tensor operator+(double c, const Tensor& a) { return shift(a, c); }
inline Tensor operator-(const Tensor& a, double c) { return shift(a, -c); }
inline Tensor operator-(double c, const Tensor& a) { return shift(neg(a), c); }

// ---------------------------------------------------------------------------
// Reductions and shape ops
// ---------------------------------------------------------------------------

namespace detail {

struct AxisSplit {
    size_t outer, n, inner;
};

inline AxisSplit axis_split(const Shape& s, size_t axis) {
    if (axis >= s.size())
        throw ContractError(strf("axis %zu out of range for shape %s", axis, shape_str(s).c_str()));
    AxisSplit sp{1, s[axis], 1};
    for (size_t i = 0; i < axis; ++i) sp.outer *= s[i];
    for (size_t i = axis + 1; i < s.size(); ++i) sp.inner *= s[i];
    return sp;
}

}  // namespace detail

inline Tensor sum(const Tensor& a) {
    double s = 0;
    for (double v : a.data()) s += v;
    auto an = a.node();
    return detail::make_op({}, {s}, {an}, [](detail::Node& self) {
        detail::Node& A = *self.parents[0];
        A.ensure_grad();
        double g = self.grad[0];
        for (double& v : A.grad) v += g;
    });
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

// Sum over one axis, keeping it as size 1.
inline Tensor sum_axis(const Tensor& a, size_t axis) {
    auto sp = detail::axis_split(a.shape(), axis);
    Shape os = a.shape();
    os[axis] = 1;
    std::vector<double> out(sp.outer * sp.inner, 0.0);
    const auto& av = a.node()->value;
    for (size_t o = 0; o < sp.outer; ++o)
        for (size_t k = 0; k < sp.n; ++k) {
            const double* src = av.data() + (o * sp.n + k) * sp.inner;
            double* dst = out.data() + o * sp.inner;
            for (size_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
        }
    auto an = a.node();
    return detail::make_op(os, std::move(out), {an}, [sp](detail::Node& self) {
        detail::Node& A = *self.parents[0];
        A.ensure_grad();
        for (size_t o = 0; o < sp.outer; ++o)
            for (size_t k = 0; k < sp.n; ++k) {
                double* dst = A.grad.data() + (o * sp.n + k) * sp.inner;
                const double* src = self.grad.data() + o * sp.inner;
                for (size_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
            }
    });
}

inline Tensor mean_axis(const Tensor& a, size_t axis) {
    return scale(sum_axis(a, axis), 1.0 / static_cast<double>(a.shape()[axis]));
}

// Numerically stable log-sum-exp over one axis (kept as size 1).
// Backward uses softmax weights; -inf entries contribute zero.
inline Tensor logsumexp(const Tensor& a, size_t axis) {
    auto sp = detail::axis_split(a.shape(), axis);
    Shape os = a.shape();
    os[axis] = 1;
    std::vector<double> out(sp.outer * sp.inner);
    const auto& av = a.node()->value;
    for (size_t o = 0; o < sp.outer; ++o)
        for (size_t i = 0; i < sp.inner; ++i) {
            double m = -std::numeric_limits<double>::infinity();
            for (size_t k = 0; k < sp.n; ++k) m = std::max(m, av[(o * sp.n + k) * sp.inner + i]);
            double acc = 0;
            if (std::isfinite(m)) {
                for (size_t k = 0; k < sp.n; ++k) acc += std::exp(av[(o * sp.n + k) * sp.inner + i] - m);
                out[o * sp.inner + i] = m + std::log(acc);
            } else {
                out[o * sp.inner + i] = m;  // all -inf
            }
        }
    auto an = a.node();
    return detail::make_op(os, std::move(out), {an}, [sp](detail::Node& self) {
        detail::Node& A = *self.parents[0];
        A.ensure_grad();
        for (size_t o = 0; o < sp.outer; ++o)
            for (size_t i = 0; i < sp.inner; ++i) {
                double lse = self.value[o * sp.inner + i];
                double g = self.grad[o * sp.inner + i];
                if (!std::isfinite(lse)) continue;
                for (size_t k = 0; k < sp.n; ++k) {
                    size_t ai = (o * sp.n + k) * sp.inner + i;
                    double x = A.value[ai];
                    if (std::isfinite(x)) A.grad[ai] += g * std::exp(x - lse);
                }
            }
    });
}

// log softmax over one axis = x - logsumexp(x, axis), broadcast back.
inline Tensor log_softmax(const Tensor& a, size_t axis) { return sub(a, logsumexp(a, axis)); }

inline Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.size())
        throw ContractError(strf("reshape: %s has %zu elements, target %s needs %zu",
                                 shape_str(a.shape()).c_str(), a.size(), shape_str(shape).c_str(),
                                 shape_numel(shape)));
    auto an = a.node();
    std::vector<double> v = an->value;  // copy; desk-scale tensors are small
    return detail::make_op(std::move(shape), std::move(v), {an}, [](detail::Node& self) {
        detail::Node& A = *self.parents[0];
        A.ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) A.grad[i] += self.grad[i];
    });
}

// Concatenate rank-3 tensors along the channel axis (axis 1).
inline Tensor concat_channels(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_channels: empty input");
    size_t B = parts[0].dim(0), T = parts[0].dim(2), C = 0;
    for (const auto& p : parts) {
        if (p.rank() != 3 || p.dim(0) != B || p.dim(2) != T)
            throw ContractError(strf("concat_channels: shape %s incompatible with %s",
                                     shape_str(p.shape()).c_str(),
                                     shape_str(parts[0].shape()).c_str()));
        C += p.dim(1);
    }
    std::vector<double> out(B * C * T);
    std::vector<size_t> offs;
    size_t off = 0;
    for (const auto& p : parts) {
        offs.push_back(off);
        size_t pc = p.dim(1);
        const auto& pv = p.node()->value;
        for (size_t b = 0; b < B; ++b)
            std::copy(pv.begin() + b * pc * T, pv.begin() + (b + 1) * pc * T,
                      out.begin() + (b * C + off) * T);
        off += pc;
    }
    std::vector<detail::NodePtr> parents;
    for (const auto& p : parts) parents.push_back(p.node());
    return detail::make_op({B, C, T}, std::move(out), std::move(parents),
                           [B, C, T, offs](detail::Node& self) {
                               for (size_t pi = 0; pi < self.parents.size(); ++pi) {
                                   detail::Node& P = *self.parents[pi];
                                   if (!P.requires_grad) continue;
                                   P.ensure_grad();
                                   size_t pc = P.shape[1];
                                   for (size_t b = 0; b < B; ++b) {
                                       const double* src = self.grad.data() + (b * C + offs[pi]) * T;
                                       double* dst = P.grad.data() + b * pc * T;
                                       for (size_t i = 0; i < pc * T; ++i) dst[i] += src[i];
                                   }
                               }
                           });
}

// out[b, j, t] = x[b, idx[j], t]; backward scatter-adds (duplicates allowed).
inline Tensor gather_channels(const Tensor& x, std::vector<size_t> idx) {
    if (x.rank() != 3)
        throw ContractError(strf("gather_channels: expected rank-3 input, got %s",
                                 shape_str(x.shape()).c_str()));
    size_t B = x.dim(0), C = x.dim(1), T = x.dim(2), J = idx.size();
    for (size_t j : idx)
        if (j >= C) throw ContractError(strf("gather_channels: index %zu out of %zu channels", j, C));
    std::vector<double> out(B * J * T);
    const auto& xv = x.node()->value;
    for (size_t b = 0; b < B; ++b)
        for (size_t j = 0; j < J; ++j)
            std::copy(xv.begin() + (b * C + idx[j]) * T, xv.begin() + (b * C + idx[j] + 1) * T,
                      out.begin() + (b * J + j) * T);
    auto xn = x.node();
    return detail::make_op({B, J, T}, std::move(out), {xn}, [B, C, T, J, idx](detail::Node& self) {
        detail::Node& X = *self.parents[0];
        X.ensure_grad();
        for (size_t b = 0; b < B; ++b)
            for (size_t j = 0; j < J; ++j) {
                const double* src = self.grad.data() + (b * J + j) * T;
                double* dst = X.grad.data() + (b * C + idx[j]) * T;
                for (size_t i = 0; i < T; ++i) dst[i] += src[i];
            }
    });
}

// x: [B, in], w: [in, out], b: [out] -> [B, out]
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0))
        throw ContractError(strf("linear: input %s incompatible with weight %s (input axis 1 vs weight axis 0)",
                                 shape_str(x.shape()).c_str(), shape_str(w.shape()).c_str()));
    size_t B = x.dim(0), In = x.dim(1), Out = w.dim(1);
    if (b.size() != Out)
        throw ContractError(strf("linear: bias has %zu values, expected %zu", b.size(), Out));
    std::vector<double> out(B * Out);
    const auto& xv = x.node()->value;
    const auto& wv = w.node()->value;
    const auto& bv = b.node()->value;
    for (size_t bb = 0; bb < B; ++bb) {
        double* o = out.data() + bb * Out;
        std::copy(bv.begin(), bv.end(), o);
        for (size_t i = 0; i < In; ++i) {
            double xi = xv[bb * In + i];
            const double* wr = wv.data() + i * Out;
            for (size_t j = 0; j < Out; ++j) o[j] += xi * wr[j];
        }
    }
    auto xn = x.node(), wn = w.node(), bn = b.node();
    return detail::make_op({B, Out}, std::move(out), {xn, wn, bn}, [B, In, Out](detail::Node& self) {
        detail::Node& X = *self.parents[0];
        detail::Node& W = *self.parents[1];
        detail::Node& Bb = *self.parents[2];
        if (X.requires_grad) X.ensure_grad();
        if (W.requires_grad) W.ensure_grad();
        if (Bb.requires_grad) Bb.ensure_grad();
        for (size_t bb = 0; bb < B; ++bb) {
            const double* go = self.grad.data() + bb * Out;
            if (Bb.requires_grad)
                for (size_t j = 0; j < Out; ++j) Bb.grad[j] += go[j];
            for (size_t i = 0; i < In; ++i) {
                const double* wr = W.value.data() + i * Out;
                double xi = X.value[bb * In + i];
                double acc = 0;
                for (size_t j = 0; j < Out; ++j) {
                    acc += go[j] * wr[j];
                    if (W.requires_grad) W.grad[i * Out + j] += xi * go[j];
                }
                if (X.requires_grad) X.grad[bb * In + i] += acc;
            }
        }
    });
}

// Sum of embedding-table rows per batch element: out[b] = sum_{r in rows[b]} table[r].
inline Tensor rows_sum(const Tensor& table, const std::vector<std::vector<size_t>>& rows) {
    if (table.rank() != 2)
        throw ContractError(strf("rows_sum: table must be rank 2, got %s", shape_str(table.shape()).c_str()));
    size_t V = table.dim(0), D = table.dim(1), B = rows.size();
    std::vector<double> out(B * D, 0.0);
    const auto& tv = table.node()->value;
    for (size_t b = 0; b < B; ++b)
        for (size_t r : rows[b]) {
            if (r >= V) throw ContractError(strf("rows_sum: row %zu out of vocabulary size %zu", r, V));
            for (size_t d = 0; d < D; ++d) out[b * D + d] += tv[r * D + d];
        }
    auto tn = table.node();
    return detail::make_op({B, D}, std::move(out), {tn}, [rows, D](detail::Node& self) {
        detail::Node& Tb = *self.parents[0];
        Tb.ensure_grad();
        for (size_t b = 0; b < rows.size(); ++b)
            for (size_t r : rows[b])
                for (size_t d = 0; d < D; ++d) Tb.grad[r * D + d] += self.grad[b * D + d];
    });
}

// Average pooling over time: x [B,C,T] -> [B,C,T'], T' = (T - k)/s + 1.
inline Tensor avg_pool1d(const Tensor& x, size_t k, size_t s) {
    if (x.rank() != 3)
        throw ContractError(strf("avg_pool1d: expected rank-3 input, got %s", shape_str(x.shape()).c_str()));
    size_t B = x.dim(0), C = x.dim(1), T = x.dim(2);
    if (k == 0 || s == 0 || k > T)
        throw ContractError(strf("avg_pool1d: window %zu / stride %zu invalid for length %zu", k, s, T));
    size_t To = (T - k) / s + 1;
    std::vector<double> out(B * C * To);
    const auto& xv = x.node()->value;
    double inv = 1.0 / static_cast<double>(k);
    for (size_t bc = 0; bc < B * C; ++bc) {
        const double* src = xv.data() + bc * T;
        double* dst = out.data() + bc * To;
        for (size_t t = 0; t < To; ++t) {
            double acc = 0;
            for (size_t i = 0; i < k; ++i) acc += src[t * s + i];
            dst[t] = acc * inv;
        }
    }
    auto xn = x.node();
    return detail::make_op({B, C, To}, std::move(out), {xn}, [B, C, T, To, k, s, inv](detail::Node& self) {
        detail::Node& X = *self.parents[0];
        X.ensure_grad();
        for (size_t bc = 0; bc < B * C; ++bc) {
            const double* go = self.grad.data() + bc * To;
            double* gx = X.grad.data() + bc * T;
            for (size_t t = 0; t < To; ++t) {
                double g = go[t] * inv;
                for (size_t i = 0; i < k; ++i) gx[t * s + i] += g;
            }
        }
    });
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

// Reverse-mode sweep from a scalar loss. Populates grads on every
// requires_grad ancestor. The traversed graph is consumed: a second backward
// through any of its interior nodes is a contract error. Leaf grads persist
// and accumulate across separate graphs until zero_grad().
inline void backward(const Tensor& loss) {
    if (loss.size() != 1)
        throw ContractError(strf("backward: loss must be scalar, got %s", shape_str(loss.shape()).c_str()));
    if (!loss.requires_grad()) return;
    auto root = loss.node();
    if (root->consumed) throw ContractError("backward: graph already consumed (single-use tape)");

    // iterative DFS post-order
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, size_t>> stack;
    visited.insert(root.get());
    stack.push_back({root.get(), 0});
    while (!stack.empty()) {
        auto& top = stack.back();
        if (top.second < top.first->parents.size()) {
            detail::Node* p = top.first->parents[top.second].get();
            ++top.second;
            if (!p->requires_grad || visited.count(p)) continue;
            if (p->consumed && !p->leaf)
                throw ContractError("backward: graph already consumed (single-use tape)");
            visited.insert(p);
            stack.push_back({p, 0});  // invalidates 'top'; loop re-reads back()
            continue;
        }
        order.push_back(top.first);
        stack.pop_back();
    }
    root->ensure_grad();
    root->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (n->backward && n->grad.size() == n->value.size()) n->backward(*n);
        if (!n->leaf) {
            n->grad = {};  // interior grads are spent once their backward ran
            n->consumed = true;
        }
    }
}

}  // namespace ecgen
