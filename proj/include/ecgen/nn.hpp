#pragma once

// Parameter registry and the small layer set shared by the VAE and the
// downstream classifier.

#include <string>
#include <utility>
#include <vector>

#include "ecgen/conv.hpp"
#include "ecgen/rng.hpp"
#include "ecgen/tensor.hpp"

namespace ecgen {

// Named parameters in deterministic insertion order. Optimizers and
// checkpoints iterate this order, which makes runs and files reproducible.
class ParamStore {
public:
    Tensor add(const std::string& name, Tensor t) {
        for (auto& [n, _] : items_)
            if (n == name) throw ContractError(strf("param '%s' already registered", name.c_str()));
        items_.emplace_back(name, t);
        return t;
    }

    Tensor& at(const std::string& name) {
        for (auto& [n, t] : items_)
            if (n == name) return t;
        throw ContractError(strf("param '%s' not found", name.c_str()));
    }

    const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
    std::vector<std::pair<std::string, Tensor>>& items() { return items_; }
    size_t count() const { return items_.size(); }

    size_t total_size() const {
        size_t n = 0;
        for (auto& [_, t] : items_) n += t.size();
        return n;
    }

    void zero_grad() {
        for (auto& [_, t] : items_) t.zero_grad();
    }

private:
    std::vector<std::pair<std::string, Tensor>> items_;
};

// Truncated normal init (resample outside 2 std), the default for conv and
// linear weights.
inline std::vector<double> trunc_normal(size_t n, double std_dev, Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v) {
        double z;
        do {
            z = rng.normal();
        } while (std::fabs(z) > 2.0);
        x = z * std_dev;
    }
    return v;
}

struct Conv1dLayer {
    Tensor w, b;
    int stride = 1, pad = 0;

    Conv1dLayer() = default;
    Conv1dLayer(ParamStore& ps, const std::string& name, size_t cin, size_t cout, size_t width,
                int stride_, int pad_, double init_std, Rng& rng)
        : stride(stride_), pad(pad_) {
        auto wdata = init_std > 0 ? trunc_normal(cout * cin * width, init_std, rng)
                                  : std::vector<double>(cout * cin * width, 0.0);
        w = ps.add(name + ".w", Tensor::param({cout, cin, width}, std::move(wdata), name + ".w"));
        b = ps.add(name + ".b", Tensor::param({cout}, std::vector<double>(cout, 0.0), name + ".b"));
    }

    Tensor operator()(const Tensor& x) const { return bias_add(conv1d(x, w, stride, pad), b); }
};

struct ConvT1dLayer {
    Tensor w, b;
    int stride = 1, pad = 0;

    ConvT1dLayer() = default;
    ConvT1dLayer(ParamStore& ps, const std::string& name, size_t cin, size_t cout, size_t width,
                 int stride_, int pad_, double init_std, Rng& rng)
        : stride(stride_), pad(pad_) {
        // kernel kept in conv1d layout [cin, cout, W] so the adjoint pairing holds
        w = ps.add(name + ".w",
                   Tensor::param({cin, cout, width}, trunc_normal(cin * cout * width, init_std, rng),
                                 name + ".w"));
        b = ps.add(name + ".b", Tensor::param({cout}, std::vector<double>(cout, 0.0), name + ".b"));
    }

    Tensor operator()(const Tensor& x) const {
        return bias_add(conv1d_transpose(x, w, stride, pad), b);
    }
};

struct LinearLayer {
    Tensor w, b;

    LinearLayer() = default;
    LinearLayer(ParamStore& ps, const std::string& name, size_t in, size_t out, double init_std,
                Rng& rng)
        : w(ps.add(name + ".w",
                   Tensor::param({in, out}, trunc_normal(in * out, init_std, rng), name + ".w"))),
          b(ps.add(name + ".b", Tensor::param({out}, std::vector<double>(out, 0.0), name + ".b"))) {}

    Tensor operator()(const Tensor& x) const { return linear(x, w, b); }
};

// Pre-activation residual cell: x + conv(act(conv(act(x)))), same width.
struct ResCell {
    Conv1dLayer c1, c2;

    ResCell() = default;
    ResCell(ParamStore& ps, const std::string& name, size_t width, double init_std, Rng& rng)
        : c1(ps, name + ".c1", width, width, 3, 1, 1, init_std, rng),
          c2(ps, name + ".c2", width, width, 3, 1, 1, init_std, rng) {}

    Tensor operator()(const Tensor& x) const { return add(x, c2(swish(c1(swish(x))))); }
};

}  // namespace ecgen
