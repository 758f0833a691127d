#pragma once

// Adamax and AdamW with linear learning-rate warmup and global-norm gradient
// clipping. Weight decay is decoupled for both kinds (applied directly to the
// parameter, never mixed into the moment estimates).

#include <cmath>
#include <vector>

#include "ecgen/nn.hpp"

namespace ecgen {

enum class OptKind { Adamax, AdamW };

struct OptimizerConfig {
    OptKind kind = OptKind::Adamax;
    double lr = 1e-3;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int warmup_epochs = 0;  // lr ramps linearly over this many epochs, then holds
};

class Optimizer {
public:
    Optimizer(const OptimizerConfig& cfg, const ParamStore& params) : cfg_(cfg) {
        for (auto& [_, t] : params.items()) {
            m_.emplace_back(t.size(), 0.0);
            v_.emplace_back(t.size(), 0.0);
        }
    }

    // Epoch index feeds the warmup ramp: scale = min(1, (epoch+1)/warmup).
    void set_epoch(int epoch) {
        lr_scale_ = cfg_.warmup_epochs > 0
                        ? std::min(1.0, static_cast<double>(epoch + 1) / cfg_.warmup_epochs)
                        : 1.0;
    }

    double current_lr() const { return cfg_.lr * lr_scale_; }
    long step_count() const { return step_; }

    void step(ParamStore& params) {
        if (params.count() != m_.size())
            throw ContractError("optimizer: parameter set changed since construction");
        ++step_;
        double lr = current_lr();
        double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
        double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
        for (size_t pi = 0; pi < m_.size(); ++pi) {
            auto& [name, t] = params.items()[pi];
            if (!t.grad_allocated())
                throw ContractError(strf("optimizer: parameter '%s' has no gradient", name.c_str()));
            auto g = t.grad();
            auto x = t.mutable_data();
            auto& m = m_[pi];
            auto& v = v_[pi];
            if (cfg_.kind == OptKind::Adamax) {
                for (size_t i = 0; i < x.size(); ++i) {
                    m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
                    v[i] = std::max(cfg_.beta2 * v[i], std::fabs(g[i]));
                    x[i] -= lr * (m[i] / bc1) / (v[i] + cfg_.eps);
                    x[i] -= lr * cfg_.weight_decay * x[i];
                }
            } else {
                for (size_t i = 0; i < x.size(); ++i) {
                    m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
                    v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
                    x[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
                    x[i] -= lr * cfg_.weight_decay * x[i];
                }
            }
        }
    }

private:
    OptimizerConfig cfg_;
    long step_ = 0;
    double lr_scale_ = 1.0;
    std::vector<std::vector<double>> m_, v_;
};

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the pre-clip norm.
inline double clip_grad_norm(ParamStore& params, double max_norm) {
    double sq = 0;
    for (auto& [_, t] : params.items())
        for (double g : t.grad()) sq += g * g;
    double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0) {
        double s = max_norm / norm;
        for (auto& [_, t] : params.items()) {
            auto n = t.node();
            for (double& g : n->grad) g *= s;
        }
    }
    return norm;
}

}  // namespace ecgen
