#pragma once

#include "dragsplat/ad.hpp"

#include <cmath>
#include <vector>

namespace dragsplat::optim {

// Adam over a fixed parameter list. step() consumes accumulated gradients and
// zeroes them afterwards.
struct Adam {
    double lr;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long t = 0;
    std::vector<ad::Var> params;
    std::vector<Eigen::ArrayXd> m, v;

    explicit Adam(std::vector<ad::Var> ps, double learning_rate = 5e-4)
        : lr(learning_rate), params(std::move(ps)) {
        for (const auto& p : params) {
            m.emplace_back(Eigen::ArrayXd::Zero(p->val.numel()));
            v.emplace_back(Eigen::ArrayXd::Zero(p->val.numel()));
        }
    }

    void zero_grad() {
        for (auto& p : params)
            if (p->grad.numel()) p->grad.d.setZero();
    }

    void step(double lr_override = -1.0) {
        ++t;
        double rate = lr_override >= 0.0 ? lr_override : lr;
        double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (size_t i = 0; i < params.size(); ++i) {
            Eigen::ArrayXd& g = params[i]->g().d;
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g.square();
            params[i]->val.d -= rate * (m[i] / bc1) / ((v[i] / bc2).sqrt() + eps);
            g.setZero();
        }
    }
};

// Scales gradients so their global L2 norm is at most max_norm; returns the
// pre-clip norm. max_norm <= 0 disables clipping.
inline double clip_grad_norm(const std::vector<ad::Var>& params, double max_norm) {
    double sq = 0.0;
    for (const auto& p : params)
        if (p->grad.numel()) sq += p->grad.d.square().sum();
    double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        double s = max_norm / norm;
        for (const auto& p : params)
            if (p->grad.numel()) p->grad.d *= s;
    }
    return norm;
}

// Cosine decay from base to ~0 over total steps.
inline double cosine_lr(double base, long step, long total) {
    if (total <= 0) return base;
    double s = std::min(1.0, static_cast<double>(step) / static_cast<double>(total));
    return 0.5 * base * (1.0 + std::cos(M_PI * s));
}

}  // namespace dragsplat::optim
