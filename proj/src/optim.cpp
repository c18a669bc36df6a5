#include "midnet/optim.hpp"

#include <cmath>

namespace midnet {

namespace {

const std::vector<double>& checked_grad(const Tensor& p) {
    const auto* node = p.node().get();
    if (!node || node->grad.size() != node->data.size())
        throw ContractError("optimizer: parameter gradient not populated");
    return node->grad;
}

}  // namespace

SgdMomentum::SgdMomentum(std::vector<Tensor> params) : params_(std::move(params)) {
    for (const Tensor& p : params_) velocity_.emplace_back(p.numel(), 0.0);
}

void SgdMomentum::step(double lr, double momentum) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const std::vector<double>& g = checked_grad(params_[i]);
        std::vector<double>& v = velocity_[i];
        std::vector<double>& p = params_[i].data();
        for (std::size_t j = 0; j < p.size(); ++j) {
            v[j] = momentum * v[j] + g[j];
            p[j] -= lr * v[j];
        }
    }
}

Adam::Adam(std::vector<Tensor> params) : params_(std::move(params)) {
    for (const Tensor& p : params_) {
        m_.emplace_back(p.numel(), 0.0);
        v_.emplace_back(p.numel(), 0.0);
    }
}

void Adam::step(double lr, double beta1, double beta2, double eps) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const std::vector<double>& g = checked_grad(params_[i]);
        std::vector<double>& m = m_[i];
        std::vector<double>& v = v_[i];
        std::vector<double>& p = params_[i].data();
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
            v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
            const double m_hat = m[j] / bc1;
            const double v_hat = v[j] / bc2;
            p[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
}

void add_l2_gradients(const std::vector<Tensor>& weights, double scale) {
    for (const Tensor& w : weights) {
        auto* node = w.node().get();
        if (!node) continue;
        node->ensure_grad();
        for (std::size_t j = 0; j < node->data.size(); ++j)
            node->grad[j] += 2.0 * scale * node->data[j];
    }
}

double clip_global_grad_norm(const std::vector<Tensor>& params, double max_norm) {
    double sq = 0.0;
    for (const Tensor& p : params)
        for (double g : checked_grad(p)) sq += g * g;
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double scale = max_norm / norm;
        for (const Tensor& p : params) {
            auto* node = p.node().get();
            for (double& g : node->grad) g *= scale;
        }
    }
    return norm;
}

}  // namespace midnet
