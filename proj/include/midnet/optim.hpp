#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "midnet/tensor.hpp"

namespace midnet {

// Classical momentum: v <- momentum*v + g; p <- p - lr*v.
class SgdMomentum {
public:
    explicit SgdMomentum(std::vector<Tensor> params);
    void step(double lr, double momentum);
    const std::vector<std::vector<double>>& velocity() const { return velocity_; }
    std::vector<std::vector<double>>& velocity() { return velocity_; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> velocity_;
};

// Bias-corrected Adam.
class Adam {
public:
    explicit Adam(std::vector<Tensor> params);
    void step(double lr, double beta1, double beta2, double eps);
    std::uint64_t step_count() const { return t_; }
    void set_step_count(std::uint64_t t) { t_ = t; }
    const std::vector<std::vector<double>>& first_moment() const { return m_; }
    std::vector<std::vector<double>>& first_moment() { return m_; }
    const std::vector<std::vector<double>>& second_moment() const { return v_; }
    std::vector<std::vector<double>>& second_moment() { return v_; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    std::uint64_t t_ = 0;
};

// Adds 2*scale*w to the gradient of each weight tensor.
void add_l2_gradients(const std::vector<Tensor>& weights, double scale);

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the pre-clip norm.
double clip_global_grad_norm(const std::vector<Tensor>& params, double max_norm);

}  // namespace midnet
