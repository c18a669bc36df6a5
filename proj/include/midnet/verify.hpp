#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "midnet/tensor.hpp"

namespace midnet::verify {

// Independent reference implementations. These operate on raw buffers with
// plain nested loops and share no code with the tensor ops they check.

std::vector<double> reference_matmul(const std::vector<double>& a, std::size_t m, std::size_t k,
                                     const std::vector<double>& b, std::size_t n);

struct RefConvSpec {
    std::size_t batch, h, w, cin, kh, kw, cout;
    int stride;
    bool same_padding;
};
// Returns the output buffer; out_h/out_w receive the spatial extents.
std::vector<double> reference_conv2d(const std::vector<double>& input, const std::vector<double>& kernel,
                                     const RefConvSpec& spec, std::size_t& out_h, std::size_t& out_w);

// Composite Simpson rule on [a, b] with n subintervals (n made even).
double simpson(const std::function<double(double)>& f, double a, double b, std::size_t n);

// E[max(xi, 1-xi)] for xi ~ Beta(alpha, alpha), by numeric integration under
// the substitution x = sin^2 t (which removes the endpoint singularities).
double beta_max_mean(double alpha);

// Central finite differences at step h against analytic gradients of
// forward(), which must be a pure function of the leaves' current data.
// An instance whose forward pass grazes a relu/clamp kink is reported with
// at_kink set; finite differences are invalid there and callers resample.
struct GradCheck {
    double max_err = 0.0;       // max over elements of |analytic - fd| / max(|a|,|fd|,1e-3)
    std::size_t checked = 0;
    bool at_kink = false;
};
GradCheck finite_difference_check(const std::vector<Tensor>& leaves,
                                  const std::function<Tensor()>& forward, double h = 1e-5);

// Per-class loop of the confusion-matrix metrics (0/0 -> 0 conventions).
struct LoopMetrics {
    double macro_f1, macro_recall, macro_precision, accuracy;
};
LoopMetrics loop_metrics(const std::vector<std::uint64_t>& counts, std::size_t k);

// Trains a statistics network on n samples of a bivariate Gaussian with the
// given correlation and returns the Donsker-Varadhan estimate on the sample.
double mine_gaussian_estimate(double rho, std::size_t n_samples, std::uint64_t seed);

// Named verification suites behind the CLI. Each prints measured values vs
// tolerances and returns pass/fail.
bool run_gradcheck(std::ostream& out);
bool run_mine_bench(std::ostream& out);
bool run_mixup_stats(std::ostream& out);
bool run_metrics_oracle(std::ostream& out);

}  // namespace midnet::verify
