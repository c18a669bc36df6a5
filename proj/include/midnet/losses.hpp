#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "midnet/tensor.hpp"

namespace midnet {

// Term weights plus ablation toggles. A disabled term contributes an exact
// zero and no gradient.
struct LossWeights {
    double lambda1 = 1.0;   // reconstruction
    double lambda2 = 1.0;   // classification
    double lambda3 = 1.0;   // mutual information
    double lambda4 = 1.0;   // feature consistency
    double lambda5 = 1.0;   // SSL regularization
    bool enable_rec = true;
    bool enable_cls = true;
    bool enable_mi = true;
    bool enable_cons = true;
    bool enable_ssl = true;

    // Variant names: midnet-i .. midnet-viii and source-only. Toggles only;
    // lambdas keep their configured values.
    static LossWeights ablation(const std::string& name);
};

struct MixerConfig {
    double alpha = 0.75;
};

// Mean over the batch of the per-sample squared Frobenius reconstruction error.
Tensor reconstruction_loss(const Tensor& x_hat, const Tensor& x);

// Mean over the batch of -log p[i, labels[i]], probabilities floored at 1e-12.
Tensor classification_loss(const Tensor& probs, const std::vector<std::size_t>& labels);

// Rows permuted by a uniformly random permutation; no gradient flows through
// the permutation indices.
Tensor shuffle_marginal(const Tensor& fd, std::uint64_t seed);

// Donsker-Varadhan estimate: mean(t_joint) - log_mean_exp(t_marginal),
// stabilized by max subtraction. The MINE phase maximizes this over theta;
// the main objective carries -estimate as its mutual-information term.
Tensor mine_lower_bound(const Tensor& t_joint, const Tensor& t_marginal);

// Per-category index pairing for the consistency loss: sort each side by
// in-batch index, truncate to the shorter side, pair positionally.
// Only categories with samples on both sides are returned.
std::map<int, std::vector<std::pair<std::size_t, std::size_t>>>
shared_category_pairs(const std::vector<int>& categories, const std::vector<int>& domains);

// Mean over shared categories of the mean over pairs of squared Frobenius
// distance between source and target categorical features (rows of fc).
Tensor consistency_loss(const Tensor& fc,
                        const std::map<int, std::vector<std::pair<std::size_t, std::size_t>>>& pairs);

struct MixResult {
    Tensor x_mix;
    Tensor y_mix;
    Tensor beta;  // [n, 1], one coefficient per mixed pair, in [0.5, 1]
};

// x_mix = beta*x1 + (1-beta)*x2 with beta = max(xi, 1-xi), xi ~ Beta(alpha, alpha).
MixResult mixup(const Tensor& x1, const Tensor& x2, const Tensor& y1, const Tensor& y2,
                const MixerConfig& cfg, std::uint64_t seed);
// Deterministic variant with caller-provided coefficients (one per row).
MixResult mixup_with_beta(const Tensor& x1, const Tensor& x2, const Tensor& y1, const Tensor& y2,
                          const std::vector<double>& beta);

// Mean over the batch of the squared Frobenius distance between the mixed
// target distribution and the predicted distribution.
Tensor ssl_loss(const Tensor& y_mix, const Tensor& probs_mix);

// Weighted sum of the five terms; disabled terms must be passed as exact zeros.
Tensor total_loss(const std::array<Tensor, 5>& terms, const LossWeights& w);

}  // namespace midnet
