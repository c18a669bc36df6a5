#include "midnet/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "midnet/rng.hpp"

namespace midnet {

LossWeights LossWeights::ablation(const std::string& name) {
    LossWeights w;
    w.enable_rec = w.enable_cls = w.enable_mi = w.enable_cons = w.enable_ssl = false;
    if (name == "source-only") {
        w.enable_cls = true;
        return w;
    }
    w.enable_rec = w.enable_cls = true;
    if (name == "midnet-i") {
    } else if (name == "midnet-ii") {
        w.enable_mi = true;
    } else if (name == "midnet-iii") {
        w.enable_cons = true;
    } else if (name == "midnet-iv") {
        w.enable_ssl = true;
    } else if (name == "midnet-v") {
        w.enable_mi = w.enable_cons = true;
    } else if (name == "midnet-vi") {
        w.enable_cons = w.enable_ssl = true;
    } else if (name == "midnet-vii") {
        // same enabled set as midnet-vi; kept as a distinct selectable name
        w.enable_ssl = w.enable_cons = true;
    } else if (name == "midnet-viii") {
        w.enable_mi = w.enable_cons = w.enable_ssl = true;
    } else {
        throw ConfigError("unknown ablation name: " + name);
    }
    return w;
}

Tensor reconstruction_loss(const Tensor& x_hat, const Tensor& x) {
    if (x_hat.shape() != x.shape())
        throw ShapeError("reconstruction_loss: shape mismatch " + shape_str(x_hat.shape()) + " vs " +
                         shape_str(x.shape()));
    const std::size_t batch = x.shape().at(0);
    return mul(frobenius_sq(sub(x_hat, x)), 1.0 / static_cast<double>(batch));
}

Tensor classification_loss(const Tensor& probs, const std::vector<std::size_t>& labels) {
    const Shape& s = probs.shape();
    if (s.size() != 2) throw ShapeError("classification_loss: probs must be 2-D, got " + shape_str(s));
    if (labels.size() != s[0])
        throw ShapeError("classification_loss: " + std::to_string(labels.size()) + " labels for batch " +
                         std::to_string(s[0]));
    for (std::size_t l : labels)
        if (l >= s[1])
            throw ContractError("classification_loss: label " + std::to_string(l) + " out of range " +
                                std::to_string(s[1]));
    Tensor picked = take_per_row(probs, labels);
    return neg(mean(log(clamp_min(picked, 1e-12))));
}

Tensor shuffle_marginal(const Tensor& fd, std::uint64_t seed) {
    const std::size_t n = fd.shape().at(0);
    if (n < 2) throw ContractError("shuffle_marginal: batch extent must be >= 2, got " + std::to_string(n));
    Rng rng(seed);
    return gather_rows(fd, rng.permutation(n));
}

Tensor mine_lower_bound(const Tensor& t_joint, const Tensor& t_marginal) {
    if (t_joint.shape().at(0) < 2 || t_marginal.shape().at(0) < 2)
        throw ContractError("mine_lower_bound: need at least two samples");
    t_joint.assert_finite("mine_lower_bound: joint scores");
    t_marginal.assert_finite("mine_lower_bound: marginal scores");
    const double m = max_value(t_marginal);
    Tensor log_mean_exp = add(log(mean(exp(add(t_marginal, -m)))), m);
    return sub(mean(t_joint), log_mean_exp);
}

std::map<int, std::vector<std::pair<std::size_t, std::size_t>>>
shared_category_pairs(const std::vector<int>& categories, const std::vector<int>& domains) {
    if (categories.size() != domains.size())
        throw ContractError("shared_category_pairs: categories/domains length mismatch");
    std::map<int, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> by_cat;
    for (std::size_t i = 0; i < categories.size(); ++i) {
        if (domains[i] == 0)
            by_cat[categories[i]].first.push_back(i);
        else
            by_cat[categories[i]].second.push_back(i);
    }
    std::map<int, std::vector<std::pair<std::size_t, std::size_t>>> pairs;
    for (auto& [cat, sides] : by_cat) {
        auto& [src, tgt] = sides;
        const std::size_t n = std::min(src.size(), tgt.size());
        if (n == 0) continue;
        std::vector<std::pair<std::size_t, std::size_t>> p;
        for (std::size_t j = 0; j < n; ++j) p.emplace_back(src[j], tgt[j]);
        pairs.emplace(cat, std::move(p));
    }
    return pairs;
}

Tensor consistency_loss(const Tensor& fc,
                        const std::map<int, std::vector<std::pair<std::size_t, std::size_t>>>& pairs) {
    if (pairs.empty())
        throw ContractError("consistency_loss: empty shared-category set; disable the term instead");
    Tensor acc;
    for (const auto& [cat, idx_pairs] : pairs) {
        std::vector<std::size_t> src_idx, tgt_idx;
        for (const auto& [s, t] : idx_pairs) {
            src_idx.push_back(s);
            tgt_idx.push_back(t);
        }
        Tensor diff = sub(gather_rows(fc, src_idx), gather_rows(fc, tgt_idx));
        Tensor cat_mean = mul(frobenius_sq(diff), 1.0 / static_cast<double>(idx_pairs.size()));
        acc = acc.defined() ? add(acc, cat_mean) : cat_mean;
    }
    return mul(acc, 1.0 / static_cast<double>(pairs.size()));
}

MixResult mixup_with_beta(const Tensor& x1, const Tensor& x2, const Tensor& y1, const Tensor& y2,
                          const std::vector<double>& beta) {
    if (x1.shape() != x2.shape())
        throw ShapeError("mixup: x shapes differ, " + shape_str(x1.shape()) + " vs " + shape_str(x2.shape()));
    if (y1.shape() != y2.shape())
        throw ShapeError("mixup: y shapes differ, " + shape_str(y1.shape()) + " vs " + shape_str(y2.shape()));
    const std::size_t n = x1.shape().at(0);
    if (y1.shape().at(0) != n || beta.size() != n)
        throw ShapeError("mixup: batch extents disagree");

    auto expand = [n](const std::vector<double>& b, const Shape& shape, bool flip) {
        const std::size_t row = shape_numel(shape) / n;
        std::vector<double> out(shape_numel(shape));
        for (std::size_t i = 0; i < n; ++i) {
            const double v = flip ? 1.0 - b[i] : b[i];
            std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(i * row), row, v);
        }
        return Tensor::from_data(shape, std::move(out));
    };

    MixResult r;
    r.beta = Tensor::from_data({n, 1}, std::vector<double>(beta));
    r.x_mix = add(mul(x1, expand(beta, x1.shape(), false)), mul(x2, expand(beta, x1.shape(), true)));
    r.y_mix = add(mul(y1, expand(beta, y1.shape(), false)), mul(y2, expand(beta, y1.shape(), true)));
    return r;
}

MixResult mixup(const Tensor& x1, const Tensor& x2, const Tensor& y1, const Tensor& y2,
                const MixerConfig& cfg, std::uint64_t seed) {
    if (cfg.alpha <= 0.0) throw ConfigError("mixup: alpha must be positive");
    const std::size_t n = x1.shape().at(0);
    Rng rng(seed);
    std::vector<double> beta(n);
    for (double& b : beta) {
        const double xi = rng.beta(cfg.alpha, cfg.alpha);
        b = std::max(xi, 1.0 - xi);
    }
    return mixup_with_beta(x1, x2, y1, y2, beta);
}

Tensor ssl_loss(const Tensor& y_mix, const Tensor& probs_mix) {
    if (y_mix.shape() != probs_mix.shape())
        throw ShapeError("ssl_loss: shape mismatch " + shape_str(y_mix.shape()) + " vs " +
                         shape_str(probs_mix.shape()));
    const std::size_t batch = y_mix.shape().at(0);
    return mul(frobenius_sq(sub(y_mix, probs_mix)), 1.0 / static_cast<double>(batch));
}

Tensor total_loss(const std::array<Tensor, 5>& terms, const LossWeights& w) {
    const std::array<double, 5> lambdas{w.lambda1, w.lambda2, w.lambda3, w.lambda4, w.lambda5};
    const std::array<bool, 5> enabled{w.enable_rec, w.enable_cls, w.enable_mi, w.enable_cons, w.enable_ssl};
    for (double l : lambdas)
        if (l < 0.0) throw ConfigError("total_loss: negative loss weight");
    Tensor acc = Tensor::scalar(0.0);
    for (std::size_t i = 0; i < terms.size(); ++i) {
        if (!enabled[i]) {
            if (terms[i].defined() && terms[i].item() != 0.0)
                throw ContractError("total_loss: disabled term " + std::to_string(i + 1) +
                                    " must be an exact zero");
            continue;
        }
        acc = add(acc, mul(terms[i], lambdas[i]));
    }
    return acc;
}

}  // namespace midnet
