#include "midnet/verify.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include "midnet/data.hpp"
#include "midnet/eval.hpp"
#include "midnet/losses.hpp"
#include "midnet/nn.hpp"
#include "midnet/optim.hpp"
#include "midnet/rng.hpp"

namespace midnet::verify {

std::vector<double> reference_matmul(const std::vector<double>& a, std::size_t m, std::size_t k,
                                     const std::vector<double>& b, std::size_t n) {
    std::vector<double> c(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
            c[i * n + j] = acc;
        }
    return c;
}

std::vector<double> reference_conv2d(const std::vector<double>& input, const std::vector<double>& kernel,
                                     const RefConvSpec& s, std::size_t& out_h, std::size_t& out_w) {
    const auto stride = static_cast<std::size_t>(s.stride);
    std::size_t pad_top = 0, pad_left = 0;
    if (s.same_padding) {
        out_h = (s.h + stride - 1) / stride;
        out_w = (s.w + stride - 1) / stride;
        const std::size_t need_h = (out_h - 1) * stride + s.kh;
        const std::size_t need_w = (out_w - 1) * stride + s.kw;
        pad_top = (need_h > s.h ? need_h - s.h : 0) / 2;
        pad_left = (need_w > s.w ? need_w - s.w : 0) / 2;
    } else {
        out_h = (s.h - s.kh) / stride + 1;
        out_w = (s.w - s.kw) / stride + 1;
    }
    std::vector<double> out(s.batch * out_h * out_w * s.cout, 0.0);
    for (std::size_t n = 0; n < s.batch; ++n)
        for (std::size_t oh = 0; oh < out_h; ++oh)
            for (std::size_t ow = 0; ow < out_w; ++ow)
                for (std::size_t co = 0; co < s.cout; ++co) {
                    double acc = 0.0;
                    for (std::size_t ki = 0; ki < s.kh; ++ki)
                        for (std::size_t kj = 0; kj < s.kw; ++kj)
                            for (std::size_t ci = 0; ci < s.cin; ++ci) {
                                const std::ptrdiff_t ih =
                                    static_cast<std::ptrdiff_t>(oh * stride + ki) -
                                    static_cast<std::ptrdiff_t>(pad_top);
                                const std::ptrdiff_t iw =
                                    static_cast<std::ptrdiff_t>(ow * stride + kj) -
                                    static_cast<std::ptrdiff_t>(pad_left);
                                if (ih < 0 || iw < 0 || ih >= static_cast<std::ptrdiff_t>(s.h) ||
                                    iw >= static_cast<std::ptrdiff_t>(s.w))
                                    continue;
                                acc += input[((n * s.h + ih) * s.w + iw) * s.cin + ci] *
                                       kernel[((ki * s.kw + kj) * s.cin + ci) * s.cout + co];
                            }
                    out[((n * out_h + oh) * out_w + ow) * s.cout + co] = acc;
                }
    return out;
}

double simpson(const std::function<double(double)>& f, double a, double b, std::size_t n) {
    if (n % 2 == 1) ++n;
    const double h = (b - a) / static_cast<double>(n);
    double acc = f(a) + f(b);
    for (std::size_t i = 1; i < n; ++i) acc += f(a + h * static_cast<double>(i)) * (i % 2 == 1 ? 4.0 : 2.0);
    return acc * h / 3.0;
}

double beta_max_mean(double alpha) {
    // With x = sin^2 t the Beta(a,a) density integrand becomes
    // 2 sin^(2a-1) t cos^(2a-1) t, smooth on [0, pi/2] for a > 1/2.
    const double p = 2.0 * alpha - 1.0;
    auto weight = [p](double t) {
        return 2.0 * std::pow(std::sin(t), p) * std::pow(std::cos(t), p);
    };
    auto numer = [&weight](double t) {
        const double x = std::sin(t) * std::sin(t);
        return std::max(x, 1.0 - x) * weight(t);
    };
    const double half_pi = std::numbers::pi / 2.0;
    const std::size_t n = 200000;
    return simpson(numer, 0.0, half_pi, n) / simpson(weight, 0.0, half_pi, n);
}

GradCheck finite_difference_check(const std::vector<Tensor>& leaves,
                                  const std::function<Tensor()>& forward, double h) {
    for (const Tensor& l : leaves) const_cast<Tensor&>(l).zero_grad();
    kink_watch_begin();
    Tensor out = forward();
    if (kink_watch_end() < 100.0 * h) {
        GradCheck rejected;
        rejected.at_kink = true;
        return rejected;
    }
    backward(out);
    std::vector<std::vector<double>> analytic;
    for (const Tensor& l : leaves) analytic.push_back(l.grad());

    GradCheck result;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        Tensor leaf = leaves[li];
        for (std::size_t i = 0; i < leaf.numel(); ++i) {
            const double saved = leaf.data()[i];
            leaf.data()[i] = saved + h;
            const double f_plus = forward().item();
            leaf.data()[i] = saved - h;
            const double f_minus = forward().item();
            leaf.data()[i] = saved;
            const double fd = (f_plus - f_minus) / (2.0 * h);
            const double a = analytic[li][i];
            const double err = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-3});
            result.max_err = std::max(result.max_err, err);
            ++result.checked;
        }
    }
    return result;
}

LoopMetrics loop_metrics(const std::vector<std::uint64_t>& counts, std::size_t k) {
    LoopMetrics m{0.0, 0.0, 0.0, 0.0};
    double total = 0.0, correct = 0.0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < k; ++c) {
        double tp = 0.0, fp = 0.0, fn = 0.0, row = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            const double v = static_cast<double>(counts[c * k + j]);
            row += v;
            total += v;
            if (j == c) {
                tp = v;
                correct += v;
            } else {
                fn += v;
            }
        }
        for (std::size_t i = 0; i < k; ++i)
            if (i != c) fp += static_cast<double>(counts[i * k + c]);
        if (row == 0.0) continue;
        ++present;
        const double precision = (tp + fp) == 0.0 ? 0.0 : tp / (tp + fp);
        const double recall = (tp + fn) == 0.0 ? 0.0 : tp / (tp + fn);
        const double f1 = (precision + recall) == 0.0 ? 0.0
                                                      : 2.0 * precision * recall / (precision + recall);
        m.macro_precision += precision;
        m.macro_recall += recall;
        m.macro_f1 += f1;
    }
    m.macro_precision /= static_cast<double>(present);
    m.macro_recall /= static_cast<double>(present);
    m.macro_f1 /= static_cast<double>(present);
    m.accuracy = correct / total;
    return m;
}

double mine_gaussian_estimate(double rho, std::size_t n_samples, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "mine-bench-data"));
    std::vector<double> xs(n_samples), zs(n_samples);
    const double noise = std::sqrt(1.0 - rho * rho);
    for (std::size_t i = 0; i < n_samples; ++i) {
        xs[i] = rng.normal();
        zs[i] = rho * xs[i] + noise * rng.normal();
    }
    Mlp net = build_mlp({2, 100, 100, 1}, derive_seed(seed, "mine-bench-init"));
    Adam adam(mlp_parameters(net));

    auto scores = [&net](const std::vector<double>& x, const std::vector<double>& z) {
        const std::size_t n = x.size();
        std::vector<double> joined(n * 2);
        for (std::size_t i = 0; i < n; ++i) {
            joined[i * 2] = x[i];
            joined[i * 2 + 1] = z[i];
        }
        return mlp_forward(net, Tensor::from_data({n, 2}, std::move(joined)));
    };

    const std::size_t batch = 512;
    const std::size_t steps = 1500;
    Rng step_rng(derive_seed(seed, "mine-bench-steps"));
    for (std::size_t step = 0; step < steps; ++step) {
        std::vector<double> bx(batch), bz(batch), mz(batch);
        for (std::size_t i = 0; i < batch; ++i) {
            const std::size_t a = static_cast<std::size_t>(step_rng.uniform_index(n_samples));
            const std::size_t b = static_cast<std::size_t>(step_rng.uniform_index(n_samples));
            bx[i] = xs[a];
            bz[i] = zs[a];
            mz[i] = zs[b];  // independent resample approximates the marginal product
        }
        Tensor estimate = mine_lower_bound(scores(bx, bz), scores(bx, mz));
        Tensor loss = neg(estimate);
        for (const Tensor& p : mlp_parameters(net)) const_cast<Tensor&>(p).zero_grad();
        backward(loss);
        adam.step(1e-3, 0.9, 0.999, 1e-8);
    }

    // Evaluate on the full sample with several independent shuffles.
    NoGradGuard no_grad;
    Tensor joint = scores(xs, zs);
    double joint_mean = 0.0;
    for (double v : joint.data()) joint_mean += v;
    joint_mean /= static_cast<double>(n_samples);

    Rng eval_rng(derive_seed(seed, "mine-bench-eval"));
    double max_score = -1e300;
    std::vector<double> marginal_scores;
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<double> shuffled = zs;
        eval_rng.shuffle(shuffled);
        Tensor t = scores(xs, shuffled);
        for (double v : t.data()) {
            marginal_scores.push_back(v);
            max_score = std::max(max_score, v);
        }
    }
    double sum_exp = 0.0;
    for (double v : marginal_scores) sum_exp += std::exp(v - max_score);
    const double log_mean_exp =
        max_score + std::log(sum_exp / static_cast<double>(marginal_scores.size()));
    return joint_mean - log_mean_exp;
}

// --- suites -------------------------------------------------------------

namespace {

Tensor random_tensor(const Shape& shape, Rng& rng, bool requires_grad, double lo = -1.0,
                     double hi = 1.0) {
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) v = rng.uniform(lo, hi);
    return Tensor::from_data(shape, std::move(data), requires_grad);
}

// Random values bounded away from zero, for kinked ops like relu.
Tensor random_tensor_away_from_zero(const Shape& shape, Rng& rng, bool requires_grad) {
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) {
        const double mag = 0.2 + 0.8 * rng.uniform();
        v = rng.bernoulli(0.5) ? mag : -mag;
    }
    return Tensor::from_data(shape, std::move(data), requires_grad);
}

bool report_check(std::ostream& out, const char* name, double measured, double tolerance,
                  bool ok_override, bool has_override) {
    const bool ok = has_override ? ok_override : measured < tolerance;
    out << (ok ? "  [ok]   " : "  [FAIL] ") << name << ": measured " << measured << " vs tolerance "
        << tolerance << "\n";
    return ok;
}

bool fd_suite_case(std::ostream& out, const char* name, std::size_t instances,
                   const std::function<GradCheck(Rng&)>& make) {
    Rng rng(derive_seed(0xf00du, name));
    double worst = 0.0;
    std::size_t accepted = 0, attempts = 0;
    const std::size_t max_attempts = instances * 50;
    while (accepted < instances && attempts < max_attempts) {
        ++attempts;
        const GradCheck check = make(rng);
        if (check.at_kink) continue;  // not a differentiable point; resample
        worst = std::max(worst, check.max_err);
        ++accepted;
    }
    if (accepted < instances) {
        out << "  [FAIL] " << name << ": only " << accepted << "/" << instances
            << " differentiable instances found\n";
        return false;
    }
    return report_check(out, name, worst, 1e-4, false, false);
}

}  // namespace

bool run_gradcheck(std::ostream& out) {
    out << "gradcheck: analytic vs central finite differences (h=1e-5, 64-bit)\n";
    bool ok = true;
    const std::size_t n_inst = 20;

    ok &= fd_suite_case(out, "matmul", n_inst, [](Rng& rng) {
        Tensor a = random_tensor({3, 4}, rng, true);
        Tensor b = random_tensor({4, 2}, rng, true);
        return finite_difference_check({a, b}, [&] { return sum(mul(matmul(a, b), matmul(a, b))); });
    });
    ok &= fd_suite_case(out, "conv2d-same", n_inst, [](Rng& rng) {
        Tensor x = random_tensor({1, 5, 5, 2}, rng, true);
        Tensor k = random_tensor({3, 3, 2, 3}, rng, true);
        return finite_difference_check(
            {x, k}, [&] { return frobenius_sq(conv2d(x, k, 2, Padding::Same)); });
    });
    ok &= fd_suite_case(out, "conv2d-valid", n_inst, [](Rng& rng) {
        Tensor x = random_tensor({2, 5, 4, 2}, rng, true);
        Tensor k = random_tensor({2, 2, 2, 2}, rng, true);
        return finite_difference_check(
            {x, k}, [&] { return frobenius_sq(conv2d(x, k, 1, Padding::Valid)); });
    });
    ok &= fd_suite_case(out, "add-sub-mul", n_inst, [](Rng& rng) {
        Tensor a = random_tensor({3, 3}, rng, true);
        Tensor b = random_tensor({3, 3}, rng, true);
        return finite_difference_check(
            {a, b}, [&] { return sum(mul(add(a, b), sub(a, mul(b, 0.5)))); });
    });
    ok &= fd_suite_case(out, "add_bias", n_inst, [](Rng& rng) {
        Tensor a = random_tensor({4, 3}, rng, true);
        Tensor b = random_tensor({3}, rng, true);
        return finite_difference_check({a, b}, [&] { return frobenius_sq(add_bias(a, b)); });
    });
    ok &= fd_suite_case(out, "relu", n_inst, [](Rng& rng) {
        Tensor a = random_tensor_away_from_zero({4, 5}, rng, true);
        return finite_difference_check({a}, [&] { return sum(relu(a)); });
    });
    ok &= fd_suite_case(out, "exp-log", n_inst, [](Rng& rng) {
        Tensor a = random_tensor({6}, rng, true, 0.2, 2.0);
        return finite_difference_check({a}, [&] { return sum(log(exp(a))); });
    });
    ok &= fd_suite_case(out, "clamp_min", n_inst, [](Rng& rng) {
        Tensor a = random_tensor_away_from_zero({8}, rng, true);
        return finite_difference_check({a}, [&] { return sum(mul(clamp_min(a, 0.0), clamp_min(a, 0.0))); });
    });
    ok &= fd_suite_case(out, "softmax", n_inst, [](Rng& rng) {
        Tensor a = random_tensor({3, 5}, rng, true, -2.0, 2.0);
        Tensor w = random_tensor({3, 5}, rng, false);
        return finite_difference_check({a}, [&] { return sum(mul(softmax(a, 1), w)); });
    });
    ok &= fd_suite_case(out, "reductions", n_inst, [](Rng& rng) {
        Tensor a = random_tensor({4, 3}, rng, true);
        return finite_difference_check(
            {a}, [&] { return add(add(sum(a), mean(a)), frobenius_sq(a)); });
    });
    ok &= fd_suite_case(out, "reshape-concat", n_inst, [](Rng& rng) {
        Tensor a = random_tensor({2, 6}, rng, true);
        Tensor b = random_tensor({2, 3}, rng, true);
        return finite_difference_check(
            {a, b}, [&] { return frobenius_sq(concat({flatten(a), b}, 1)); });
    });
    ok &= fd_suite_case(out, "upsample-crop", n_inst, [](Rng& rng) {
        Tensor a = random_tensor({1, 3, 3, 2}, rng, true);
        return finite_difference_check(
            {a}, [&] { return frobenius_sq(crop_spatial(upsample_nearest(a, 2), 5, 5)); });
    });
    ok &= fd_suite_case(out, "gather-take", n_inst, [](Rng& rng) {
        Tensor a = random_tensor({5, 4}, rng, true);
        const std::vector<std::size_t> rows{4, 0, 2, 2};
        const std::vector<std::size_t> cols{1, 3, 0, 2};
        return finite_difference_check(
            {a}, [&] { return frobenius_sq(take_per_row(gather_rows(a, rows), cols)); });
    });

    // Losses, each through a live network so gradients cross every op kind.
    EncoderConfig tiny;
    tiny.filters = {2, 3};
    tiny.strides = {1, 2};
    tiny.kernel_size = 3;
    tiny.in_h = 6;
    tiny.in_w = 6;
    tiny.in_c = 1;

    ok &= fd_suite_case(out, "loss-reconstruction", n_inst, [&tiny](Rng& rng) {
        MIDNetParams p = build_midnet(tiny, 3, {6}, {6}, rng.next_u64());
        Tensor x = random_tensor({2, 6, 6, 1}, rng, false, 0.0, 1.0);
        auto leaves = p.main_parameters();
        return finite_difference_check(leaves, [&] {
            FeaturePair pair = encode(p, x);
            return reconstruction_loss(decode(p, pair), x);
        });
    });
    ok &= fd_suite_case(out, "loss-classification", n_inst, [&tiny](Rng& rng) {
        MIDNetParams p = build_midnet(tiny, 3, {6}, {6}, rng.next_u64());
        Tensor x = random_tensor({3, 6, 6, 1}, rng, false, 0.0, 1.0);
        const std::vector<std::size_t> labels{0, 2, 1};
        auto leaves = p.main_parameters();
        return finite_difference_check(leaves, [&] {
            return classification_loss(classify(p, encode_categorical(p, x)), labels);
        });
    });
    ok &= fd_suite_case(out, "loss-mine", n_inst, [&tiny](Rng& rng) {
        MIDNetParams p = build_midnet(tiny, 3, {6}, {6}, rng.next_u64());
        Tensor x = random_tensor({4, 6, 6, 1}, rng, false, 0.0, 1.0);
        std::vector<Tensor> leaves = p.main_parameters();
        for (const Tensor& t : p.theta_parameters()) leaves.push_back(t);
        return finite_difference_check(leaves, [&] {
            FeaturePair pair = encode(p, x);
            Tensor fd_shuffled = shuffle_marginal(pair.fd, 77);
            return neg(mine_lower_bound(statistics_net(p, pair.fc, pair.fd),
                                        statistics_net(p, pair.fc, fd_shuffled)));
        });
    });
    ok &= fd_suite_case(out, "loss-consistency", n_inst, [&tiny](Rng& rng) {
        MIDNetParams p = build_midnet(tiny, 3, {6}, {6}, rng.next_u64());
        Tensor x = random_tensor({4, 6, 6, 1}, rng, false, 0.0, 1.0);
        const std::vector<int> cats{0, 0, 1, 1};
        const std::vector<int> doms{0, 1, 0, 1};
        auto leaves = p.main_parameters();
        return finite_difference_check(leaves, [&] {
            return consistency_loss(encode_categorical(p, x), shared_category_pairs(cats, doms));
        });
    });
    ok &= fd_suite_case(out, "loss-ssl", n_inst, [&tiny](Rng& rng) {
        MIDNetParams p = build_midnet(tiny, 3, {6}, {6}, rng.next_u64());
        Tensor x1 = random_tensor({3, 6, 6, 1}, rng, false, 0.0, 1.0);
        Tensor x2 = random_tensor({3, 6, 6, 1}, rng, false, 0.0, 1.0);
        Tensor y1 = softmax(random_tensor({3, 3}, rng, false), 1).detach();
        Tensor y2 = softmax(random_tensor({3, 3}, rng, false), 1).detach();
        const std::uint64_t seed = rng.next_u64();
        auto leaves = p.main_parameters();
        return finite_difference_check(leaves, [&] {
            MixResult mix = mixup(x1, x2, y1, y2, MixerConfig{0.75}, seed);
            return ssl_loss(mix.y_mix, classify(p, encode_categorical(p, mix.x_mix)));
        });
    });
    ok &= fd_suite_case(out, "loss-total-composition", n_inst, [&tiny](Rng& rng) {
        MIDNetParams p = build_midnet(tiny, 3, {6}, {6}, rng.next_u64());
        Tensor x = random_tensor({4, 6, 6, 1}, rng, false, 0.0, 1.0);
        const std::vector<std::size_t> labels{0, 1, 2, 0};
        const std::vector<int> cats{0, 1, 2, 0};
        const std::vector<int> doms{0, 0, 1, 1};
        const std::uint64_t seed = rng.next_u64();
        LossWeights w;
        w.lambda1 = 1.0;
        w.lambda2 = 2.0;
        w.lambda3 = 0.5;
        w.lambda4 = 1.5;
        w.lambda5 = 0.7;
        std::vector<Tensor> leaves = p.main_parameters();
        for (const Tensor& t : p.theta_parameters()) leaves.push_back(t);
        return finite_difference_check(leaves, [&] {
            FeaturePair pair = encode(p, x);
            Tensor probs = classify(p, pair.fc);
            Tensor fd_shuffled = shuffle_marginal(pair.fd, seed);
            Tensor mi = neg(mine_lower_bound(statistics_net(p, pair.fc, pair.fd),
                                             statistics_net(p, pair.fc, fd_shuffled)));
            Rng perm_rng(seed);
            const auto perm = perm_rng.permutation(4);
            MixResult mix = mixup(x, gather_rows(x, perm).detach(), one_hot(labels, 3),
                                  gather_rows(one_hot(labels, 3), perm), MixerConfig{0.75}, seed);
            return total_loss({reconstruction_loss(decode(p, pair), x),
                               classification_loss(probs, labels), mi,
                               consistency_loss(pair.fc, shared_category_pairs(cats, doms)),
                               ssl_loss(mix.y_mix, classify(p, encode_categorical(p, mix.x_mix)))},
                              w);
        });
    });
    out << (ok ? "gradcheck PASS\n" : "gradcheck FAIL\n");
    return ok;
}

bool run_mine_bench(std::ostream& out) {
    out << "mine-bench: Donsker-Varadhan estimate vs analytic Gaussian MI\n";
    bool ok = true;
    const std::size_t n = 10000;
    struct Case {
        double rho, expected, tolerance;
    };
    for (const Case& c : {Case{0.0, 0.0, 0.05}, Case{0.5, 0.14384103622589045, 0.1},
                          Case{0.9, 0.8303656034108255, 0.1}}) {
        const double est = mine_gaussian_estimate(c.rho, n, 20240 + static_cast<int>(c.rho * 10));
        const double err = std::abs(est - c.expected);
        const bool pass = err <= c.tolerance;
        out << (pass ? "  [ok]   " : "  [FAIL] ") << "rho=" << c.rho << ": estimate " << est
            << " vs analytic " << c.expected << " (tolerance " << c.tolerance << ")\n";
        ok &= pass;
    }
    out << (ok ? "mine-bench PASS\n" : "mine-bench FAIL\n");
    return ok;
}

bool run_mixup_stats(std::ostream& out) {
    out << "mixup-stats: coefficient distribution at alpha=0.75\n";
    bool ok = true;
    const double alpha = 0.75;
    const std::size_t n = 100000;
    Rng rng(derive_seed(4242, "mixup-stats"));
    double mean = 0.0, lo = 1.0, hi = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double xi = rng.beta(alpha, alpha);
        const double b = std::max(xi, 1.0 - xi);
        mean += b;
        lo = std::min(lo, b);
        hi = std::max(hi, b);
    }
    mean /= static_cast<double>(n);
    const double oracle = beta_max_mean(alpha);
    const bool range_ok = lo >= 0.5 && hi <= 1.0;
    out << (range_ok ? "  [ok]   " : "  [FAIL] ") << "range: [" << lo << ", " << hi
        << "] within [0.5, 1]\n";
    const double err = std::abs(mean - oracle);
    const bool mean_ok = err <= 0.005;
    out << (mean_ok ? "  [ok]   " : "  [FAIL] ") << "mean " << mean << " vs integration oracle "
        << oracle << " (tolerance 0.005)\n";

    // Convexity: every mixed element lies between its endpoints.
    bool convex_ok = true;
    Rng trng(derive_seed(4242, "mixup-convexity"));
    for (int rep = 0; rep < 50 && convex_ok; ++rep) {
        Tensor x1 = random_tensor({4, 3, 3, 2}, trng, false);
        Tensor x2 = random_tensor({4, 3, 3, 2}, trng, false);
        Tensor y1 = softmax(random_tensor({4, 5}, trng, false), 1).detach();
        Tensor y2 = softmax(random_tensor({4, 5}, trng, false), 1).detach();
        MixResult mix = mixup(x1, x2, y1, y2, MixerConfig{alpha}, trng.next_u64());
        for (std::size_t i = 0; i < mix.x_mix.numel(); ++i) {
            const double lo_e = std::min(x1.data()[i], x2.data()[i]);
            const double hi_e = std::max(x1.data()[i], x2.data()[i]);
            if (mix.x_mix.data()[i] < lo_e - 1e-12 || mix.x_mix.data()[i] > hi_e + 1e-12)
                convex_ok = false;
        }
    }
    out << (convex_ok ? "  [ok]   " : "  [FAIL] ") << "elementwise convexity on random tensors\n";
    ok = range_ok && mean_ok && convex_ok;
    out << (ok ? "mixup-stats PASS\n" : "mixup-stats FAIL\n");
    return ok;
}

bool run_metrics_oracle(std::ostream& out) {
    out << "metrics-oracle: macro metrics vs per-class loop on random matrices\n";
    Rng rng(derive_seed(515, "metrics-oracle"));
    double worst = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t k = 2 + rng.uniform_index(8);
        ConfusionMatrix cm(k);
        for (std::size_t i = 0; i < k; ++i) {
            // at least one example per class row
            cm.at(i, rng.uniform_index(k)) += 1;
            for (std::size_t j = 0; j < k; ++j) cm.at(i, j) += rng.uniform_index(20);
        }
        const Metrics m = metrics(cm);
        const LoopMetrics o = loop_metrics(cm.counts, k);
        worst = std::max({worst, std::abs(m.macro_f1 - o.macro_f1),
                          std::abs(m.macro_recall - o.macro_recall),
                          std::abs(m.macro_precision - o.macro_precision),
                          std::abs(m.accuracy - o.accuracy)});
    }
    const bool ok = worst < 1e-12;
    out << (ok ? "  [ok]   " : "  [FAIL] ") << "max |metrics - loop oracle| = " << worst
        << " (tolerance 1e-12)\n";
    out << (ok ? "metrics-oracle PASS\n" : "metrics-oracle FAIL\n");
    return ok;
}

}  // namespace midnet::verify
