#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "midnet/nn.hpp"
#include "midnet/rng.hpp"
#include "midnet/verify.hpp"

using namespace midnet;

namespace {

EncoderConfig digits_config() {
    EncoderConfig cfg;
    cfg.filters = {8, 16, 32, 8};
    cfg.strides = {1, 2, 2, 1};
    cfg.kernel_size = 3;
    cfg.in_h = 28;
    cfg.in_w = 28;
    cfg.in_c = 3;
    return cfg;
}

EncoderConfig tiny_config(std::size_t h = 6, std::size_t w = 6) {
    EncoderConfig cfg;
    cfg.filters = {2, 3};
    cfg.strides = {1, 2};
    cfg.kernel_size = 3;
    cfg.in_h = h;
    cfg.in_w = w;
    cfg.in_c = 1;
    return cfg;
}

Tensor random_input(const EncoderConfig& cfg, std::size_t batch, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> data(batch * cfg.in_h * cfg.in_w * cfg.in_c);
    for (double& v : data) v = rng.uniform();
    return Tensor::from_data({batch, cfg.in_h, cfg.in_w, cfg.in_c}, std::move(data));
}

void fill_all(MIDNetParams& p, double v) {
    for (auto& [name, t] : p.named_parameters())
        for (double& x : t.data()) x = v;
}

}  // namespace

TEST_CASE("digits config feature extents follow stride arithmetic") {
    const EncoderConfig cfg = digits_config();
    const auto res = cfg.resolutions();
    REQUIRE(res.size() == 5);
    CHECK(res[0] == std::pair<std::size_t, std::size_t>{28, 28});
    CHECK(res[1] == std::pair<std::size_t, std::size_t>{28, 28});
    CHECK(res[2] == std::pair<std::size_t, std::size_t>{14, 14});
    CHECK(res[3] == std::pair<std::size_t, std::size_t>{7, 7});
    CHECK(res[4] == std::pair<std::size_t, std::size_t>{7, 7});

    MIDNetParams p = build_midnet(cfg, 10, {128, 128}, {128, 128}, 5);
    FeaturePair pair = encode(p, random_input(cfg, 2, 6));
    CHECK(pair.fc.shape() == Shape{2, 7, 7, 8});
    CHECK(pair.fd.shape() == Shape{2, 7, 7, 8});
    REQUIRE(pair.skip_activations.size() == 3);
    CHECK(pair.skip_activations[0].shape() == Shape{2, 28, 28, 8});
    CHECK(pair.skip_activations[1].shape() == Shape{2, 14, 14, 16});
    CHECK(pair.skip_activations[2].shape() == Shape{2, 7, 7, 32});
}

TEST_CASE("identical seeds build bit-identical parameters") {
    const EncoderConfig cfg = tiny_config();
    MIDNetParams a = build_midnet(cfg, 4, {8}, {8}, 42);
    MIDNetParams b = build_midnet(cfg, 4, {8}, {8}, 42);
    const auto na = a.named_parameters();
    const auto nb = b.named_parameters();
    REQUIRE(na.size() == nb.size());
    for (std::size_t i = 0; i < na.size(); ++i) {
        CHECK(na[i].first == nb[i].first);
        CHECK(na[i].second.data() == nb[i].second.data());
    }
    MIDNetParams c = build_midnet(cfg, 4, {8}, {8}, 43);
    CHECK(c.named_parameters()[0].second.data() != na[0].second.data());
}

TEST_CASE("parameter count matches a hand count for a one-stage config") {
    EncoderConfig cfg;
    cfg.filters = {2};
    cfg.strides = {1};
    cfg.kernel_size = 3;
    cfg.in_h = 4;
    cfg.in_w = 4;
    cfg.in_c = 1;
    MIDNetParams p = build_midnet(cfg, 2, {5}, {3}, 1);

    // Encoder stage (x2): conv1 3*3*1*2+2, conv2 3*3*2*2+2, proj 1*1*1*2+2.
    const std::size_t enc = (18 + 2) + (36 + 2) + (2 + 2);
    // Feature: 4*4*2 = 32 flat. Classifier: 32*5+5 then 5*2+2.
    const std::size_t cls = 32 * 5 + 5 + 5 * 2 + 2;
    // Decoder (L=1): single conv from concat(fc, fd) = 4 channels to in_c: 3*3*4*1+1.
    const std::size_t dec = 36 + 1;
    // MINE: input 64 -> 3 -> 1.
    const std::size_t mine = 64 * 3 + 3 + 3 * 1 + 1;
    CHECK(p.parameter_count() == 2 * enc + cls + dec + mine);
}

TEST_CASE("build_midnet validates its configuration") {
    const EncoderConfig cfg = tiny_config();
    CHECK_THROWS_AS(build_midnet(cfg, 1, {8}, {8}, 1), ConfigError);
    CHECK_THROWS_AS(build_midnet(cfg, 3, {}, {8}, 1), ConfigError);
    CHECK_THROWS_AS(build_midnet(cfg, 3, {8}, {}, 1), ConfigError);
    EncoderConfig bad = cfg;
    bad.strides = {1};
    CHECK_THROWS_AS(build_midnet(bad, 3, {8}, {8}, 1), ConfigError);
}

TEST_CASE("encoders are independent") {
    const EncoderConfig cfg = tiny_config();
    MIDNetParams p = build_midnet(cfg, 3, {8}, {8}, 7);
    Tensor x = random_input(cfg, 2, 8);
    FeaturePair before = encode(p, x);

    // Perturb one phi1 weight: fc changes, fd stays bit-identical.
    p.e1.stages[0].conv1.w.data()[0] += 0.25;
    FeaturePair after = encode(p, x);
    CHECK(after.fd.data() == before.fd.data());
    CHECK(after.fc.data() != before.fc.data());

    // And the mirror image for phi2.
    p.e2.stages[1].conv2.w.data()[3] += 0.25;
    FeaturePair last = encode(p, x);
    CHECK(last.fc.data() == after.fc.data());
    CHECK(last.fd.data() != after.fd.data());
}

TEST_CASE("zero input through zero-initialized encoders gives zero features") {
    const EncoderConfig cfg = tiny_config();
    MIDNetParams p = build_midnet(cfg, 3, {8}, {8}, 9);
    fill_all(p, 0.0);
    Tensor x = Tensor::zeros({1, cfg.in_h, cfg.in_w, cfg.in_c});
    FeaturePair pair = encode(p, x);
    for (double v : pair.fc.data()) CHECK(v == 0.0);
    for (double v : pair.fd.data()) CHECK(v == 0.0);
}

TEST_CASE("encode rejects mismatched input shapes") {
    const EncoderConfig cfg = tiny_config();
    MIDNetParams p = build_midnet(cfg, 3, {8}, {8}, 9);
    CHECK_THROWS_AS(encode(p, Tensor::zeros({1, 5, 6, 1})), ShapeError);
}

TEST_CASE("decode returns the input shape, including odd extents") {
    for (const std::size_t side : {6u, 7u, 10u}) {
        EncoderConfig cfg = tiny_config(side, side);
        MIDNetParams p = build_midnet(cfg, 3, {8}, {8}, side);
        Tensor x = random_input(cfg, 2, side + 1);
        Tensor x_hat = decode(p, encode(p, x));
        CHECK(x_hat.shape() == x.shape());
    }
    // The digits mirror: 28 -> 7 -> 28.
    const EncoderConfig cfg = digits_config();
    MIDNetParams p = build_midnet(cfg, 10, {16}, {16}, 3);
    Tensor x = random_input(cfg, 1, 4);
    CHECK(decode(p, encode(p, x)).shape() == x.shape());
}

TEST_CASE("zeroed decoder parameters give a feature-independent output") {
    const EncoderConfig cfg = tiny_config();
    MIDNetParams p = build_midnet(cfg, 3, {8}, {8}, 11);
    for (Conv2dLayer& conv : p.decoder.convs) {
        for (double& v : conv.w.data()) v = 0.0;
        for (double& v : conv.b.data()) v = 0.0;
    }
    p.decoder.convs.back().b.data()[0] = 0.37;  // constant bias survives
    Tensor a = decode(p, encode(p, random_input(cfg, 1, 21)));
    Tensor b = decode(p, encode(p, random_input(cfg, 1, 22)));
    CHECK(a.data() == b.data());
    CHECK(a.data()[0] == doctest::Approx(0.37));
}

TEST_CASE("reconstruction gradient reaches phi2 through fd and through skips") {
    const EncoderConfig cfg = tiny_config();
    MIDNetParams p = build_midnet(cfg, 3, {8}, {8}, 13);
    Tensor x = random_input(cfg, 2, 23);

    const auto loss_value = [&](bool freeze_fd, bool freeze_skips, const FeaturePair& frozen) {
        FeaturePair pair = encode(p, x);
        if (freeze_fd) pair.fd = frozen.fd;
        if (freeze_skips) pair.skip_activations = frozen.skip_activations;
        Tensor diff = sub(decode(p, pair), x);
        return frobenius_sq(diff).item();
    };

    const FeaturePair frozen_raw = encode(p, x);
    FeaturePair frozen;
    frozen.fc = frozen_raw.fc.detach();
    frozen.fd = frozen_raw.fd.detach();
    for (const Tensor& s : frozen_raw.skip_activations)
        frozen.skip_activations.push_back(s.detach());

    // Central differences on one phi2 weight with the other path frozen.
    Tensor w = p.e2.stages[0].conv1.w;
    const double h = 1e-5;
    const double saved = w.data()[1];

    w.data()[1] = saved + h;
    const double fd_path_plus = loss_value(false, true, frozen);
    w.data()[1] = saved - h;
    const double fd_path_minus = loss_value(false, true, frozen);
    w.data()[1] = saved;
    const double grad_via_fd = (fd_path_plus - fd_path_minus) / (2 * h);

    w.data()[1] = saved + h;
    const double skip_path_plus = loss_value(true, false, frozen);
    w.data()[1] = saved - h;
    const double skip_path_minus = loss_value(true, false, frozen);
    w.data()[1] = saved;
    const double grad_via_skips = (skip_path_plus - skip_path_minus) / (2 * h);

    CHECK(std::abs(grad_via_fd) > 1e-8);
    CHECK(std::abs(grad_via_skips) > 1e-8);
}

TEST_CASE("classify emits probability rows") {
    const EncoderConfig cfg = tiny_config();
    MIDNetParams p = build_midnet(cfg, 5, {8}, {8}, 17);
    Tensor probs = classify(p, encode(p, random_input(cfg, 3, 31)).fc);
    REQUIRE(probs.shape() == Shape{3, 5});
    for (std::size_t r = 0; r < 3; ++r) {
        double row = 0.0;
        for (std::size_t j = 0; j < 5; ++j) {
            row += probs.at({r, j});
            CHECK(probs.at({r, j}) >= 0.0);
        }
        CHECK(std::abs(row - 1.0) < 1e-12);
    }

    // Zeroed final layer: uniform rows.
    for (double& v : p.classifier.layers.back().w.data()) v = 0.0;
    for (double& v : p.classifier.layers.back().b.data()) v = 0.0;
    Tensor uniform = classify(p, encode(p, random_input(cfg, 2, 32)).fc);
    for (double v : uniform.data()) CHECK(v == doctest::Approx(0.2).epsilon(1e-14));
}

TEST_CASE("statistics network is a per-sample map") {
    const EncoderConfig cfg = tiny_config();
    MIDNetParams p = build_midnet(cfg, 3, {8}, {4}, 19);
    Tensor x = random_input(cfg, 4, 33);
    FeaturePair pair = encode(p, x);

    // Constant-output network: zero weights, bias c.
    for (DenseLayer& l : p.mine.layers) {
        for (double& v : l.w.data()) v = 0.0;
        for (double& v : l.b.data()) v = 0.0;
    }
    p.mine.layers.back().b.data()[0] = 1.25;
    Tensor scores = statistics_net(p, pair.fc, pair.fd);
    REQUIRE(scores.shape() == Shape{4, 1});
    for (double v : scores.data()) CHECK(v == doctest::Approx(1.25).epsilon(1e-15));

    // Permuting the batch permutes scores identically.
    MIDNetParams q = build_midnet(cfg, 3, {8}, {4}, 20);
    Tensor base = statistics_net(q, pair.fc, pair.fd);
    const std::vector<std::size_t> perm{2, 0, 3, 1};
    Tensor permuted = statistics_net(q, gather_rows(pair.fc, perm), gather_rows(pair.fd, perm));
    for (std::size_t i = 0; i < perm.size(); ++i)
        CHECK(permuted.at({i, 0}) == doctest::Approx(base.at({perm[i], 0})).epsilon(1e-14));

    // Finite differences of the scores with respect to theta.
    Tensor fc_const = pair.fc.detach();
    Tensor fd_const = pair.fd.detach();
    const auto check = verify::finite_difference_check(
        q.theta_parameters(), [&] { return sum(statistics_net(q, fc_const, fd_const)); });
    CHECK_FALSE(check.at_kink);
    CHECK(check.max_err < 1e-4);
}

TEST_CASE("statistics network rejects mismatched batches") {
    const EncoderConfig cfg = tiny_config();
    MIDNetParams p = build_midnet(cfg, 3, {8}, {4}, 21);
    Tensor a = Tensor::zeros({2, 3, 3, 3});
    Tensor b = Tensor::zeros({3, 3, 3, 3});
    CHECK_THROWS_AS(statistics_net(p, a, b), ShapeError);
}

TEST_CASE("rebuilding with the same seed reproduces forward outputs") {
    const EncoderConfig cfg = tiny_config();
    Tensor x = random_input(cfg, 2, 55);
    auto run = [&cfg, &x] {
        MIDNetParams p = build_midnet(cfg, 3, {8}, {8}, 77);
        FeaturePair pair = encode(p, x);
        Tensor out = decode(p, pair);
        return out.data();
    };
    CHECK(run() == run());
}

TEST_CASE("checkpoint round-trip is bit-exact") {
    const EncoderConfig cfg = tiny_config();
    MIDNetParams p = build_midnet(cfg, 4, {6, 5}, {7}, 23);
    // Give the parameters non-initial values.
    Rng rng(24);
    for (auto& [name, t] : p.named_parameters())
        for (double& v : t.data()) v = rng.normal();

    const std::string path =
        (std::filesystem::temp_directory_path() / "midnet_ckpt_test.ckpt").string();
    Checkpoint ckpt = to_checkpoint(p, 12);
    write_checkpoint(path, ckpt);
    Checkpoint loaded = read_checkpoint(path);
    CHECK(*loaded.find("step") == "12");

    MIDNetParams q = params_from_checkpoint(loaded);
    const auto np = p.named_parameters();
    const auto nq = q.named_parameters();
    REQUIRE(np.size() == nq.size());
    for (std::size_t i = 0; i < np.size(); ++i) {
        CHECK(np[i].first == nq[i].first);
        CHECK(np[i].second.data() == nq[i].second.data());
    }
    CHECK(q.num_classes == 4);
    CHECK(q.classifier_units == std::vector<int>{6, 5});
    std::filesystem::remove(path);
}
