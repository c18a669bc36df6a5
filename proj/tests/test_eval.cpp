#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "midnet/eval.hpp"
#include "midnet/rng.hpp"
#include "midnet/verify.hpp"

using namespace midnet;

namespace {

EncoderConfig tiny_config() {
    EncoderConfig cfg;
    cfg.filters = {2, 3};
    cfg.strides = {1, 2};
    cfg.kernel_size = 3;
    cfg.in_h = 6;
    cfg.in_w = 6;
    cfg.in_c = 1;
    return cfg;
}

std::vector<Example> random_examples(std::size_t n, int k, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Example> out;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> data(6 * 6);
        for (double& v : data) v = rng.uniform();
        Example ex;
        ex.image = Tensor::from_data({6, 6, 1}, std::move(data));
        ex.category = static_cast<int>(rng.uniform_index(k));
        ex.domain = static_cast<int>(rng.uniform_index(2));
        ex.id = i;
        out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace

TEST_CASE("metrics of a diagonal matrix are all one") {
    ConfusionMatrix cm(4);
    for (std::size_t i = 0; i < 4; ++i) cm.at(i, i) = 5 + i;
    const Metrics m = metrics(cm);
    CHECK(m.macro_f1 == 1.0);
    CHECK(m.macro_recall == 1.0);
    CHECK(m.macro_precision == 1.0);
    CHECK(m.accuracy == 1.0);
}

TEST_CASE("metrics match the frozen two-class oracle") {
    // [[8,2],[3,7]]: per-class P=(8/11, 7/9), R=(0.8, 0.7), F1=(16/21, 98/133).
    ConfusionMatrix cm(2);
    cm.at(0, 0) = 8;
    cm.at(0, 1) = 2;
    cm.at(1, 0) = 3;
    cm.at(1, 1) = 7;
    const Metrics m = metrics(cm);
    CHECK(m.macro_precision == doctest::Approx(0.7525252525252526).epsilon(1e-12));
    CHECK(m.macro_recall == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(m.macro_f1 == doctest::Approx(0.7493734335839599).epsilon(1e-12));
    CHECK(m.accuracy == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("metrics invariant under simultaneous row/column permutation") {
    Rng rng(61);
    ConfusionMatrix cm(5);
    for (std::size_t i = 0; i < 5; ++i) {
        cm.at(i, rng.uniform_index(5)) += 1;
        for (std::size_t j = 0; j < 5; ++j) cm.at(i, j) += rng.uniform_index(12);
    }
    const Metrics base = metrics(cm);
    const auto perm = Rng(62).permutation(5);
    ConfusionMatrix relabeled(5);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j) relabeled.at(perm[i], perm[j]) = cm.at(i, j);
    const Metrics after = metrics(relabeled);
    CHECK(after.macro_f1 == doctest::Approx(base.macro_f1).epsilon(1e-12));
    CHECK(after.macro_recall == doctest::Approx(base.macro_recall).epsilon(1e-12));
    CHECK(after.macro_precision == doctest::Approx(base.macro_precision).epsilon(1e-12));
    CHECK(after.accuracy == doctest::Approx(base.accuracy).epsilon(1e-12));
}

TEST_CASE("zero-diagonal conventions never produce NaN") {
    // Class 1 is never predicted and never correct: P=R=F1=0 for it.
    ConfusionMatrix cm(3);
    cm.at(0, 0) = 4;
    cm.at(1, 0) = 3;  // class 1 all misclassified into 0
    cm.at(2, 2) = 2;
    const Metrics m = metrics(cm);
    CHECK(std::isfinite(m.macro_f1));
    CHECK(std::isfinite(m.macro_precision));
    CHECK(m.macro_recall == doctest::Approx((1.0 + 0.0 + 1.0) / 3.0));
    CHECK_THROWS_AS(metrics(ConfusionMatrix(3)), ContractError);
}

TEST_CASE("metrics against the loop oracle on random matrices") {
    std::ostringstream sink;
    CHECK(verify::run_metrics_oracle(sink));
}

TEST_CASE("predict ties break toward the lowest class index") {
    MIDNetParams p = build_midnet(tiny_config(), 4, {5}, {5}, 71);
    // Zero classifier head: uniform probabilities, so always class 0.
    for (double& v : p.classifier.layers.back().w.data()) v = 0.0;
    for (double& v : p.classifier.layers.back().b.data()) v = 0.0;
    const auto examples = random_examples(9, 4, 72);
    const auto preds = predict(p, examples);
    for (std::size_t v : preds) CHECK(v == 0);
}

TEST_CASE("permuting the evaluation order permutes predictions") {
    MIDNetParams p = build_midnet(tiny_config(), 4, {5}, {5}, 73);
    const auto examples = random_examples(11, 4, 74);
    const auto preds = predict(p, examples);
    std::vector<Example> reversed(examples.rbegin(), examples.rend());
    const auto rpreds = predict(p, reversed);
    for (std::size_t i = 0; i < preds.size(); ++i)
        CHECK(rpreds[i] == preds[preds.size() - 1 - i]);
}

TEST_CASE("predictions equal an independent forward replay") {
    MIDNetParams p = build_midnet(tiny_config(), 3, {5}, {5}, 75);
    const auto examples = random_examples(7, 3, 76);
    const auto preds = predict(p, examples);
    for (std::size_t i = 0; i < examples.size(); ++i) {
        // one-example forward pass, argmax by scanning ascending
        Tensor probs = classify(p, encode(p, stack_images(examples, {i})).fc);
        std::size_t best = 0;
        for (std::size_t j = 1; j < 3; ++j)
            if (probs.at({0, j}) > probs.at({0, best})) best = j;
        CHECK(preds[i] == best);
    }
}

TEST_CASE("evaluate produces group reports that compose") {
    MIDNetParams p = build_midnet(tiny_config(), 3, {5}, {5}, 77);
    DatasetSplit split;
    split.num_categories = 3;
    split.target_categories = {0};
    auto pool = random_examples(30, 3, 78);
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (i % 3 == 0) {
            pool[i].domain = 0;
            split.test_source.push_back(pool[i]);
        } else if (i % 3 == 1) {
            pool[i].domain = 1;
            pool[i].category = 0;
            split.test_target_seen.push_back(pool[i]);
        } else {
            pool[i].domain = 1;
            pool[i].category = 1 + static_cast<int>(i % 2);
            split.test_target_new.push_back(pool[i]);
        }
    }
    const MetricsReport report = evaluate(p, split);
    CHECK(report.source.size == split.test_source.size());
    CHECK(report.target_seen.size == split.test_target_seen.size());
    CHECK(report.target_new.size == split.test_target_new.size());
    CHECK(report.source.cm.total() == split.test_source.size());

    // Compositional replay: metrics(confusion(predict(...))).
    const auto preds = predict(p, split.test_target_new);
    std::vector<std::size_t> truth;
    for (const Example& ex : split.test_target_new) truth.push_back(ex.category);
    const ConfusionMatrix cm = confusion(truth, preds, 3);
    CHECK(cm.counts == report.target_new.cm.counts);
    const Metrics m = metrics(cm);
    CHECK(m.macro_f1 == report.target_new.metrics.macro_f1);

    // Row sums equal per-class example counts.
    std::vector<std::uint64_t> per_class(3, 0);
    for (const Example& ex : split.test_source) ++per_class[ex.category];
    for (std::size_t c = 0; c < 3; ++c) CHECK(report.source.cm.row_sum(c) == per_class[c]);

    // A predictor restricted to source-seen classes has zero recall on
    // classes it never emits.
    bool new_class_recall_possible = false;
    for (std::size_t c = 1; c < 3; ++c)
        if (report.target_new.cm.at(c, c) > 0) new_class_recall_possible = true;
    (void)new_class_recall_possible;  // structural: matrix is well-formed either way

    DatasetSplit empty_group = split;
    empty_group.test_target_new.clear();
    CHECK_THROWS_WITH_AS(evaluate(p, empty_group), doctest::Contains("T_Target_New"),
                         ContractError);
}

TEST_CASE("report files are deterministic and mutually consistent") {
    MIDNetParams p = build_midnet(tiny_config(), 3, {5}, {5}, 79);
    DatasetSplit split;
    split.num_categories = 3;
    split.target_categories = {0};
    auto pool = random_examples(24, 3, 80);
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (i % 3 == 0) split.test_source.push_back(pool[i]);
        if (i % 3 == 1) split.test_target_seen.push_back(pool[i]);
        if (i % 3 == 2) split.test_target_new.push_back(pool[i]);
    }
    const MetricsReport report = evaluate(p, split);
    const auto dir = std::filesystem::temp_directory_path() / "midnet_eval_test";
    std::filesystem::create_directories(dir);
    write_metrics_json((dir / "metrics.json").string(), report);
    write_metrics_json((dir / "metrics2.json").string(), report);
    std::ifstream a(dir / "metrics.json"), b(dir / "metrics2.json");
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    CHECK(sa.str() == sb.str());
    CHECK(sa.str().find("\"T_Source\"") != std::string::npos);
    CHECK(sa.str().find("\"macro_f1\"") != std::string::npos);

    write_confusion_csv((dir / "cm.csv").string(), report.source.cm);
    std::ifstream csv(dir / "cm.csv");
    std::vector<std::vector<std::uint64_t>> parsed;
    std::string line;
    while (std::getline(csv, line)) {
        std::vector<std::uint64_t> row;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) row.push_back(std::stoull(cell));
        parsed.push_back(row);
    }
    REQUIRE(parsed.size() == 3);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(parsed[i][j] == report.source.cm.at(i, j));

    write_confusion_pgm((dir / "cm.pgm").string(), report.source.cm);
    std::ifstream pgm(dir / "cm.pgm");
    std::string magic;
    pgm >> magic;
    CHECK(magic == "P2");
    std::size_t w = 0, h = 0;
    int maxval = 0;
    pgm >> w >> h >> maxval;
    CHECK(w == 3);
    CHECK(h == 3);
    CHECK(maxval == 255);
    std::filesystem::remove_all(dir);
}

TEST_CASE("validation macro f1 averages across domains") {
    MIDNetParams p = build_midnet(tiny_config(), 3, {5}, {5}, 81);
    auto examples = random_examples(12, 3, 82);
    for (std::size_t i = 0; i < examples.size(); ++i) examples[i].domain = i < 6 ? 0 : 1;

    std::vector<Example> source(examples.begin(), examples.begin() + 6);
    std::vector<Example> target(examples.begin() + 6, examples.end());
    const auto macro = [&p](const std::vector<Example>& exs) {
        std::vector<std::size_t> truth;
        for (const Example& ex : exs) truth.push_back(ex.category);
        return metrics(confusion(truth, predict(p, exs), 3)).macro_f1;
    };
    const double expect = 0.5 * (macro(source) + macro(target));
    CHECK(validation_macro_f1(p, examples, 3) == doctest::Approx(expect).epsilon(1e-12));
}
