#include "midnet/eval.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

namespace midnet {

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t t = 0;
    for (std::uint64_t c : counts) t += c;
    return t;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t r) const {
    std::uint64_t t = 0;
    for (std::size_t j = 0; j < k; ++j) t += at(r, j);
    return t;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t c) const {
    std::uint64_t t = 0;
    for (std::size_t i = 0; i < k; ++i) t += at(i, c);
    return t;
}

Metrics metrics(const ConfusionMatrix& cm) {
    const std::uint64_t total = cm.total();
    if (cm.k == 0 || total == 0) throw ContractError("metrics: empty confusion matrix");
    Metrics m;
    std::size_t present = 0;
    std::uint64_t trace = 0;
    for (std::size_t c = 0; c < cm.k; ++c) {
        trace += cm.at(c, c);
        const std::uint64_t row = cm.row_sum(c);
        if (row == 0) continue;  // class absent from this group
        ++present;
        const std::uint64_t col = cm.col_sum(c);
        const double tp = static_cast<double>(cm.at(c, c));
        const double recall = tp / static_cast<double>(row);
        const double precision = col == 0 ? 0.0 : tp / static_cast<double>(col);
        const double f1 = (precision + recall) == 0.0 ? 0.0
                                                      : 2.0 * precision * recall / (precision + recall);
        m.macro_recall += recall;
        m.macro_precision += precision;
        m.macro_f1 += f1;
    }
    m.macro_recall /= static_cast<double>(present);
    m.macro_precision /= static_cast<double>(present);
    m.macro_f1 /= static_cast<double>(present);
    m.accuracy = static_cast<double>(trace) / static_cast<double>(total);
    return m;
}

std::vector<std::size_t> predict(const MIDNetParams& params, const std::vector<Example>& examples) {
    std::vector<std::size_t> out;
    out.reserve(examples.size());
    const std::size_t batch = 64;
    NoGradGuard no_grad;
    for (std::size_t start = 0; start < examples.size(); start += batch) {
        std::vector<std::size_t> idx;
        for (std::size_t i = start; i < std::min(start + batch, examples.size()); ++i) idx.push_back(i);
        Tensor probs = classify(params, encode_categorical(params, stack_images(examples, idx)));
        const std::size_t k = probs.dim(1);
        for (std::size_t r = 0; r < idx.size(); ++r) {
            std::size_t best = 0;
            double best_v = probs.data()[r * k];
            for (std::size_t j = 1; j < k; ++j) {
                const double v = probs.data()[r * k + j];
                if (v > best_v) {  // strict: ties keep the lowest index
                    best_v = v;
                    best = j;
                }
            }
            out.push_back(best);
        }
    }
    return out;
}

ConfusionMatrix confusion(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& predicted,
                          std::size_t k) {
    if (truth.size() != predicted.size())
        throw ContractError("confusion: truth/prediction length mismatch");
    ConfusionMatrix cm(k);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] >= k || predicted[i] >= k)
            throw ContractError("confusion: class index out of range");
        cm.add(truth[i], predicted[i]);
    }
    return cm;
}

namespace {

GroupReport evaluate_group(const MIDNetParams& params, const std::vector<Example>& examples,
                           const std::string& name, std::size_t k) {
    if (examples.empty()) throw ContractError("evaluate: empty test group " + name);
    GroupReport g;
    g.name = name;
    g.size = examples.size();
    std::vector<std::size_t> truth;
    truth.reserve(examples.size());
    for (const Example& ex : examples) truth.push_back(static_cast<std::size_t>(ex.category));
    g.cm = confusion(truth, predict(params, examples), k);
    g.metrics = metrics(g.cm);
    return g;
}

}  // namespace

MetricsReport evaluate(const MIDNetParams& params, const DatasetSplit& split) {
    const std::size_t k = static_cast<std::size_t>(split.num_categories);
    MetricsReport r;
    r.source = evaluate_group(params, split.test_source, "T_Source", k);
    r.target_seen = evaluate_group(params, split.test_target_seen, "T_Target", k);
    r.target_new = evaluate_group(params, split.test_target_new, "T_Target_New", k);
    return r;
}

double validation_macro_f1(const MIDNetParams& params, const std::vector<Example>& examples,
                           std::size_t k) {
    if (examples.empty()) return 0.0;
    std::set<int> domains;
    for (const Example& ex : examples) domains.insert(ex.domain);
    double acc = 0.0;
    for (int d : domains) {
        std::vector<Example> subset;
        for (const Example& ex : examples)
            if (ex.domain == d) subset.push_back(ex);
        std::vector<std::size_t> truth;
        for (const Example& ex : subset) truth.push_back(static_cast<std::size_t>(ex.category));
        acc += metrics(confusion(truth, predict(params, subset), k)).macro_f1;
    }
    return acc / static_cast<double>(domains.size());
}

namespace {

nlohmann::json group_json(const GroupReport& g) {
    nlohmann::json j;
    j["size"] = g.size;
    j["accuracy"] = g.metrics.accuracy;
    j["macro_f1"] = g.metrics.macro_f1;
    j["macro_recall"] = g.metrics.macro_recall;
    j["macro_precision"] = g.metrics.macro_precision;
    std::vector<std::vector<std::uint64_t>> rows;
    for (std::size_t i = 0; i < g.cm.k; ++i) {
        std::vector<std::uint64_t> row;
        for (std::size_t jcol = 0; jcol < g.cm.k; ++jcol) row.push_back(g.cm.at(i, jcol));
        rows.push_back(std::move(row));
    }
    j["confusion"] = rows;
    return j;
}

}  // namespace

void write_metrics_json(const std::string& path, const MetricsReport& report) {
    nlohmann::json j;
    j["T_Source"] = group_json(report.source);
    j["T_Target"] = group_json(report.target_seen);
    j["T_Target_New"] = group_json(report.target_new);
    std::ofstream os(path);
    if (!os) throw IoError("cannot write metrics json: " + path);
    os << j.dump(2) << "\n";
}

void write_confusion_csv(const std::string& path, const ConfusionMatrix& cm) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write confusion csv: " + path);
    for (std::size_t i = 0; i < cm.k; ++i) {
        for (std::size_t j = 0; j < cm.k; ++j) {
            if (j) os << ",";
            os << cm.at(i, j);
        }
        os << "\n";
    }
}

void write_confusion_pgm(const std::string& path, const ConfusionMatrix& cm) {
    std::uint64_t mx = 1;
    for (std::uint64_t c : cm.counts) mx = std::max(mx, c);
    std::ofstream os(path);
    if (!os) throw IoError("cannot write confusion pgm: " + path);
    os << "P2\n" << cm.k << " " << cm.k << "\n255\n";
    for (std::size_t i = 0; i < cm.k; ++i) {
        for (std::size_t j = 0; j < cm.k; ++j) {
            if (j) os << " ";
            os << (cm.at(i, j) * 255 / mx);
        }
        os << "\n";
    }
}

}  // namespace midnet
