#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "midnet/data.hpp"
#include "midnet/nn.hpp"

namespace midnet {

struct ConfusionMatrix {
    std::size_t k = 0;
    std::vector<std::uint64_t> counts;  // k*k, rows = true class, columns = predicted

    ConfusionMatrix() = default;
    explicit ConfusionMatrix(std::size_t classes) : k(classes), counts(classes * classes, 0) {}

    std::uint64_t& at(std::size_t truth, std::size_t pred) { return counts[truth * k + pred]; }
    std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts[truth * k + pred]; }
    void add(std::size_t truth, std::size_t pred) { ++at(truth, pred); }
    std::uint64_t total() const;
    std::uint64_t row_sum(std::size_t r) const;
    std::uint64_t col_sum(std::size_t c) const;
};

struct Metrics {
    double macro_f1 = 0.0;
    double macro_recall = 0.0;
    double macro_precision = 0.0;
    double accuracy = 0.0;
};

// Macro averages run over classes present in the matrix (row sum > 0).
// 0/0 cases resolve to 0, so reports never contain NaN.
Metrics metrics(const ConfusionMatrix& cm);

// Argmax of classify(encode(x).fc); ties break toward the lowest class index.
std::vector<std::size_t> predict(const MIDNetParams& params, const std::vector<Example>& examples);

ConfusionMatrix confusion(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& predicted,
                          std::size_t k);

struct GroupReport {
    std::string name;
    ConfusionMatrix cm;
    Metrics metrics;
    std::size_t size = 0;
};

struct MetricsReport {
    GroupReport source;       // T_Source
    GroupReport target_seen;  // T_Target
    GroupReport target_new;   // T_Target_New
};

MetricsReport evaluate(const MIDNetParams& params, const DatasetSplit& split);

// Mean over domains present of the macro-F1 on that domain's examples.
double validation_macro_f1(const MIDNetParams& params, const std::vector<Example>& examples,
                           std::size_t k);

void write_metrics_json(const std::string& path, const MetricsReport& report);
void write_confusion_csv(const std::string& path, const ConfusionMatrix& cm);
void write_confusion_pgm(const std::string& path, const ConfusionMatrix& cm);

}  // namespace midnet
