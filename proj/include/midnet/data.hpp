#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "midnet/tensor.hpp"

namespace midnet {

struct Example {
    Tensor image;  // [H, W, C], values in [0, 1]
    int category = 0;
    int domain = 0;  // 0 source, 1 target
    bool labeled = true;
    std::uint64_t id = 0;
};

// Procedural two-domain image problem. The category factor is the glyph
// geometry; the domain factor is the appearance map applied on top. The two
// are generated independently, so ground-truth disentanglement holds by
// construction.
struct SyntheticSpec {
    int num_categories = 10;
    std::size_t height = 16;
    std::size_t width = 16;
    std::size_t channels = 3;
    double noise_sigma = 0.05;
    std::uint64_t seed = 0;
    // Test hook: render the target domain with the identity transform.
    bool identity_target_transform = false;
};

struct CellCount {
    int category = 0;
    int domain = 0;
    int count = 0;
};

// Binary glyph mask for one category, [H, W]. Identical for both domains.
Tensor glyph_mask(const SyntheticSpec& spec, int category);

std::vector<Example> generate_synthetic(const SyntheticSpec& spec, const std::vector<CellCount>& counts);

struct DatasetSplit {
    std::vector<Example> train_labeled;
    std::vector<Example> train_unlabeled;
    std::vector<Example> validation;
    std::vector<Example> test_source;
    std::vector<Example> test_target_seen;
    std::vector<Example> test_target_new;
    std::set<int> target_categories;  // C^T, a proper subset of all categories
    int num_categories = 0;
};

// Carves test cells per (category, domain), splits the remaining pool
// train:validation 8:2, then labels a stratified fraction of the train side.
// Target-domain examples of categories outside C^T go to test_target_new in
// full. Rounding is half-up throughout.
DatasetSplit partition(const std::vector<Example>& examples, double labeled_fraction,
                       const std::set<int>& target_categories, int num_categories,
                       double test_fraction, std::uint64_t seed);

// Index batches over split.train_labeled for one epoch; each batch holds an
// equal (+-1) number of examples per labeled category, remainder distributed
// round-robin. Queues reshuffle per epoch from the seed.
std::vector<std::vector<std::size_t>> balanced_labeled_batches(const DatasetSplit& split,
                                                               std::size_t batch_size,
                                                               std::uint64_t seed, std::size_t epoch);

// Uniformly shuffled index stream, reshuffled on every wrap.
class UniformCycler {
public:
    UniformCycler(std::size_t n, std::uint64_t seed);
    std::vector<std::size_t> next(std::size_t count);

private:
    void reshuffle();
    std::size_t n_;
    std::uint64_t seed_;
    std::uint64_t wraps_ = 0;
    std::size_t pos_ = 0;
    std::vector<std::size_t> order_;
};

Tensor flip_horizontal(const Tensor& image);
// Flips with probability 0.5; deterministic given the seed.
Tensor augment_flip(const Tensor& image, std::uint64_t seed);

// Stacks example images into one [n, H, W, C] constant tensor.
Tensor stack_images(const std::vector<Example>& examples, const std::vector<std::size_t>& indices);
Tensor stack_images(const std::vector<Example>& examples);
Tensor one_hot(const std::vector<std::size_t>& labels, std::size_t num_classes);

// --- dataset directory format ------------------------------------------
// manifest.txt: "# key=value" header lines then one record per example:
// "<relative path> <category> <domain> <labeled> <partition>".
void write_dataset(const std::string& dir, const DatasetSplit& split, const SyntheticSpec& spec);
DatasetSplit load_dataset(const std::string& dir);

}  // namespace midnet
