#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "midnet/data.hpp"
#include "midnet/nn.hpp"
#include "midnet/trainer.hpp"

namespace midnet {

// One flat experiment description: dataset, split, model, and training
// settings. Parsed from plain key=value files with strict unknown-key
// rejection so typos in loss weights cannot drift silently.
struct ExperimentConfig {
    // data
    int num_categories = 10;
    std::size_t image_size = 16;
    double noise_sigma = 0.05;
    int source_train_per_cell = 80;
    int target_train_per_cell = 80;
    int target_new_test_per_cell = 40;
    double test_fraction = 0.25;
    std::vector<int> target_categories{0, 1, 2, 3, 4};
    double labeled_fraction = 0.3;

    // model
    std::vector<int> filters{8, 16, 32, 8};
    std::vector<int> strides{1, 2, 2, 1};
    int kernel_size = 3;
    std::vector<int> classifier_units{128, 128};
    std::vector<int> mine_units{128, 128};

    // training
    std::string ablation = "midnet-viii";
    double lambda1 = 1.0, lambda2 = 10.0, lambda3 = 1e-3, lambda4 = 1e2, lambda5 = 1e3;
    double alpha = 0.75;
    double adam_lr = 1e-5, adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
    double sgd_lr = 1e-5, sgd_momentum = 0.9;
    double l2_scale = 1e-5;
    bool include_theta_l2 = false;
    int mine_steps_per_main = 1;
    double clip_norm = 10.0;
    int epochs = 50;
    std::size_t batch_size = 64;
    bool use_unlabeled = true;
    bool augment = true;
    bool log_timing = false;
    bool float32 = false;

    std::uint64_t seed = 1;

    std::set<std::string> present_keys;  // keys that appeared in the file

    void require(const std::vector<std::string>& keys) const;
    void validate() const;

    SyntheticSpec synthetic_spec() const;
    std::vector<CellCount> generation_counts() const;
    std::set<int> target_category_set() const;
    EncoderConfig encoder_config() const;
    TrainConfig train_config() const;
};

ExperimentConfig load_experiment_config(const std::string& path);
// Parses from an already-read text blob (for tests).
ExperimentConfig parse_experiment_config(const std::string& text, const std::string& origin);

}  // namespace midnet
