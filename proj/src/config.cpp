#include "midnet/config.hpp"

#include <fstream>
#include <sstream>

#include "midnet/rng.hpp"

namespace midnet {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

std::vector<int> parse_int_list(const std::string& v, const std::string& key) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string part;
    while (std::getline(ss, part, ',')) {
        part = trim(part);
        if (part.empty()) throw ConfigError("config key " + key + ": empty list entry");
        try {
            out.push_back(std::stoi(part));
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + ": bad integer '" + part + "'");
        }
    }
    if (out.empty()) throw ConfigError("config key " + key + ": empty list");
    return out;
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config key " + key + ": expected true/false, got '" + v + "'");
}

double parse_double(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": bad number '" + v + "'");
    }
}

long long parse_int(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        const long long i = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": bad integer '" + v + "'");
    }
}

std::uint64_t parse_u64(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        const std::uint64_t i = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": bad unsigned integer '" + v + "'");
    }
}

}  // namespace

void ExperimentConfig::require(const std::vector<std::string>& keys) const {
    for (const std::string& k : keys)
        if (!present_keys.contains(k))
            throw ConfigError("config missing required key: " + k);
}

void ExperimentConfig::validate() const {
    if (num_categories < 2) throw ConfigError("config: num_categories must be >= 2");
    if (image_size < 4) throw ConfigError("config: image_size must be >= 4");
    if (labeled_fraction <= 0 || labeled_fraction > 1)
        throw ConfigError("config: labeled_fraction must be in (0, 1]");
    if (test_fraction < 0 || test_fraction >= 1)
        throw ConfigError("config: test_fraction must be in [0, 1)");
    if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0 || lambda4 < 0 || lambda5 < 0)
        throw ConfigError("config: negative loss weight");
    LossWeights::ablation(ablation);  // validates the name
    encoder_config().validate();
    train_config().validate();
}

SyntheticSpec ExperimentConfig::synthetic_spec() const {
    SyntheticSpec spec;
    spec.num_categories = num_categories;
    spec.height = image_size;
    spec.width = image_size;
    spec.noise_sigma = noise_sigma;
    spec.seed = derive_seed(seed, "data");
    return spec;
}

std::vector<CellCount> ExperimentConfig::generation_counts() const {
    const std::set<int> targets = target_category_set();
    std::vector<CellCount> counts;
    for (int c = 0; c < num_categories; ++c)
        counts.push_back({c, 0, source_train_per_cell});
    for (int c = 0; c < num_categories; ++c) {
        if (targets.contains(c))
            counts.push_back({c, 1, target_train_per_cell});
        else
            counts.push_back({c, 1, target_new_test_per_cell});
    }
    return counts;
}

std::set<int> ExperimentConfig::target_category_set() const {
    return {target_categories.begin(), target_categories.end()};
}

EncoderConfig ExperimentConfig::encoder_config() const {
    EncoderConfig cfg;
    cfg.filters = filters;
    cfg.strides = strides;
    cfg.kernel_size = kernel_size;
    cfg.in_h = image_size;
    cfg.in_w = image_size;
    cfg.in_c = 3;
    return cfg;
}

TrainConfig ExperimentConfig::train_config() const {
    TrainConfig cfg;
    cfg.weights = LossWeights::ablation(ablation);
    cfg.weights.lambda1 = lambda1;
    cfg.weights.lambda2 = lambda2;
    cfg.weights.lambda3 = lambda3;
    cfg.weights.lambda4 = lambda4;
    cfg.weights.lambda5 = lambda5;
    cfg.mixer.alpha = alpha;
    cfg.adam_lr = adam_lr;
    cfg.adam_beta1 = adam_beta1;
    cfg.adam_beta2 = adam_beta2;
    cfg.adam_eps = adam_eps;
    cfg.sgd_lr = sgd_lr;
    cfg.sgd_momentum = sgd_momentum;
    cfg.l2_scale = l2_scale;
    cfg.include_theta_l2 = include_theta_l2;
    cfg.mine_steps_per_main = mine_steps_per_main;
    cfg.clip_norm = clip_norm;
    cfg.epochs = epochs;
    cfg.batch_size = batch_size;
    cfg.labeled_fraction = labeled_fraction;
    cfg.seed = derive_seed(seed, "train");
    cfg.use_unlabeled = use_unlabeled;
    cfg.augment = augment;
    cfg.source_only = ablation == "source-only";
    cfg.log_timing = log_timing;
    return cfg;
}

ExperimentConfig parse_experiment_config(const std::string& text, const std::string& origin) {
    ExperimentConfig cfg;
    std::stringstream ss(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key=value, got '" +
                              line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (cfg.present_keys.contains(key))
            throw ConfigError(origin + ": duplicate key " + key);
        cfg.present_keys.insert(key);

        if (key == "num_categories") cfg.num_categories = static_cast<int>(parse_int(value, key));
        else if (key == "image_size") cfg.image_size = static_cast<std::size_t>(parse_int(value, key));
        else if (key == "noise_sigma") cfg.noise_sigma = parse_double(value, key);
        else if (key == "source_train_per_cell") cfg.source_train_per_cell = static_cast<int>(parse_int(value, key));
        else if (key == "target_train_per_cell") cfg.target_train_per_cell = static_cast<int>(parse_int(value, key));
        else if (key == "target_new_test_per_cell") cfg.target_new_test_per_cell = static_cast<int>(parse_int(value, key));
        else if (key == "test_fraction") cfg.test_fraction = parse_double(value, key);
        else if (key == "target_categories") cfg.target_categories = parse_int_list(value, key);
        else if (key == "labeled_fraction") cfg.labeled_fraction = parse_double(value, key);
        else if (key == "filters") cfg.filters = parse_int_list(value, key);
        else if (key == "strides") cfg.strides = parse_int_list(value, key);
        else if (key == "kernel_size") cfg.kernel_size = static_cast<int>(parse_int(value, key));
        else if (key == "classifier_units") cfg.classifier_units = parse_int_list(value, key);
        else if (key == "mine_units") cfg.mine_units = parse_int_list(value, key);
        else if (key == "ablation") cfg.ablation = value;
        else if (key == "lambda1") cfg.lambda1 = parse_double(value, key);
        else if (key == "lambda2") cfg.lambda2 = parse_double(value, key);
        else if (key == "lambda3") cfg.lambda3 = parse_double(value, key);
        else if (key == "lambda4") cfg.lambda4 = parse_double(value, key);
        else if (key == "lambda5") cfg.lambda5 = parse_double(value, key);
        else if (key == "alpha") cfg.alpha = parse_double(value, key);
        else if (key == "adam_lr") cfg.adam_lr = parse_double(value, key);
        else if (key == "adam_beta1") cfg.adam_beta1 = parse_double(value, key);
        else if (key == "adam_beta2") cfg.adam_beta2 = parse_double(value, key);
        else if (key == "adam_eps") cfg.adam_eps = parse_double(value, key);
        else if (key == "sgd_lr") cfg.sgd_lr = parse_double(value, key);
        else if (key == "sgd_momentum") cfg.sgd_momentum = parse_double(value, key);
        else if (key == "l2_scale") cfg.l2_scale = parse_double(value, key);
        else if (key == "include_theta_l2") cfg.include_theta_l2 = parse_bool(value, key);
        else if (key == "mine_steps_per_main") cfg.mine_steps_per_main = static_cast<int>(parse_int(value, key));
        else if (key == "clip_norm") cfg.clip_norm = parse_double(value, key);
        else if (key == "epochs") cfg.epochs = static_cast<int>(parse_int(value, key));
        else if (key == "batch_size") cfg.batch_size = static_cast<std::size_t>(parse_int(value, key));
        else if (key == "use_unlabeled") cfg.use_unlabeled = parse_bool(value, key);
        else if (key == "augment") cfg.augment = parse_bool(value, key);
        else if (key == "log_timing") cfg.log_timing = parse_bool(value, key);
        else if (key == "float32") cfg.float32 = parse_bool(value, key);
        else if (key == "seed") cfg.seed = parse_u64(value, key);
        else
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config file: " + path);
    std::stringstream buffer;
    buffer << is.rdbuf();
    return parse_experiment_config(buffer.str(), path);
}

}  // namespace midnet
