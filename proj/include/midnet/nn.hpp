#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "midnet/tensor.hpp"

namespace midnet {

struct EncoderConfig {
    std::vector<int> filters;
    std::vector<int> strides;
    int kernel_size = 3;
    std::size_t in_h = 0, in_w = 0, in_c = 0;

    void validate() const;
    std::size_t stages() const { return filters.size(); }
    // Spatial extents after each stage: index 0 is the input resolution.
    std::vector<std::pair<std::size_t, std::size_t>> resolutions() const;
};

struct Conv2dLayer {
    Tensor w;  // [kh, kw, cin, cout]
    Tensor b;  // [cout]
    int stride = 1;
};

struct DenseLayer {
    Tensor w;  // [in, out]
    Tensor b;  // [out]
};

// conv -> relu -> conv, plus an identity skip (1x1-conv-projected when the
// stride or channel count changes). No normalization layers anywhere.
struct ResidualUnit {
    Conv2dLayer conv1, conv2;
    std::optional<Conv2dLayer> proj;
};

struct Encoder {
    std::vector<ResidualUnit> stages;
};

struct Mlp {
    std::vector<DenseLayer> layers;  // relu between layers, linear head
};

struct Decoder {
    std::vector<Conv2dLayer> convs;  // deep to shallow; last conv maps to in_c, linear
};

struct FeaturePair {
    Tensor fc;  // categorical features from E1
    Tensor fd;  // domain features from E2
    std::vector<Tensor> skip_activations;  // E2 stage outputs, shallow -> deep (fd excluded)
};

struct MIDNetParams {
    EncoderConfig enc_cfg;
    int num_classes = 0;
    std::vector<int> classifier_units;
    std::vector<int> mine_units;
    std::uint64_t seed = 0;

    Encoder e1;        // phi1
    Encoder e2;        // phi2
    Mlp classifier;    // delta
    Decoder decoder;   // psi
    Mlp mine;          // theta

    std::vector<std::pair<std::string, Tensor>> named_parameters() const;
    std::vector<Tensor> main_parameters() const;   // phi1, phi2, delta, psi
    std::vector<Tensor> theta_parameters() const;  // statistics network
    // Weight tensors (biases excluded) of the main groups, for L2.
    std::vector<Tensor> main_weights() const;
    std::vector<Tensor> theta_weights() const;
    std::size_t parameter_count() const;
};

MIDNetParams build_midnet(const EncoderConfig& enc_cfg, int num_classes,
                          const std::vector<int>& classifier_units,
                          const std::vector<int>& mine_units, std::uint64_t seed);

FeaturePair encode(const MIDNetParams& params, const Tensor& x);
// E1 only; what the classifier consumes. Used where fd is not needed.
Tensor encode_categorical(const MIDNetParams& params, const Tensor& x);
Tensor decode(const MIDNetParams& params, const FeaturePair& pair);
Tensor classify(const MIDNetParams& params, const Tensor& fc);
Tensor statistics_net(const MIDNetParams& params, const Tensor& fc, const Tensor& fd);

// Standalone MLP, also used by the MINE estimator benchmark.
Mlp build_mlp(const std::vector<int>& dims, std::uint64_t seed);
Tensor mlp_forward(const Mlp& mlp, const Tensor& x);
std::vector<Tensor> mlp_parameters(const Mlp& mlp);

// --- checkpoint container ---------------------------------------------
// One file: a "midnet-checkpoint v1" line, key=value manifest lines, a blank
// line, then per-tensor records (name line, tensor dump payload).
struct Checkpoint {
    std::vector<std::pair<std::string, std::string>> manifest;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const std::string* find(const std::string& key) const;
    const Tensor* find_tensor(const std::string& name) const;
    void set(const std::string& key, const std::string& value);
};

void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

Checkpoint to_checkpoint(const MIDNetParams& params, std::uint64_t step = 0);
MIDNetParams params_from_checkpoint(const Checkpoint& ckpt);

}  // namespace midnet
