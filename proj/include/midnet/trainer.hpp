#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "midnet/data.hpp"
#include "midnet/losses.hpp"
#include "midnet/nn.hpp"
#include "midnet/optim.hpp"

namespace midnet {

struct TrainConfig {
    LossWeights weights;
    MixerConfig mixer;
    double adam_lr = 1e-5;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double sgd_lr = 1e-5;
    double sgd_momentum = 0.9;
    double l2_scale = 1e-5;
    bool include_theta_l2 = false;  // literal "L2 on all weights" reading
    int mine_steps_per_main = 1;
    double clip_norm = 10.0;  // 0 disables gradient clipping
    int epochs = 50;
    std::size_t batch_size = 64;
    double labeled_fraction = 0.3;
    std::uint64_t seed = 0;
    bool use_unlabeled = true;
    bool augment = true;
    bool source_only = false;  // train classifier+E1 on source-domain data only
    bool log_timing = false;   // off keeps epoch logs byte-reproducible

    void validate() const;
};

struct StepReport {
    double rec = 0.0, cls = 0.0, mi = 0.0, cons = 0.0, ssl = 0.0, total = 0.0;
    double mi_estimate = 0.0;
};

struct EpochLog {
    int epoch = 0;
    double rec = 0.0, cls = 0.0, mi = 0.0, cons = 0.0, ssl = 0.0, total = 0.0;
    double mi_estimate = 0.0;
    double val_macro_f1 = 0.0;
    double wall_seconds = 0.0;
};

struct LabeledBatch {
    Tensor images;  // [n, H, W, C]
    std::vector<std::size_t> labels;
    std::vector<int> domains;
};

struct TrainOutcome {
    Checkpoint best;  // parameters at the best validation macro-F1
    double best_val_f1 = -1.0;
    std::uint64_t best_epoch = 0;
    std::vector<EpochLog> log;  // epochs run by this call only
};

// Alternating two-optimizer loop: an Adam phase that trains the statistics
// network on the MINE objective with encoder outputs held constant, then an
// SGD-momentum phase on the weighted main objective with theta frozen.
class Trainer {
public:
    Trainer(MIDNetParams params, TrainConfig cfg);

    const MIDNetParams& params() const { return params_; }
    const TrainConfig& config() const { return cfg_; }
    std::uint64_t epochs_done() const { return epochs_done_; }

    // One alternating step. The unlabeled tensor may be undefined.
    StepReport train_step(const LabeledBatch& labeled, const Tensor& unlabeled_images,
                          std::uint64_t step_seed);

    // Runs epochs epochs_done .. cfg.epochs-1 over the split.
    TrainOutcome run(const DatasetSplit& split);

    // Resume support: optimizer buffers and progress counters ride along in
    // the checkpoint next to the parameters.
    Checkpoint snapshot(std::uint64_t step = 0) const;
    void restore(const Checkpoint& ckpt);

private:
    MIDNetParams params_;
    TrainConfig cfg_;
    std::vector<Tensor> main_params_;
    std::vector<Tensor> theta_params_;
    SgdMomentum sgd_;
    Adam adam_;
    std::uint64_t epochs_done_ = 0;
    double best_val_f1_ = -1.0;
    std::uint64_t best_epoch_ = 0;
    std::optional<Checkpoint> best_;
};

MIDNetParams clone_params(const MIDNetParams& params);

// Epoch CSV: epoch,L_rec,L_cls,L_MI,L_cons,L_SSL,total,I_hat,val_macro_f1,wall_seconds
void write_training_log(const std::string& path, const std::vector<EpochLog>& log, bool append = false);

}  // namespace midnet
