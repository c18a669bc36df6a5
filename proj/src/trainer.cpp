#include "midnet/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "midnet/eval.hpp"
#include "midnet/rng.hpp"

namespace midnet {

namespace {

double finite_or_throw(const Tensor& t, const char* term) {
    const double v = t.item();
    if (!std::isfinite(v))
        throw DomainError(std::string("train_step: non-finite ") + term + " loss");
    return v;
}

void zero_all(const std::vector<Tensor>& params) {
    for (const Tensor& p : params) const_cast<Tensor&>(p).zero_grad();
}

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void TrainConfig::validate() const {
    if (adam_lr < 0 || sgd_lr < 0) throw ConfigError("train config: negative learning rate");
    if (sgd_momentum < 0 || sgd_momentum >= 1)
        throw ConfigError("train config: momentum must be in [0, 1)");
    if (labeled_fraction <= 0 || labeled_fraction > 1)
        throw ConfigError("train config: labeled_fraction must be in (0, 1]");
    if (epochs < 0) throw ConfigError("train config: negative epoch count");
    if (batch_size == 0) throw ConfigError("train config: batch size must be positive");
    if (mine_steps_per_main < 1) throw ConfigError("train config: mine_steps_per_main must be >= 1");
    if (l2_scale < 0) throw ConfigError("train config: negative l2 scale");
    if (mixer.alpha <= 0) throw ConfigError("train config: mixer alpha must be positive");
}

Trainer::Trainer(MIDNetParams params, TrainConfig cfg)
    : params_(std::move(params)),
      cfg_(std::move(cfg)),
      main_params_(params_.main_parameters()),
      theta_params_(params_.theta_parameters()),
      sgd_(main_params_),
      adam_(theta_params_) {
    cfg_.validate();
}

StepReport Trainer::train_step(const LabeledBatch& labeled, const Tensor& unlabeled_images,
                               std::uint64_t step_seed) {
    StepReport report;
    const LossWeights& w = cfg_.weights;
    const std::size_t nl = labeled.labels.size();
    if (!labeled.images.defined() || labeled.images.dim(0) != nl || nl != labeled.domains.size())
        throw ContractError("train_step: inconsistent labeled batch");
    const bool have_unlabeled = unlabeled_images.defined() && unlabeled_images.dim(0) > 0;

    Tensor x_all = have_unlabeled ? concat({labeled.images, unlabeled_images}, 0)
                                  : labeled.images;
    const std::size_t n_all = x_all.dim(0);

    // Phase A: one or more Adam ascent steps on the Donsker-Varadhan bound,
    // training theta only. Encoder outputs are detached constants here, so
    // this phase cannot push the encoders toward higher mutual information.
    if (w.enable_mi) {
        for (int k = 0; k < cfg_.mine_steps_per_main; ++k) {
            Tensor fc_const, fd_const;
            {
                NoGradGuard no_grad;
                FeaturePair pair = encode(params_, x_all);
                fc_const = pair.fc;
                fd_const = pair.fd;
            }
            Tensor fd_shuffled = shuffle_marginal(
                fd_const, derive_seed(step_seed, "mine-shuffle", static_cast<std::uint64_t>(k)));
            Tensor estimate = mine_lower_bound(statistics_net(params_, fc_const, fd_const),
                                               statistics_net(params_, fc_const, fd_shuffled));
            finite_or_throw(estimate, "mutual-information (MINE phase)");
            Tensor mine_loss = neg(estimate);
            zero_all(theta_params_);
            backward(mine_loss);
            if (cfg_.include_theta_l2) add_l2_gradients(params_.theta_weights(), cfg_.l2_scale);
            adam_.step(cfg_.adam_lr, cfg_.adam_beta1, cfg_.adam_beta2, cfg_.adam_eps);
        }
    }

    // Phase B: the weighted main objective; theta participates in the MI
    // term's forward pass but its gradients are discarded.
    zero_all(main_params_);
    zero_all(theta_params_);

    FeaturePair pair = encode(params_, x_all);
    std::vector<std::size_t> labeled_rows(nl);
    for (std::size_t i = 0; i < nl; ++i) labeled_rows[i] = i;
    Tensor fc_labeled = have_unlabeled ? gather_rows(pair.fc, labeled_rows) : pair.fc;

    Tensor zero = Tensor::scalar(0.0);
    std::array<Tensor, 5> terms{zero, zero, zero, zero, zero};

    if (w.enable_rec) {
        Tensor x_hat = decode(params_, pair);
        terms[0] = reconstruction_loss(x_hat, x_all);
        report.rec = finite_or_throw(terms[0], "reconstruction");
    }
    if (w.enable_cls) {
        Tensor probs = classify(params_, fc_labeled);
        terms[1] = classification_loss(probs, labeled.labels);
        report.cls = finite_or_throw(terms[1], "classification");
    }
    if (w.enable_mi) {
        Tensor fd_shuffled = shuffle_marginal(pair.fd, derive_seed(step_seed, "main-shuffle"));
        Tensor estimate = mine_lower_bound(statistics_net(params_, pair.fc, pair.fd),
                                           statistics_net(params_, pair.fc, fd_shuffled));
        report.mi_estimate = estimate.item();
        terms[2] = neg(estimate);
        report.mi = finite_or_throw(terms[2], "mutual-information");
    }
    if (w.enable_cons) {
        const auto pairs = shared_category_pairs(
            std::vector<int>(labeled.labels.begin(), labeled.labels.end()), labeled.domains);
        if (!pairs.empty()) {
            terms[3] = consistency_loss(fc_labeled, pairs);
            report.cons = finite_or_throw(terms[3], "consistency");
        }
    }
    if (w.enable_ssl) {
        Tensor y_cat;
        if (have_unlabeled) {
            Tensor pseudo;
            {
                // Pseudo-labels are constants: no gradient flows through the
                // prediction that serves as a target.
                NoGradGuard no_grad;
                std::vector<std::size_t> unlabeled_rows;
                for (std::size_t i = nl; i < n_all; ++i) unlabeled_rows.push_back(i);
                pseudo = classify(params_, gather_rows(pair.fc, unlabeled_rows).detach());
            }
            y_cat = concat({one_hot(labeled.labels, params_.num_classes), pseudo}, 0);
        } else {
            y_cat = one_hot(labeled.labels, params_.num_classes);
        }
        Rng perm_rng(derive_seed(step_seed, "mix-shuffle"));
        const std::vector<std::size_t> perm = perm_rng.permutation(n_all);
        MixResult mix = mixup(x_all.detach(), gather_rows(x_all, perm).detach(), y_cat,
                              gather_rows(y_cat, perm), cfg_.mixer,
                              derive_seed(step_seed, "mix-beta"));
        Tensor probs_mix = classify(params_, encode_categorical(params_, mix.x_mix));
        terms[4] = ssl_loss(mix.y_mix, probs_mix);
        report.ssl = finite_or_throw(terms[4], "ssl");
    }

    Tensor total = total_loss(terms, w);
    report.total = finite_or_throw(total, "total");
    backward(total);
    add_l2_gradients(params_.main_weights(), cfg_.l2_scale);
    if (cfg_.clip_norm > 0.0) clip_global_grad_norm(main_params_, cfg_.clip_norm);
    sgd_.step(cfg_.sgd_lr, cfg_.sgd_momentum);
    zero_all(theta_params_);  // theta is frozen during the main phase
    return report;
}

TrainOutcome Trainer::run(const DatasetSplit& split) {
    TrainOutcome outcome;

    // Source-only ablation trains on source-domain labeled data alone.
    std::vector<Example> labeled_pool;
    for (const Example& ex : split.train_labeled)
        if (!cfg_.source_only || ex.domain == 0) labeled_pool.push_back(ex);
    if (labeled_pool.empty()) throw ContractError("train: no labeled training examples");

    DatasetSplit effective = split;
    effective.train_labeled = labeled_pool;

    const bool use_unlabeled =
        cfg_.use_unlabeled && !cfg_.source_only && !split.train_unlabeled.empty();
    UniformCycler unlabeled_cycler(use_unlabeled ? split.train_unlabeled.size() : 0,
                                   derive_seed(cfg_.seed, "unlabeled"));

    for (std::uint64_t epoch = epochs_done_; epoch < static_cast<std::uint64_t>(cfg_.epochs); ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto batches =
            balanced_labeled_batches(effective, cfg_.batch_size, derive_seed(cfg_.seed, "batches"), epoch);
        StepReport sums;
        std::size_t steps = 0;
        for (std::size_t step = 0; step < batches.size(); ++step) {
            const auto& idx = batches[step];
            LabeledBatch lb;
            lb.labels.reserve(idx.size());
            lb.domains.reserve(idx.size());
            std::vector<Tensor> images;
            for (std::size_t j = 0; j < idx.size(); ++j) {
                const Example& ex = labeled_pool[idx[j]];
                Tensor img = cfg_.augment
                                 ? augment_flip(ex.image, derive_seed(cfg_.seed, "flip-l",
                                                                      epoch * 100000 + step, j))
                                 : ex.image;
                images.push_back(reshape(img, {1, img.dim(0), img.dim(1), img.dim(2)}));
                lb.labels.push_back(static_cast<std::size_t>(ex.category));
                lb.domains.push_back(ex.domain);
            }
            lb.images = concat(images, 0);

            Tensor unlabeled_images;
            if (use_unlabeled) {
                const auto u_idx = unlabeled_cycler.next(cfg_.batch_size);
                std::vector<Tensor> u_images;
                for (std::size_t j = 0; j < u_idx.size(); ++j) {
                    const Example& ex = split.train_unlabeled[u_idx[j]];
                    Tensor img = cfg_.augment
                                     ? augment_flip(ex.image, derive_seed(cfg_.seed, "flip-u",
                                                                          epoch * 100000 + step, j))
                                     : ex.image;
                    u_images.push_back(reshape(img, {1, img.dim(0), img.dim(1), img.dim(2)}));
                }
                unlabeled_images = concat(u_images, 0);
            }

            const StepReport r = train_step(lb, unlabeled_images, derive_seed(cfg_.seed, "step", epoch, step));
            sums.rec += r.rec;
            sums.cls += r.cls;
            sums.mi += r.mi;
            sums.cons += r.cons;
            sums.ssl += r.ssl;
            sums.total += r.total;
            sums.mi_estimate += r.mi_estimate;
            ++steps;
        }

        EpochLog log;
        log.epoch = static_cast<int>(epoch);
        if (steps > 0) {
            const double inv = 1.0 / static_cast<double>(steps);
            log.rec = sums.rec * inv;
            log.cls = sums.cls * inv;
            log.mi = sums.mi * inv;
            log.cons = sums.cons * inv;
            log.ssl = sums.ssl * inv;
            log.total = sums.total * inv;
            log.mi_estimate = sums.mi_estimate * inv;
        }
        log.val_macro_f1 = validation_macro_f1(params_, split.validation,
                                               static_cast<std::size_t>(split.num_categories));
        if (cfg_.log_timing) {
            log.wall_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        }
        outcome.log.push_back(log);

        // >= keeps the latest of equally good epochs, so saturated validation
        // does not pin the checkpoint to the first saturating epoch.
        if (log.val_macro_f1 >= best_val_f1_) {
            best_val_f1_ = log.val_macro_f1;
            best_epoch_ = epoch;
            best_ = to_checkpoint(params_, epoch + 1);
        }
        epochs_done_ = epoch + 1;
    }

    if (!best_) best_ = to_checkpoint(params_, epochs_done_);
    outcome.best = *best_;
    outcome.best_val_f1 = best_val_f1_;
    outcome.best_epoch = best_epoch_;
    return outcome;
}

Checkpoint Trainer::snapshot(std::uint64_t step) const {
    Checkpoint ckpt = to_checkpoint(params_, step);
    ckpt.set("epochs_done", std::to_string(epochs_done_));
    ckpt.set("best_val_f1", fmt_double(best_val_f1_));
    ckpt.set("best_epoch", std::to_string(best_epoch_));
    ckpt.set("adam_t", std::to_string(adam_.step_count()));
    auto push_buffers = [&ckpt](const std::string& prefix,
                                const std::vector<std::vector<double>>& buffers) {
        for (std::size_t i = 0; i < buffers.size(); ++i)
            ckpt.tensors.emplace_back(prefix + std::to_string(i),
                                      Tensor::from_data({buffers[i].size()},
                                                        std::vector<double>(buffers[i])));
    };
    push_buffers("opt.sgd.v.", sgd_.velocity());
    push_buffers("opt.adam.m.", adam_.first_moment());
    push_buffers("opt.adam.v.", adam_.second_moment());
    if (best_) {
        for (const auto& [name, t] : best_->tensors)
            ckpt.tensors.emplace_back("best." + name, t);
    }
    return ckpt;
}

void Trainer::restore(const Checkpoint& ckpt) {
    for (auto& [name, t] : params_.named_parameters()) {
        const Tensor* stored = ckpt.find_tensor(name);
        if (!stored) throw IoError("trainer state missing parameter " + name);
        if (stored->shape() != t.shape())
            throw ShapeError("trainer state parameter " + name + " shape mismatch");
        t.data() = stored->data();
    }
    auto need = [&ckpt](const std::string& key) -> const std::string& {
        const std::string* v = ckpt.find(key);
        if (!v) throw IoError("trainer state missing key: " + key);
        return *v;
    };
    epochs_done_ = std::stoull(need("epochs_done"));
    best_val_f1_ = std::stod(need("best_val_f1"));
    best_epoch_ = std::stoull(need("best_epoch"));
    adam_.set_step_count(std::stoull(need("adam_t")));
    auto pull_buffers = [&ckpt](const std::string& prefix, std::vector<std::vector<double>>& buffers) {
        for (std::size_t i = 0; i < buffers.size(); ++i) {
            const Tensor* t = ckpt.find_tensor(prefix + std::to_string(i));
            if (!t) throw IoError("trainer state missing buffer " + prefix + std::to_string(i));
            if (t->numel() != buffers[i].size())
                throw ShapeError("trainer state buffer size mismatch at " + prefix + std::to_string(i));
            buffers[i] = t->data();
        }
    };
    pull_buffers("opt.sgd.v.", sgd_.velocity());
    pull_buffers("opt.adam.m.", adam_.first_moment());
    pull_buffers("opt.adam.v.", adam_.second_moment());

    // Rebuild the best-so-far checkpoint from the embedded copy, if any.
    Checkpoint best;
    best.manifest = ckpt.manifest;
    for (const auto& [name, t] : ckpt.tensors)
        if (name.rfind("best.", 0) == 0) best.tensors.emplace_back(name.substr(5), t);
    if (!best.tensors.empty()) best_ = std::move(best);
}

MIDNetParams clone_params(const MIDNetParams& params) {
    return params_from_checkpoint(to_checkpoint(params));
}

void write_training_log(const std::string& path, const std::vector<EpochLog>& log, bool append) {
    std::ofstream os(path, append ? std::ios::app : std::ios::trunc);
    if (!os) throw IoError("cannot write training log: " + path);
    if (!append)
        os << "epoch,L_rec,L_cls,L_MI,L_cons,L_SSL,total,I_hat,val_macro_f1,wall_seconds\n";
    for (const EpochLog& e : log) {
        os << e.epoch << "," << fmt_double(e.rec) << "," << fmt_double(e.cls) << ","
           << fmt_double(e.mi) << "," << fmt_double(e.cons) << "," << fmt_double(e.ssl) << ","
           << fmt_double(e.total) << "," << fmt_double(e.mi_estimate) << ","
           << fmt_double(e.val_macro_f1) << "," << fmt_double(e.wall_seconds) << "\n";
    }
    if (!os) throw IoError("training log write failed: " + path);
}

}  // namespace midnet
