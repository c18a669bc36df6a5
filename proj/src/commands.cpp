#include "midnet/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "midnet/config.hpp"
#include "midnet/eval.hpp"
#include "midnet/rng.hpp"
#include "midnet/verify.hpp"

namespace midnet::commands {

namespace {

namespace fs = std::filesystem;

ExperimentConfig load_with_overrides(const std::string& config_path, const Overrides& ovr) {
    ExperimentConfig cfg = load_experiment_config(config_path);
    if (ovr.seed) {
        cfg.seed = *ovr.seed;
        cfg.present_keys.insert("seed");
    }
    if (ovr.ablation) {
        cfg.ablation = *ovr.ablation;
        cfg.present_keys.insert("ablation");
    }
    if (ovr.epochs) {
        cfg.epochs = *ovr.epochs;
        cfg.present_keys.insert("epochs");
    }
    return cfg;
}

MIDNetParams build_model(const ExperimentConfig& cfg) {
    MIDNetParams params = build_midnet(cfg.encoder_config(), cfg.num_categories,
                                       cfg.classifier_units, cfg.mine_units,
                                       derive_seed(cfg.seed, "model-init"));
    if (cfg.float32)
        for (auto& [name, t] : params.named_parameters()) t.set_dtype(DType::F32);
    return params;
}

std::size_t manifest_record_count(const std::string& dir) {
    std::ifstream is(dir + "/manifest.txt");
    if (!is) throw IoError("cannot reopen manifest in " + dir);
    std::size_t n = 0;
    std::string line;
    while (std::getline(is, line))
        if (!line.empty() && line[0] != '#') ++n;
    return n;
}

void write_report_files(const std::string& out_dir, const MetricsReport& report) {
    write_metrics_json(out_dir + "/metrics.json", report);
    write_confusion_csv(out_dir + "/confusion_T_Source.csv", report.source.cm);
    write_confusion_csv(out_dir + "/confusion_T_Target.csv", report.target_seen.cm);
    write_confusion_csv(out_dir + "/confusion_T_Target_New.csv", report.target_new.cm);
    write_confusion_pgm(out_dir + "/confusion_T_Source.pgm", report.source.cm);
    write_confusion_pgm(out_dir + "/confusion_T_Target.pgm", report.target_seen.cm);
    write_confusion_pgm(out_dir + "/confusion_T_Target_New.pgm", report.target_new.cm);
}

std::string fraction_tag(double f) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", f);
    std::string s = buf;
    for (char& c : s)
        if (c == '.') c = 'p';
    return s;
}

}  // namespace

int cmd_generate(const std::string& config_path, const std::string& out_dir, const Overrides& ovr,
                 std::ostream& out, std::ostream& err) {
    try {
        ExperimentConfig cfg = load_with_overrides(config_path, ovr);
        cfg.require({"seed"});
        cfg.validate();
        const SyntheticSpec spec = cfg.synthetic_spec();
        const auto examples = generate_synthetic(spec, cfg.generation_counts());
        const DatasetSplit split =
            partition(examples, cfg.labeled_fraction, cfg.target_category_set(), cfg.num_categories,
                      cfg.test_fraction, derive_seed(cfg.seed, "partition"));
        write_dataset(out_dir, split, spec);

        const std::size_t total = split.train_labeled.size() + split.train_unlabeled.size() +
                                  split.validation.size() + split.test_source.size() +
                                  split.test_target_seen.size() + split.test_target_new.size();
        out << "dataset written to " << out_dir << "\n";
        out << "  train_labeled    " << split.train_labeled.size() << "\n";
        out << "  train_unlabeled  " << split.train_unlabeled.size() << "\n";
        out << "  validation       " << split.validation.size() << "\n";
        out << "  test_source      " << split.test_source.size() << "\n";
        out << "  test_target_seen " << split.test_target_seen.size() << "\n";
        out << "  test_target_new  " << split.test_target_new.size() << "\n";
        if (manifest_record_count(out_dir) != total) {
            err << "error: manifest record count does not match generated examples\n";
            return 1;
        }
        return 0;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

int cmd_train(const std::string& config_path, const std::string& data_dir, const std::string& out_dir,
              const Overrides& ovr, const std::string& resume_path, std::ostream& out,
              std::ostream& err) {
    try {
        ExperimentConfig cfg = load_with_overrides(config_path, ovr);
        cfg.require({"seed", "epochs", "ablation"});
        cfg.validate();
        const DatasetSplit split = load_dataset(data_dir);
        fs::create_directories(out_dir);

        Trainer trainer(build_model(cfg), cfg.train_config());
        bool resumed = false;
        if (!resume_path.empty()) {
            trainer.restore(read_checkpoint(resume_path));
            resumed = true;
        }
        const TrainOutcome outcome = trainer.run(split);

        const std::string log_path = out_dir + "/training_log.csv";
        const bool append = resumed && fs::exists(log_path);
        write_training_log(log_path, outcome.log, append);
        write_checkpoint(out_dir + "/checkpoint_best.ckpt", outcome.best);
        write_checkpoint(out_dir + "/checkpoint_last.ckpt", trainer.snapshot());

        out << "trained " << outcome.log.size() << " epoch(s); best val macro-F1 "
            << outcome.best_val_f1 << " at epoch " << outcome.best_epoch << "\n";
        out << "checkpoint: " << out_dir << "/checkpoint_best.ckpt\n";
        return 0;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

int cmd_evaluate(const std::string& checkpoint_path, const std::string& data_dir,
                 const std::string& out_dir, std::ostream& out, std::ostream& err) {
    try {
        const MIDNetParams params = params_from_checkpoint(read_checkpoint(checkpoint_path));
        const DatasetSplit split = load_dataset(data_dir);
        fs::create_directories(out_dir);
        const MetricsReport report = evaluate(params, split);
        write_report_files(out_dir, report);
        auto line = [&out](const GroupReport& g) {
            out << "  " << g.name << ": accuracy " << g.metrics.accuracy << ", macro-F1 "
                << g.metrics.macro_f1 << ", macro-recall " << g.metrics.macro_recall
                << ", macro-precision " << g.metrics.macro_precision << " (" << g.size
                << " examples)\n";
        };
        out << "evaluation written to " << out_dir << "\n";
        line(report.source);
        line(report.target_seen);
        line(report.target_new);
        return 0;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

int cmd_verify(const std::string& suite, std::ostream& out, std::ostream& err) {
    try {
        bool ok = false;
        if (suite == "gradcheck")
            ok = verify::run_gradcheck(out);
        else if (suite == "mine-bench")
            ok = verify::run_mine_bench(out);
        else if (suite == "mixup-stats")
            ok = verify::run_mixup_stats(out);
        else if (suite == "metrics-oracle")
            ok = verify::run_metrics_oracle(out);
        else {
            err << "unknown suite '" << suite
                << "'; expected one of: gradcheck, mine-bench, mixup-stats, metrics-oracle\n";
            return 2;
        }
        return ok ? 0 : 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

int cmd_sweep(const std::string& config_path, const std::string& out_dir,
              const std::vector<double>& fractions, const Overrides& ovr, std::ostream& out,
              std::ostream& err) {
    try {
        if (fractions.empty()) {
            err << "error: empty fraction list\n";
            return 1;
        }
        for (double f : fractions)
            if (f <= 0.0 || f > 1.0) {
                err << "error: fraction " << f << " outside (0, 1]\n";
                return 1;
            }
        fs::create_directories(out_dir);
        std::ofstream csv(out_dir + "/sweep.csv");
        if (!csv) throw IoError("cannot write sweep csv in " + out_dir);
        csv << "labeled_fraction,group,accuracy,macro_f1\n";

        for (double f : fractions) {
            const std::string run_dir = out_dir + "/fraction_" + fraction_tag(f);
            Overrides run_ovr = ovr;
            {
                // Rewrite the fraction through a derived config file so the
                // run is reproducible from its own inputs.
                ExperimentConfig cfg = load_with_overrides(config_path, ovr);
                cfg.labeled_fraction = f;
                cfg.present_keys.insert("labeled_fraction");
                fs::create_directories(run_dir);
                std::ifstream src(config_path);
                std::stringstream buf;
                buf << src.rdbuf();
                std::ofstream dst(run_dir + "/config.cfg");
                std::string line;
                std::stringstream in(buf.str());
                while (std::getline(in, line)) {
                    if (line.rfind("labeled_fraction", 0) == 0) continue;
                    dst << line << "\n";
                }
                char frac[64];
                std::snprintf(frac, sizeof(frac), "labeled_fraction=%.17g", f);
                dst << frac << "\n";
            }
            const std::string cfg_path = run_dir + "/config.cfg";
            int rc = cmd_generate(cfg_path, run_dir + "/data", run_ovr, out, err);
            if (rc != 0) return rc;
            rc = cmd_train(cfg_path, run_dir + "/data", run_dir + "/run", run_ovr, "", out, err);
            if (rc != 0) return rc;

            const MIDNetParams params =
                params_from_checkpoint(read_checkpoint(run_dir + "/run/checkpoint_best.ckpt"));
            const MetricsReport report = evaluate(params, load_dataset(run_dir + "/data"));
            fs::create_directories(run_dir + "/eval");
            write_report_files(run_dir + "/eval", report);
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.17g", f);
            auto row = [&csv, &buf](const GroupReport& g) {
                char acc[32], f1[32];
                std::snprintf(acc, sizeof(acc), "%.17g", g.metrics.accuracy);
                std::snprintf(f1, sizeof(f1), "%.17g", g.metrics.macro_f1);
                csv << buf << "," << g.name << "," << acc << "," << f1 << "\n";
            };
            row(report.source);
            row(report.target_seen);
            row(report.target_new);
        }
        out << "sweep written to " << out_dir << "/sweep.csv\n";
        return 0;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace midnet::commands
