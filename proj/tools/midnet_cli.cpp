#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "midnet/commands.hpp"

namespace {

std::vector<double> parse_fractions(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string part;
    while (std::getline(ss, part, ',')) {
        if (!part.empty()) out.push_back(std::stod(part));
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MIDNet batch-experiment front end"};
    app.require_subcommand(1);

    std::string config, data_dir, out_dir, checkpoint, suite, fractions_csv, resume;
    std::string ablation;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int epochs = 0;
    bool epochs_set = false;

    auto add_common = [&](CLI::App* cmd, bool with_config, bool with_data, bool with_out) {
        if (with_config) cmd->add_option("--config", config, "key=value config file")->required();
        if (with_data) cmd->add_option("--data", data_dir, "dataset directory")->required();
        if (with_out) cmd->add_option("--out", out_dir, "output directory")->required();
        cmd->add_option("--seed", seed, "override the config root seed")
            ->each([&seed_set](const std::string&) { seed_set = true; });
        cmd->add_option("--ablation", ablation, "override the config ablation name");
    };

    CLI::App* generate = app.add_subcommand("generate", "generate a synthetic dataset");
    add_common(generate, true, false, true);

    CLI::App* train = app.add_subcommand("train", "train one ablation on a dataset");
    add_common(train, true, true, true);
    train->add_option("--resume", resume, "resume from a checkpoint_last.ckpt");
    train->add_option("--epochs", epochs, "override the config epoch count")
        ->each([&epochs_set](const std::string&) { epochs_set = true; });

    CLI::App* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint on the three test groups");
    evaluate->add_option("--checkpoint", checkpoint, "model checkpoint file")->required();
    evaluate->add_option("--data", data_dir, "dataset directory")->required();
    evaluate->add_option("--out", out_dir, "output directory")->required();

    CLI::App* verify = app.add_subcommand("verify", "run a verification suite");
    verify->add_option("--suite", suite, "gradcheck | mine-bench | mixup-stats | metrics-oracle")
        ->required();

    CLI::App* sweep = app.add_subcommand("sweep", "train and evaluate across labeled fractions");
    add_common(sweep, true, false, true);
    sweep->add_option("--fractions", fractions_csv, "comma-separated labeled fractions")->required();

    CLI11_PARSE(app, argc, argv);

    midnet::commands::Overrides ovr;
    if (seed_set) ovr.seed = seed;
    if (!ablation.empty()) ovr.ablation = ablation;
    if (epochs_set) ovr.epochs = epochs;

    if (generate->parsed())
        return midnet::commands::cmd_generate(config, out_dir, ovr, std::cout, std::cerr);
    if (train->parsed())
        return midnet::commands::cmd_train(config, data_dir, out_dir, ovr, resume, std::cout, std::cerr);
    if (evaluate->parsed())
        return midnet::commands::cmd_evaluate(checkpoint, data_dir, out_dir, std::cout, std::cerr);
    if (verify->parsed()) return midnet::commands::cmd_verify(suite, std::cout, std::cerr);
    if (sweep->parsed())
        return midnet::commands::cmd_sweep(config, out_dir, parse_fractions(fractions_csv), ovr,
                                           std::cout, std::cerr);
    return 2;
}
