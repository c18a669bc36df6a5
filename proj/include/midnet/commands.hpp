#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace midnet::commands {

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> ablation;
    std::optional<int> epochs;
};

// All commands return a process exit code: 0 iff every declared output was
// written and all internal checks passed.

int cmd_generate(const std::string& config_path, const std::string& out_dir, const Overrides& ovr,
                 std::ostream& out, std::ostream& err);

int cmd_train(const std::string& config_path, const std::string& data_dir, const std::string& out_dir,
              const Overrides& ovr, const std::string& resume_path, std::ostream& out,
              std::ostream& err);

int cmd_evaluate(const std::string& checkpoint_path, const std::string& data_dir,
                 const std::string& out_dir, std::ostream& out, std::ostream& err);

int cmd_verify(const std::string& suite, std::ostream& out, std::ostream& err);

int cmd_sweep(const std::string& config_path, const std::string& out_dir,
              const std::vector<double>& fractions, const Overrides& ovr, std::ostream& out,
              std::ostream& err);

}  // namespace midnet::commands
