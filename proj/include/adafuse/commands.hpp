#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "adafuse/config.hpp"

namespace adafuse {

// Exit codes shared by the CLI: 0 success, 2 config error, 3 numeric abort,
// 4 I/O error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitIo = 4;

void cmd_generate(const RunConfig& cfg);

void cmd_train(const RunConfig& cfg, const std::optional<std::filesystem::path>& resume = {});

void cmd_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint,
              const std::filesystem::path& baseline,
              const std::optional<std::filesystem::path>& traces = {});

void cmd_ablate(const RunConfig& cfg, const std::string& axis);

// Returns true when every module passes.
bool cmd_gradcheck(const RunConfig& cfg, const std::string& inject_error_module = "");

// Builds a TinyLM from a checkpoint's model tensors (vocab and dims are
// recovered from the stored shapes).
TinyLM model_from_checkpoint(const Checkpoint& ckpt);

int exit_code_for(const std::exception& e);

}  // namespace adafuse
