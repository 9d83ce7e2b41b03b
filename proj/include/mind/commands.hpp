#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mind/data.hpp"
#include "mind/networks.hpp"
#include "mind/training.hpp"

namespace mind {

inline constexpr const char* kToolVersion = "1.0.0";

// Flag-level overrides; flags win over config-file keys.
struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::vector<std::string> ablate;
  std::optional<std::uint64_t> fixed_noise_seed;
};

// Fully resolved run description; the manifest embeds it so a run can be
// reproduced from the manifest alone.
struct RunConfig {
  std::string dataset_path;  // exactly one of dataset_path / synthetic
  std::optional<SyntheticSpec> synthetic;
  std::uint64_t seed = 1;
  std::string out_dir;

  // model architecture (input dims / task come from the dataset)
  std::size_t d_k = 64;
  std::size_t stats_depth = 2, stats_width = 0;
  std::size_t head_depth = 2, head_width = 0;
  bool per_modality_recon_decoder = false;

  TrainConfig train;
};

std::string default_out_dir();  // $MIND_OUT_DIR, else "."

// Subcommand entry points; they print diagnostics and return exit codes.
int cmd_synth(const std::string& spec_path, const std::string& out_path,
              const CliOverrides& ov = {});
int cmd_train(const std::string& config_path, const CliOverrides& ov = {});
int cmd_eval(const std::string& checkpoint_path, const std::string& data_path,
             const std::string& split, const CliOverrides& ov = {});
int cmd_verify();
int cmd_dump_embeddings(const std::string& checkpoint_path,
                        const std::string& data_path,
                        const std::string& out_path,
                        const CliOverrides& ov = {});
int cmd_ablate(const std::string& config_path, const CliOverrides& ov = {});

}  // namespace mind
