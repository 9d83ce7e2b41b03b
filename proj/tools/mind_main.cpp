#include <string>

#include "CLI11.hpp"
#include "mind/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"mind: multi-modal information disentanglement trainer"};
  app.require_subcommand(1);

  mind::CliOverrides ov;
  std::uint64_t seed_flag = 0;
  std::string out_dir_flag;
  std::vector<std::string> ablate_flags;
  std::uint64_t noise_seed_flag = 0;

  auto add_common = [&](CLI::App* cmd, bool with_noise_seed = false) {
    cmd->add_option("--seed", seed_flag, "override the master seed");
    cmd->add_option("--out-dir", out_dir_flag,
                    "output directory (default: $MIND_OUT_DIR or .)");
    cmd->add_option("--ablate", ablate_flags,
                    "ablation flag, repeatable (no-info, no-cons, no-diff, "
                    "no-recon, no-cyr, no-np, only-task, no-invariant, "
                    "no-specific, non-disentangled, no-visual, no-audio, "
                    "no-text)");
    if (with_noise_seed)
      cmd->add_option("--fixed-noise-seed", noise_seed_flag,
                      "freeze the noise sampling seed");
  };

  std::string spec_path, out_path, config_path, checkpoint_path, data_path,
      split = "test";

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--spec", spec_path, "synthetic spec JSON")->required();
  synth->add_option("--out", out_path, "output MINDF path")->required();
  add_common(synth);

  CLI::App* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", config_path, "run config JSON (or a manifest)")
      ->required();
  add_common(train);

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint_path, "MNDP checkpoint")
      ->required();
  eval->add_option("--data", data_path, "MINDF file or CSV directory")
      ->required();
  eval->add_option("--split", split, "train / valid / test");
  add_common(eval);

  CLI::App* verify = app.add_subcommand(
      "verify", "run the oracle and invariant release checks");

  CLI::App* dump = app.add_subcommand("dump-embeddings",
                                      "export per-component embeddings");
  dump->add_option("--checkpoint", checkpoint_path, "MNDP checkpoint")
      ->required();
  dump->add_option("--data", data_path, "MINDF file or CSV directory")
      ->required();
  dump->add_option("--out", out_path, "output CSV path")->required();
  add_common(dump, true);

  CLI::App* ablate = app.add_subcommand("ablate", "run the ablation suite");
  ablate->add_option("--config", config_path, "run config JSON")->required();
  add_common(ablate);

  CLI11_PARSE(app, argc, argv);

  auto collect = [&](CLI::App* cmd, bool with_noise_seed = false) {
    if (cmd->count("--seed")) ov.seed = seed_flag;
    if (cmd->count("--out-dir")) ov.out_dir = out_dir_flag;
    if (cmd->count("--ablate")) ov.ablate = ablate_flags;
    if (with_noise_seed && cmd->count("--fixed-noise-seed"))
      ov.fixed_noise_seed = noise_seed_flag;
  };

  if (synth->parsed()) {
    collect(synth);
    return mind::cmd_synth(spec_path, out_path, ov);
  }
  if (train->parsed()) {
    collect(train);
    return mind::cmd_train(config_path, ov);
  }
  if (eval->parsed()) {
    collect(eval);
    return mind::cmd_eval(checkpoint_path, data_path, split, ov);
  }
  if (verify->parsed()) return mind::cmd_verify();
  if (dump->parsed()) {
    collect(dump, true);
    return mind::cmd_dump_embeddings(checkpoint_path, data_path, out_path, ov);
  }
  if (ablate->parsed()) {
    collect(ablate);
    return mind::cmd_ablate(config_path, ov);
  }
  return 1;
}
