#include "mind/commands.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <random>

#include "json.hpp"
#include "mind/checkpoint.hpp"
#include "mind/io_util.hpp"
#include "mind/verify.hpp"

namespace mind {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename T>
T get_or(const json& j, const char* key, T def) {
  if (!j.contains(key)) return def;
  return j.at(key).get<T>();
}

std::string hash_tag(std::string_view bytes) {
  char hex[32];
  std::snprintf(hex, sizeof(hex), "fnv1a64:%016llx",
                static_cast<unsigned long long>(io::fnv1a64(bytes)));
  return hex;
}

json spec_to_json(const SyntheticSpec& s) {
  return json{{"n_samples", s.n_samples},
              {"shared_dim", s.shared_dim},
              {"private_dim", s.private_dim},
              {"feature_dims", s.feature_dims},
              {"noise_scale", s.noise_scale},
              {"shared_label_scale", s.shared_label_scale},
              {"private_label_scale", s.private_label_scale},
              {"task", s.task == TaskKind::Regression ? "regression"
                                                      : "classification"},
              {"class_count", s.class_count},
              {"seed", s.seed}};
}

SyntheticSpec spec_from_json(const json& j) {
  SyntheticSpec s;
  s.n_samples = get_or<std::size_t>(j, "n_samples", s.n_samples);
  s.shared_dim = get_or<std::size_t>(j, "shared_dim", s.shared_dim);
  s.private_dim = get_or<std::size_t>(j, "private_dim", s.private_dim);
  if (j.contains("feature_dims")) {
    auto v = j.at("feature_dims").get<std::vector<std::size_t>>();
    if (v.size() != 3)
      throw ConfigError("feature_dims must list three modality widths");
    for (std::size_t i = 0; i < 3; ++i) s.feature_dims[i] = v[i];
  }
  s.noise_scale = get_or<double>(j, "noise_scale", s.noise_scale);
  s.shared_label_scale =
      get_or<double>(j, "shared_label_scale", s.shared_label_scale);
  s.private_label_scale =
      get_or<double>(j, "private_label_scale", s.private_label_scale);
  std::string task = get_or<std::string>(j, "task", "regression");
  if (task == "regression") {
    s.task = TaskKind::Regression;
  } else if (task == "classification") {
    s.task = TaskKind::Classification;
  } else {
    throw ConfigError("unknown task kind: " + task);
  }
  s.class_count = get_or<std::size_t>(j, "class_count", s.class_count);
  s.seed = get_or<std::uint64_t>(j, "seed", s.seed);
  return s;
}

json run_config_to_json(const RunConfig& rc) {
  json j;
  if (rc.synthetic.has_value())
    j["synthetic"] = spec_to_json(*rc.synthetic);
  else
    j["dataset"] = rc.dataset_path;
  j["seed"] = rc.seed;
  if (!rc.out_dir.empty()) j["out_dir"] = rc.out_dir;
  j["model"] = json{{"d_k", rc.d_k},
                    {"stats_depth", rc.stats_depth},
                    {"stats_width", rc.stats_width},
                    {"head_depth", rc.head_depth},
                    {"head_width", rc.head_width},
                    {"per_modality_recon_decoder",
                     rc.per_modality_recon_decoder}};
  const TrainConfig& t = rc.train;
  j["train"] = json{{"epochs", t.epochs},
                    {"batch_size", t.batch_size},
                    {"lr", t.optim.lr},
                    {"beta1", t.optim.beta1},
                    {"beta2", t.optim.beta2},
                    {"eps", t.optim.eps},
                    {"alpha", t.weights.alpha},
                    {"beta", t.weights.beta},
                    {"gamma", t.weights.gamma},
                    {"lambda", t.weights.lambda},
                    {"lambda_bt", t.weights.lambda_bt},
                    {"grl_scale", t.weights.grl_scale},
                    {"patience", t.patience},
                    {"ablate", t.ablation.names()}};
  return j;
}

RunConfig run_config_from_json(const json& j) {
  RunConfig rc;
  rc.dataset_path = get_or<std::string>(j, "dataset", "");
  if (j.contains("synthetic"))
    rc.synthetic = spec_from_json(j.at("synthetic"));
  if (rc.dataset_path.empty() == !rc.synthetic.has_value())
    throw ConfigError(
        "config must provide exactly one of 'dataset' or 'synthetic'");
  rc.seed = get_or<std::uint64_t>(j, "seed", 1);
  rc.out_dir = get_or<std::string>(j, "out_dir", "");
  if (j.contains("model")) {
    const json& m = j.at("model");
    rc.d_k = get_or<std::size_t>(m, "d_k", rc.d_k);
    rc.stats_depth = get_or<std::size_t>(m, "stats_depth", rc.stats_depth);
    rc.stats_width = get_or<std::size_t>(m, "stats_width", rc.stats_width);
    rc.head_depth = get_or<std::size_t>(m, "head_depth", rc.head_depth);
    rc.head_width = get_or<std::size_t>(m, "head_width", rc.head_width);
    rc.per_modality_recon_decoder = get_or<bool>(
        m, "per_modality_recon_decoder", rc.per_modality_recon_decoder);
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    TrainConfig& tc = rc.train;
    tc.epochs = get_or<std::size_t>(t, "epochs", tc.epochs);
    tc.batch_size = get_or<std::size_t>(t, "batch_size", tc.batch_size);
    tc.optim.lr = get_or<double>(t, "lr", tc.optim.lr);
    tc.optim.beta1 = get_or<double>(t, "beta1", tc.optim.beta1);
    tc.optim.beta2 = get_or<double>(t, "beta2", tc.optim.beta2);
    tc.optim.eps = get_or<double>(t, "eps", tc.optim.eps);
    tc.weights.alpha = get_or<double>(t, "alpha", tc.weights.alpha);
    tc.weights.beta = get_or<double>(t, "beta", tc.weights.beta);
    tc.weights.gamma = get_or<double>(t, "gamma", tc.weights.gamma);
    tc.weights.lambda = get_or<double>(t, "lambda", tc.weights.lambda);
    tc.weights.lambda_bt = get_or<double>(t, "lambda_bt", tc.weights.lambda_bt);
    tc.weights.grl_scale = get_or<double>(t, "grl_scale", tc.weights.grl_scale);
    tc.patience = get_or<std::size_t>(t, "patience", tc.patience);
    if (t.contains("ablate"))
      tc.ablation =
          AblationFlags::parse(t.at("ablate").get<std::vector<std::string>>());
  }
  return rc;
}

json metrics_to_json(const MetricsReport& r) {
  json j;
  j["n"] = r.n;
  if (r.task == TaskKind::Regression) {
    j["mae"] = r.mae;
    j["corr"] = r.corr;
    j["corr_degenerate"] = r.corr_degenerate;
    j["acc7"] = r.acc7;
    j["acc2"] = r.acc2;
    j["f1"] = r.f1;
    j["acc2_support"] = r.acc2_support;
  } else {
    j["accuracy"] = r.accuracy;
    j["f1"] = r.f1;
    if (r.class_count == 2) {
      j["acc2"] = r.acc2;
      j["acc2_support"] = r.acc2_support;
    }
  }
  return j;
}

void print_metrics(const MetricsReport& r, const std::string& title) {
  std::cout << title << ":";
  if (r.task == TaskKind::Regression) {
    std::printf(" mae %.6f, corr %.6f%s, acc7 %.4f, acc2 %.4f, f1 %.4f\n",
                r.mae, r.corr, r.corr_degenerate ? " (degenerate)" : "",
                r.acc7, r.acc2, r.f1);
  } else {
    std::printf(" accuracy %.4f, f1 %.4f\n", r.accuracy, r.f1);
  }
}

json loss_record_to_json(const LossLogRecord& rec) {
  const LossBreakdown& b = rec.losses;
  return json{{"step", rec.step},     {"epoch", rec.epoch},
              {"task", b.task},       {"np", b.np},
              {"info", b.info},       {"cons", b.cons},
              {"diff", b.diff},       {"recon", b.recon},
              {"cyr", b.cyr},         {"cyr_raw", b.cyr_raw},
              {"total", b.total}};
}

struct LoadedData {
  Dataset ds;
  std::string hash;
};

LoadedData load_run_dataset(const RunConfig& rc) {
  LoadedData out;
  if (rc.synthetic.has_value()) {
    out.ds = generate_synthetic(*rc.synthetic);
    out.hash = hash_tag(out.ds.provenance);
  } else {
    out.ds = load_features(rc.dataset_path);
    out.hash = hash_tag(io::read_file(rc.dataset_path));
  }
  return out;
}

ModelConfig model_config_for(const RunConfig& rc, const Dataset& ds) {
  ModelConfig cfg;
  cfg.d_k = rc.d_k;
  for (Modality m : kModalities)
    cfg.input_dims[index_of(m)] = ds.features[index_of(m)].cols;
  cfg.task = ds.task;
  cfg.class_count = ds.class_count;
  cfg.stats_depth = rc.stats_depth;
  cfg.stats_width = rc.stats_width;
  cfg.head_depth = rc.head_depth;
  cfg.head_width = rc.head_width;
  cfg.per_modality_recon_decoder = rc.per_modality_recon_decoder;
  cfg.seed = rc.seed;
  return cfg;
}

json manifest_skeleton(const std::string& command, std::uint64_t seed) {
  json j;
  j["tool"] = "mind";
  j["version"] = kToolVersion;
  j["command"] = command;
  j["seed"] = seed;
  return j;
}

void write_json(const json& j, const std::string& path) {
  io::write_file(path, j.dump(2) + "\n");
}

RunConfig resolve_run_config(const std::string& config_path,
                             const CliOverrides& ov) {
  json j = json::parse(io::read_file(config_path));
  // a manifest embeds the resolved config; accept it directly
  if (j.contains("config") && j.contains("tool")) j = j.at("config");
  RunConfig rc = run_config_from_json(j);
  if (ov.seed.has_value()) rc.seed = *ov.seed;
  if (ov.out_dir.has_value()) rc.out_dir = *ov.out_dir;
  if (!ov.ablate.empty()) {
    std::vector<std::string> names = rc.train.ablation.names();
    names.insert(names.end(), ov.ablate.begin(), ov.ablate.end());
    rc.train.ablation = AblationFlags::parse(names);
  }
  if (rc.out_dir.empty()) rc.out_dir = default_out_dir();
  rc.train.seed = rc.seed;
  return rc;
}

int run_guarded(const char* command, const std::function<int()>& body) {
  try {
    return body();
  } catch (const std::exception& e) {
    std::cerr << "mind " << command << ": error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

std::string default_out_dir() {
  const char* env = std::getenv("MIND_OUT_DIR");
  if (env != nullptr && env[0] != '\0') return env;
  return ".";
}

// ---- synth ---------------------------------------------------------------------

int cmd_synth(const std::string& spec_path, const std::string& out_path,
              const CliOverrides& ov) {
  return run_guarded("synth", [&]() {
    json j = json::parse(io::read_file(spec_path));
    if (j.contains("config") && j.contains("tool")) j = j.at("config");
    SyntheticSpec spec = spec_from_json(j);
    if (ov.seed.has_value()) spec.seed = *ov.seed;
    Dataset ds = generate_synthetic(spec);
    write_features(ds, out_path);
    json manifest = manifest_skeleton("synth", spec.seed);
    manifest["config"] = spec_to_json(spec);
    manifest["dataset_hash"] = hash_tag(io::read_file(out_path));
    manifest["artifacts"] = json{{"dataset", out_path}};
    write_json(manifest, out_path + ".manifest.json");
    std::cout << "wrote " << out_path << " (" << ds.n_samples()
              << " samples, provenance " << ds.provenance << ")\n";
    return 0;
  });
}

// ---- train ---------------------------------------------------------------------

int cmd_train(const std::string& config_path, const CliOverrides& ov) {
  return run_guarded("train", [&]() {
    RunConfig rc = resolve_run_config(config_path, ov);
    LoadedData data = load_run_dataset(rc);
    ModelConfig model_cfg = model_config_for(rc, data.ds);

    TrainResult result = train(data.ds, model_cfg, rc.train);

    fs::path out(rc.out_dir);
    std::string ckpt = (out / "checkpoint.mndp").string();
    std::string log_path = (out / "loss_log.jsonl").string();
    std::string metrics_path = (out / "metrics.json").string();
    std::string manifest_path = (out / "manifest.json").string();

    save_checkpoint(result.model, ckpt);
    std::string log;
    for (const LossLogRecord& rec : result.loss_log)
      log += loss_record_to_json(rec).dump() + "\n";
    io::write_file(log_path, log);

    json metrics;
    metrics["parameter_count"] = result.parameter_count;
    metrics["best_epoch"] = result.best_epoch;
    metrics["diverged"] = result.diverged;
    json hist = json::array();
    for (const EpochRecord& e : result.history)
      hist.push_back(json{{"epoch", e.epoch},
                          {"mean_total", e.mean_total},
                          {"valid", metrics_to_json(e.valid)}});
    metrics["history"] = hist;
    metrics["valid"] = metrics_to_json(result.valid_metrics);
    metrics["test"] = metrics_to_json(result.test_metrics);
    write_json(metrics, metrics_path);

    json manifest = manifest_skeleton("train", rc.seed);
    manifest["config"] = run_config_to_json(rc);
    manifest["dataset_hash"] = data.hash;
    manifest["artifacts"] = json{{"checkpoint", ckpt},
                                 {"loss_log", log_path},
                                 {"metrics", metrics_path},
                                 {"manifest", manifest_path}};
    write_json(manifest, manifest_path);

    std::cout << "parameters: " << result.parameter_count << "\n";
    std::cout << "best epoch: " << result.best_epoch << "\n";
    print_metrics(result.valid_metrics, "valid");
    print_metrics(result.test_metrics, "test");
    if (result.diverged) {
      std::cerr << "mind train: diverged: " << result.divergence_message
                << " (last good checkpoint preserved)\n";
      return 1;
    }
    return 0;
  });
}

// ---- eval ----------------------------------------------------------------------

int cmd_eval(const std::string& checkpoint_path, const std::string& data_path,
             const std::string& split, const CliOverrides& ov) {
  return run_guarded("eval", [&]() {
    Split sp = split_from_name(split);
    Model model = load_checkpoint(checkpoint_path);
    Dataset ds = load_features(data_path);
    MetricsReport report = evaluate(model, ds, sp);
    print_metrics(report, split);
    std::string out_dir =
        ov.out_dir.has_value() ? *ov.out_dir : default_out_dir();
    std::string path =
        (fs::path(out_dir) / ("eval_" + std::string(split_name(sp)) + ".json"))
            .string();
    json j;
    j["split"] = split_name(sp);
    j["checkpoint"] = checkpoint_path;
    j["dataset"] = data_path;
    j["metrics"] = metrics_to_json(report);
    write_json(j, path);
    return 0;
  });
}

// ---- verify --------------------------------------------------------------------

int cmd_verify() {
  return run_guarded("verify", [&]() {
    std::vector<CheckResult> checks = run_verification();
    std::cout << format_check_table(checks);
    std::size_t failed = 0;
    for (const CheckResult& c : checks)
      if (!c.passed) ++failed;
    std::cout << checks.size() - failed << "/" << checks.size()
              << " checks passed\n";
    return failed == 0 ? 0 : 1;
  });
}

// ---- dump-embeddings -----------------------------------------------------------

int cmd_dump_embeddings(const std::string& checkpoint_path,
                        const std::string& data_path,
                        const std::string& out_path, const CliOverrides& ov) {
  return run_guarded("dump-embeddings", [&]() {
    Model model = load_checkpoint(checkpoint_path);
    Dataset ds = load_features(data_path);
    check_dataset_model(ds, model.config());
    std::uint64_t noise_seed;
    if (ov.fixed_noise_seed.has_value()) {
      noise_seed = *ov.fixed_noise_seed;
    } else {
      std::random_device rd;
      noise_seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    }
    Rng noise_rng(derive_seed(noise_seed, "dump-noise"));

    std::size_t dk = model.config().d_k;
    const auto active = model.config().active_modalities();
    std::string csv = "sample,modality,component,label";
    for (std::size_t j = 0; j < dk; ++j) csv += ",e" + std::to_string(j);
    csv += "\n";

    std::size_t n = ds.n_samples();
    ForwardOptions opt;
    opt.with_recon = false;
    for (std::size_t start = 0; start < n; start += 256) {
      std::size_t end = std::min(start + 256, n);
      ModalityBatch b;
      for (std::size_t i = start; i < end; ++i) b.indices.push_back(i);
      for (Modality m : kModalities) {
        const Matrix& x = ds.features[index_of(m)];
        Matrix bx(b.indices.size(), x.cols);
        for (std::size_t i = 0; i < b.indices.size(); ++i)
          std::copy(x.row(b.indices[i]), x.row(b.indices[i]) + x.cols,
                    bx.row(i));
        b.features[index_of(m)] = std::move(bx);
      }
      Graph g;
      DisentangledSet fwd = model.forward_full(g, b, noise_rng, opt);
      for (std::size_t i = 0; i < b.indices.size(); ++i) {
        std::size_t sample = b.indices[i];
        std::string label = ds.task == TaskKind::Regression
                                ? io::format_double(ds.scores[sample])
                                : std::to_string(ds.classes[sample]);
        for (Modality m : active) {
          std::size_t mi = index_of(m);
          const Tensor* comps[3] = {&fwd.invariant[mi], &fwd.specific[mi],
                                    &fwd.noise[mi]};
          const char* tags[3] = {"S", "P", "N"};
          for (std::size_t c = 0; c < 3; ++c) {
            csv += std::to_string(sample);
            csv += ",";
            csv += modality_tag(m);
            csv += ",";
            csv += tags[c];
            csv += ",";
            csv += label;
            const auto& v = comps[c]->value();
            for (std::size_t j = 0; j < dk; ++j) {
              csv += ",";
              csv += io::format_double(v[i * dk + j]);
            }
            csv += "\n";
          }
        }
      }
    }
    io::write_file(out_path, csv);

    json manifest = manifest_skeleton("dump-embeddings", noise_seed);
    manifest["config"] = json{{"checkpoint", checkpoint_path},
                              {"dataset", data_path},
                              {"fixed_noise_seed", noise_seed}};
    manifest["dataset_hash"] = hash_tag(io::read_file(data_path));
    manifest["artifacts"] = json{{"embeddings", out_path}};
    write_json(manifest, out_path + ".manifest.json");
    std::cout << "wrote " << out_path << " (" << n << " samples x "
              << active.size() << " modalities x 3 components)\n";
    return 0;
  });
}

// ---- ablate --------------------------------------------------------------------

int cmd_ablate(const std::string& config_path, const CliOverrides& ov) {
  return run_guarded("ablate", [&]() {
    RunConfig rc = resolve_run_config(config_path, ov);
    LoadedData data = load_run_dataset(rc);
    ModelConfig model_cfg = model_config_for(rc, data.ds);

    AblationTable table = run_ablation_suite(data.ds, model_cfg, rc.train);
    std::string text = format_ablation_table(table, data.ds.task);
    std::cout << text;

    fs::path out(rc.out_dir);
    json rows = json::array();
    for (const AblationRow& r : table.rows)
      rows.push_back(json{{"name", r.name},
                          {"group", r.group},
                          {"flags", r.flags},
                          {"seed", r.seed},
                          {"valid", metrics_to_json(r.valid)},
                          {"test", metrics_to_json(r.test)}});
    json report;
    report["rows"] = rows;
    write_json(report, (out / "ablation_report.json").string());
    io::write_file((out / "ablation_table.txt").string(), text);

    json manifest = manifest_skeleton("ablate", rc.seed);
    manifest["config"] = run_config_to_json(rc);
    manifest["dataset_hash"] = data.hash;
    manifest["artifacts"] =
        json{{"report", (out / "ablation_report.json").string()},
             {"table", (out / "ablation_table.txt").string()}};
    write_json(manifest, (out / "ablation_manifest.json").string());
    return 0;
  });
}

}  // namespace mind
