// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Criteria 5 and 6 run the full synthetic training protocol and
// dominate the runtime.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <future>
#include <sstream>

#include "json.hpp"
#include "mind/commands.hpp"
#include "mind/io_util.hpp"
#include "mind/training.hpp"
#include "mind/verify.hpp"

using namespace mind;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CriterionResult {
  int id;
  std::string name;
  bool passed;
  std::string detail;
};

double median3(double a, double b, double c) {
  double lo = std::min({a, b, c}), hi = std::max({a, b, c});
  return a + b + c - lo - hi;
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

// ---- criterion 1: gradient correctness -----------------------------------------

CriterionResult criterion_gradients() {
  auto t0 = std::chrono::steady_clock::now();
  double worst = 0;
  std::size_t entries = 0;
  const LossTerm terms[] = {LossTerm::Task,  LossTerm::Np,   LossTerm::Info,
                            LossTerm::Cons,  LossTerm::Diff, LossTerm::Recon,
                            LossTerm::Cyr};
  std::string worst_term;
  for (LossTerm term : terms) {
    for (std::uint64_t draw = 0; draw < 20; ++draw) {
      GradCheck gc = check_loss_gradients(
          term, derive_seed(0xACC1, loss_term_name(term), draw), 3);
      if (gc.max_err > worst) {
        worst = gc.max_err;
        worst_term = loss_term_name(term);
      }
      entries += gc.entries;
    }
  }
  double secs = elapsed_s(t0);
  std::ostringstream os;
  os << "7 losses x 20 draws, " << entries << " entries, max rel err " << worst
     << " (worst: " << worst_term << "), " << secs << " s";
  return {1, "gradient correctness", worst <= 1e-4 && secs < 120.0, os.str()};
}

// ---- criterion 2: oracle equivalence -------------------------------------------

CriterionResult criterion_oracles() {
  bool ok = true;
  std::ostringstream os;

  Rng rng(0xACC2);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t n = 2 + rng.bounded(7);
    std::size_t d1 = 1 + rng.bounded(4);
    std::size_t d2 = 1 + rng.bounded(4);
    Matrix r1(n, d1, rng.normal_vec(n * d1));
    Matrix r2(n, d2, rng.normal_vec(n * d2));
    Graph g;
    double engine = hsic(g.constant({n, d1}, r1.data),
                         g.constant({n, d2}, r2.data))
                        .scalar();
    worst = std::max(worst, std::abs(engine - hsic_bruteforce(r1, r2)));
  }
  ok = ok && worst <= 1e-10;
  os << "hsic max dev " << worst;

  // cross-correlation hand fixture, exact to the formula's arithmetic
  {
    Graph g;
    Tensor a = g.constant({2, 1}, {1.0, -1.0});
    double c_self = cross_correlation(a, a).scalar();
    double denom = std::sqrt(2.0) * std::sqrt(2.0) + 1e-8;
    double expect = 2.0 / denom;
    ok = ok && c_self == expect;
    double c_anti = cross_correlation(a, scalar_mul(a, -1.0)).scalar();
    ok = ok && c_anti == -2.0 / denom;
    os << "; crosscorr exact " << (c_self == expect ? "yes" : "NO");
  }

  // six-sample confusion-matrix fixture, exact
  {
    std::vector<double> y = {1.0, 2.0, 1.0, -1.0, -2.0, -1.0};
    std::vector<double> pred = {1.0, -1.0, 1.0, 1.0, -1.0, -1.0};
    MetricsReport r = regression_metrics(y, pred);
    // per class: tp 2, fp 1, fn 1
    double p = 2.0 / (2.0 + 1.0), rc = 2.0 / (2.0 + 1.0);
    double f1c = 2.0 * p * rc / (p + rc);
    double expect_f1 = f1c * 3.0 / 6.0 + f1c * 3.0 / 6.0;
    double expect_acc2 = 4.0 / 6.0;
    ok = ok && r.f1 == expect_f1 && r.acc2 == expect_acc2;
    os << "; f1 exact " << (r.f1 == expect_f1 ? "yes" : "NO");
  }

  // Pearson hand fixtures, exact
  {
    bool degen = false;
    double one = pearson({1, 2, 3, 4}, {2, 4, 6, 8}, &degen);
    double zero = pearson({1, -1, 1, -1}, {1, 1, -1, -1}, &degen);
    ok = ok && one == 1.0 && zero == 0.0;
    os << "; pearson exact " << (one == 1.0 && zero == 0.0 ? "yes" : "NO");
  }
  return {2, "oracle equivalence", ok, os.str()};
}

// ---- criterion 3: estimator bound ----------------------------------------------

CriterionResult criterion_estimator_bound() {
  bool ok = true;
  double max_est = -1e300;
  for (std::uint64_t draw = 0; draw < 1000; ++draw) {
    std::uint64_t seed = derive_seed(0xACC3, "draw", draw);
    ModelConfig cfg;
    cfg.d_k = 4;
    cfg.input_dims = {3, 3, 3};
    cfg.seed = seed;
    Model model(cfg);
    Rng jitter(derive_seed(seed, "jitter"));
    model.params().for_each([&](const std::string&, Variable& v) {
      for (double& x : v.value) x += jitter.normal();
    });
    Rng data(derive_seed(seed, "data"));
    std::size_t n = 2 + data.bounded(7);
    Graph g;
    Tensor x = g.constant({n, 4}, data.normal_vec(n * 4));
    Tensor y = g.constant({n, 4}, data.normal_vec(n * 4));
    Rng perm(derive_seed(seed, "perm"));
    double est =
        mi_jsd_estimate(model, g, x, y, StatsNet::PrivateA, perm).scalar();
    max_est = std::max(max_est, est);
    if (est > 0.0) ok = false;
  }

  ModelConfig cfg;
  cfg.d_k = 5;
  cfg.input_dims = {4, 4, 4};
  cfg.seed = 12;
  Model model(cfg);
  model.params().for_each([&](const std::string& name, Variable& v) {
    if (name.rfind("stats_", 0) == 0)
      std::fill(v.value.begin(), v.value.end(), 0.0);
  });
  Graph g;
  Rng data(13);
  Tensor x = g.constant({8, 5}, data.normal_vec(40));
  Tensor y = g.constant({8, 5}, data.normal_vec(40));
  Rng perm(14);
  double zero_disc =
      mi_jsd_estimate(model, g, x, y, StatsNet::PrivateV, perm).scalar();
  double dev = std::abs(zero_disc - (-2.0 * std::log(2.0)));
  ok = ok && dev <= 1e-12;

  std::ostringstream os;
  os << "1000 draws, max estimate " << max_est << "; zero-discriminator dev "
     << dev;
  return {3, "estimator bound", ok, os.str()};
}

// ---- criterion 4: GRL contract -------------------------------------------------

CriterionResult criterion_grl() {
  // forward identity, bitwise, on a fresh random tensor
  Rng rng(0xACC4);
  Graph g;
  std::vector<double> data = rng.normal_vec(64);
  Tensor x = g.constant({8, 8}, data);
  Tensor y = grad_reverse(x, 2.5);
  bool ok = y.value() == data;

  // the exact sign contracts from the release checks
  std::vector<CheckResult> checks = run_verification();
  bool np_ok = false, cyc_ok = false, fwd_ok = false;
  for (const CheckResult& c : checks) {
    if (c.name == "grl_sign_noise_predict") np_ok = c.passed;
    if (c.name == "grl_sign_cyclic") cyc_ok = c.passed;
    if (c.name == "grl_forward_identity") fwd_ok = c.passed;
  }
  ok = ok && np_ok && cyc_ok && fwd_ok;
  std::ostringstream os;
  os << "forward identity " << (ok ? "bitwise" : "BROKEN")
     << "; noise_predict flip " << (np_ok ? "exact" : "NO")
     << "; cyclic flip " << (cyc_ok ? "exact" : "NO");
  return {4, "GRL contract", ok, os.str()};
}

// ---- criteria 5 and 6: synthetic training protocol -----------------------------

struct ProtocolRuns {
  std::vector<TrainResult> full;
  std::vector<ProbeReport> probes;
  std::vector<TrainResult> only_task;
  std::vector<TrainResult> non_disentangled;
  double full_seconds = 0;
};

ProtocolRuns run_protocol() {
  SyntheticSpec spec;  // defaults match the acceptance protocol
  Dataset ds = generate_synthetic(spec);
  ModelConfig mc;
  mc.d_k = 64;
  for (Modality m : kModalities)
    mc.input_dims[index_of(m)] = ds.features[index_of(m)].cols;
  mc.task = ds.task;

  const std::uint64_t seeds[3] = {101, 202, 303};
  auto make_cfg = [&](std::uint64_t seed, std::vector<std::string> flags) {
    TrainConfig tc;
    tc.epochs = 100;
    tc.batch_size = 32;
    tc.seed = seed;
    tc.ablation = AblationFlags::parse(flags);
    return tc;
  };

  ProtocolRuns out;
  // criterion 5 budget is stated for a single core: run these sequentially
  auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < 3; ++i) {
    out.full.push_back(train(ds, mc, make_cfg(seeds[i], {})));
    out.probes.push_back(
        probe_disentanglement(out.full.back().model, ds, seeds[i]));
  }
  out.full_seconds = elapsed_s(t0);

  // the comparison runs carry no per-core budget; pair them across cores
  for (int i = 0; i < 3; ++i) {
    auto fut_only = std::async(std::launch::async, [&, i] {
      return train(ds, mc, make_cfg(seeds[i], {"only-task"}));
    });
    auto fut_nond = std::async(std::launch::async, [&, i] {
      return train(ds, mc, make_cfg(seeds[i], {"non-disentangled"}));
    });
    out.only_task.push_back(fut_only.get());
    out.non_disentangled.push_back(fut_nond.get());
  }
  return out;
}

CriterionResult criterion_disentanglement(const ProtocolRuns& runs) {
  bool ok = runs.full_seconds <= 600.0;
  std::ostringstream os;
  os.precision(3);

  double min_s_median = 1e300, min_gap_median = 1e300;
  for (Modality m : kModalities) {
    std::size_t mi = index_of(m);
    double s_med = median3(runs.probes[0].r2_shared[0][mi],
                           runs.probes[1].r2_shared[0][mi],
                           runs.probes[2].r2_shared[0][mi]);
    double gap_med = median3(
        runs.probes[0].r2_shared[0][mi] - runs.probes[0].r2_shared[2][mi],
        runs.probes[1].r2_shared[0][mi] - runs.probes[1].r2_shared[2][mi],
        runs.probes[2].r2_shared[0][mi] - runs.probes[2].r2_shared[2][mi]);
    min_s_median = std::min(min_s_median, s_med);
    min_gap_median = std::min(min_gap_median, gap_med);
  }
  ok = ok && min_s_median >= 0.6 && min_gap_median >= 0.3;

  double probe_dev = median3(
      std::abs(runs.probes[0].noise_probe_accuracy - runs.probes[0].majority_rate),
      std::abs(runs.probes[1].noise_probe_accuracy - runs.probes[1].majority_rate),
      std::abs(runs.probes[2].noise_probe_accuracy - runs.probes[2].majority_rate));
  ok = ok && probe_dev <= 0.05;

  // seed-averaged halving of the training objective by epoch 50, measured
  // against the first step's loss (the value before any update)
  double ratio = 0;
  for (int i = 0; i < 3; ++i)
    ratio += runs.full[i].history[49].mean_total /
             runs.full[i].loss_log.front().losses.total;
  ratio /= 3.0;
  ok = ok && ratio <= 0.5;

  os << "median R2(S->s) >= " << min_s_median << ", median gap >= "
     << min_gap_median << ", |noise probe - majority| = " << probe_dev
     << ", epoch-50/step-1 loss " << ratio << ", " << runs.full_seconds
     << " s for 3 runs";
  return {5, "disentanglement on synthetic data", ok, os.str()};
}

CriterionResult criterion_ablation_direction(const ProtocolRuns& runs) {
  auto mae_median = [&](const std::vector<TrainResult>& rs) {
    return median3(rs[0].valid_metrics.mae, rs[1].valid_metrics.mae,
                   rs[2].valid_metrics.mae);
  };
  double full = mae_median(runs.full);
  double only = mae_median(runs.only_task);
  double nond = mae_median(runs.non_disentangled);
  bool ok = full <= only && full <= nond;
  std::ostringstream os;
  os.precision(4);
  os << "median val MAE: full " << full << " vs only-task " << only
     << " vs non-disentangled " << nond;
  return {6, "directional ablation reproduction", ok, os.str()};
}

// ---- criteria 7 and 8: command-level determinism and objective audit ------------

std::string write_repro_config(const fs::path& dir, const std::string& out_dir) {
  json cfg = {
      {"synthetic",
       {{"n_samples", 400},
        {"shared_dim", 4},
        {"private_dim", 4},
        {"feature_dims", {16, 16, 16}},
        {"noise_scale", 0.1},
        {"task", "regression"},
        {"seed", 29}}},
      {"seed", 17},
      {"out_dir", out_dir},
      {"model", {{"d_k", 16}}},
      {"train", {{"epochs", 10}, {"batch_size", 32}, {"lr", 1e-3}}},
  };
  std::string path = (dir / "repro.json").string();
  io::write_file(path, cfg.dump(2));
  return path;
}

CriterionResult criterion_determinism(const fs::path& dir) {
  std::string out1 = (dir / "det1").string();
  std::string out2 = (dir / "det2").string();
  std::string cfg = write_repro_config(dir, out1);
  bool ok = cmd_train(cfg) == 0;
  CliOverrides ov;
  ov.out_dir = out2;
  ok = ok && cmd_train((fs::path(out1) / "manifest.json").string(), ov) == 0;

  bool metrics_eq = io::read_file((fs::path(out1) / "metrics.json").string()) ==
                    io::read_file((fs::path(out2) / "metrics.json").string());
  bool ckpt_eq = io::read_file((fs::path(out1) / "checkpoint.mndp").string()) ==
                 io::read_file((fs::path(out2) / "checkpoint.mndp").string());
  bool log_eq = io::read_file((fs::path(out1) / "loss_log.jsonl").string()) ==
                io::read_file((fs::path(out2) / "loss_log.jsonl").string());
  ok = ok && metrics_eq && ckpt_eq && log_eq;
  std::ostringstream os;
  os << "metrics " << (metrics_eq ? "bitwise" : "DIFFER") << ", checkpoint "
     << (ckpt_eq ? "bitwise" : "DIFFER") << ", loss log "
     << (log_eq ? "bitwise" : "DIFFER");
  return {7, "manifest determinism", ok, os.str()};
}

CriterionResult criterion_objective_audit(const fs::path& dir) {
  // audit the composite identity on the determinism run's log
  json manifest = json::parse(
      io::read_file((dir / "det1" / "manifest.json").string()));
  double alpha = manifest["config"]["train"]["alpha"];
  double beta = manifest["config"]["train"]["beta"];
  double gamma = manifest["config"]["train"]["gamma"];
  double lambda = manifest["config"]["train"]["lambda"];
  std::istringstream log(
      io::read_file((dir / "det1" / "loss_log.jsonl").string()));
  std::string line;
  bool ok = true;
  std::size_t audited = 0;
  double worst = 0;
  while (std::getline(log, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    double recombined =
        rec["task"].get<double>() + rec["np"].get<double>() +
        alpha * rec["info"].get<double>() + beta * rec["cons"].get<double>() +
        gamma * rec["diff"].get<double>() +
        lambda * (rec["recon"].get<double>() + rec["cyr"].get<double>());
    double dev = std::abs(recombined - rec["total"].get<double>());
    worst = std::max(worst, dev);
    if (dev > 1e-12) ok = false;
    ++audited;
  }
  ok = ok && audited > 0;

  // each flag zeroes exactly its own term on every step
  SyntheticSpec spec;
  spec.n_samples = 120;
  spec.feature_dims = {8, 8, 8};
  spec.seed = 5;
  Dataset ds = generate_synthetic(spec);
  ModelConfig mc;
  mc.d_k = 8;
  for (Modality m : kModalities)
    mc.input_dims[index_of(m)] = ds.features[index_of(m)].cols;
  mc.task = ds.task;
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 16;
  tc.optim.lr = 1e-3;
  struct FlagCase {
    const char* flag;
    double LossBreakdown::* field;
  };
  const FlagCase cases[] = {
      {"no-info", &LossBreakdown::info},   {"no-cons", &LossBreakdown::cons},
      {"no-diff", &LossBreakdown::diff},   {"no-recon", &LossBreakdown::recon},
      {"no-cyr", &LossBreakdown::cyr},     {"no-np", &LossBreakdown::np},
  };
  for (const FlagCase& c : cases) {
    TrainConfig flagged = tc;
    flagged.ablation = AblationFlags::parse({c.flag});
    TrainResult r = train(ds, mc, flagged);
    for (const LossLogRecord& rec : r.loss_log) {
      if (rec.losses.*(c.field) != 0.0) ok = false;
      double recombined = rec.losses.task + rec.losses.np +
                          rec.losses.alpha * rec.losses.info +
                          rec.losses.beta * rec.losses.cons +
                          rec.losses.gamma * rec.losses.diff +
                          rec.losses.lambda *
                              (rec.losses.recon + rec.losses.cyr);
      if (std::abs(recombined - rec.losses.total) > 1e-12) ok = false;
    }
  }
  std::ostringstream os;
  os << audited << " steps audited, max deviation " << worst
     << "; 6 single-flag runs zero exactly their term";
  return {8, "composite objective audit", ok, os.str()};
}

}  // namespace

int main() {
  fs::path dir = fs::temp_directory_path() / "mind_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);

  std::vector<CriterionResult> results;
  results.push_back(criterion_gradients());
  results.push_back(criterion_oracles());
  results.push_back(criterion_estimator_bound());
  results.push_back(criterion_grl());

  ProtocolRuns runs = run_protocol();
  results.push_back(criterion_disentanglement(runs));
  results.push_back(criterion_ablation_direction(runs));

  results.push_back(criterion_determinism(dir));
  results.push_back(criterion_objective_audit(dir));

  std::sort(results.begin(), results.end(),
            [](const CriterionResult& a, const CriterionResult& b) {
              return a.id < b.id;
            });
  int failures = 0;
  for (const CriterionResult& r : results) {
    std::printf("[%s] criterion %d: %s — %s\n", r.passed ? "PASS" : "FAIL",
                r.id, r.name.c_str(), r.detail.c_str());
    if (!r.passed) ++failures;
  }
  std::printf("%d/8 acceptance criteria passed\n", 8 - failures);
  return failures == 0 ? 0 : 1;
}
