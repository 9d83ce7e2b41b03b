#include "mind/training.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <sstream>
#include <thread>

#include "mind/io_util.hpp"

namespace mind {

// ---- optimizer ---------------------------------------------------------------

AdamOptimizer::AdamOptimizer(Model& model, OptimizerConfig cfg) : cfg_(cfg) {
  if (!(cfg_.lr >= 0) || !(cfg_.beta1 >= 0 && cfg_.beta1 < 1) ||
      !(cfg_.beta2 >= 0 && cfg_.beta2 < 1) || !(cfg_.eps > 0))
    throw ConfigError("optimizer config out of range");
  model.params().for_each([&](const std::string& name, Variable& v) {
    slots_.push_back({name, &v, std::vector<double>(v.size(), 0.0),
                      std::vector<double>(v.size(), 0.0)});
  });
}

void AdamOptimizer::step() {
  ++t_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (Slot& s : slots_) {
    const std::vector<double>& g = s.var->grad;
    std::vector<double>& p = s.var->value;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i]))
        throw DivergenceError("non-finite gradient in parameter group " +
                              s.name);
      s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * g[i];
      s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      double mhat = s.m[i] / bc1;
      double vhat = s.v[i] / bc2;
      p[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

namespace {
constexpr char kOptMagic[4] = {'M', 'N', 'D', 'O'};
}

void AdamOptimizer::save_state(const std::string& path) const {
  io::ByteWriter w;
  w.bytes(kOptMagic, 4);
  w.u32(1);
  w.u64(t_);
  w.u32(static_cast<std::uint32_t>(slots_.size()));
  for (const Slot& s : slots_) {
    w.str(s.name);
    w.u64(s.m.size());
    for (double x : s.m) w.f64(x);
    for (double x : s.v) w.f64(x);
  }
  io::write_file(path, w.buf);
}

void AdamOptimizer::load_state(const std::string& path) {
  std::string raw = io::read_file(path);
  io::ByteReader r(raw, "optimizer state " + path);
  r.need(4);
  if (!std::equal(kOptMagic, kOptMagic + 4, raw.data()))
    throw FormatError("bad magic in " + path + ": expected MNDO");
  r.pos = 4;
  if (r.u32() != 1)
    throw FormatError("unsupported optimizer state version in " + path);
  t_ = r.u64();
  std::uint32_t count = r.u32();
  if (count != slots_.size())
    throw FormatError("optimizer state has " + std::to_string(count) +
                      " groups, expected " + std::to_string(slots_.size()));
  for (Slot& s : slots_) {
    std::string name = r.str();
    if (name != s.name)
      throw FormatError("optimizer state group order mismatch: " + name +
                        " vs " + s.name);
    std::uint64_t n = r.u64();
    if (n != s.m.size())
      throw FormatError("optimizer state size mismatch for " + name);
    for (double& x : s.m) x = r.f64();
    for (double& x : s.v) x = r.f64();
  }
}

// ---- configuration ------------------------------------------------------------

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("train config: epochs must be positive");
  if (batch_size < 2)
    throw ConfigError("train config: batch_size must be >= 2");
  if (!(optim.lr >= 0)) throw ConfigError("train config: lr must be >= 0");
}

ModelConfig apply_ablation(ModelConfig cfg, const AblationFlags& flags) {
  for (std::size_t i = 0; i < 3; ++i)
    if (flags.drop_modality[i]) cfg.active[i] = false;
  if (flags.non_disentangled) cfg.non_disentangled = true;
  if (flags.no_invariant) cfg.mute_invariant = true;
  if (flags.no_specific) cfg.mute_specific = true;
  return cfg;
}

void check_dataset_model(const Dataset& ds, const ModelConfig& cfg) {
  for (Modality m : cfg.active_modalities()) {
    std::size_t have = ds.features[index_of(m)].cols;
    std::size_t want = cfg.input_dims[index_of(m)];
    if (have != want)
      throw ConfigError(std::string("dataset ") + modality_name(m) +
                        " feature width " + std::to_string(have) +
                        " does not match model config " +
                        std::to_string(want));
  }
  if (ds.task != cfg.task)
    throw ConfigError("dataset task kind does not match model config");
  if (cfg.task == TaskKind::Classification &&
      ds.class_count != cfg.class_count)
    throw ConfigError("dataset has " + std::to_string(ds.class_count) +
                      " classes, model config has " +
                      std::to_string(cfg.class_count));
}

// ---- evaluation -----------------------------------------------------------------

namespace {

// Raw prediction matrix over a split, eval mode.
Matrix predict_raw(Model& model, const Dataset& ds, Split split,
                   const AblationFlags& flags) {
  auto batches = make_batches(ds, split, 256, BatchMode::Eval, nullptr);
  if (batches.empty())
    throw Error(std::string("empty split: ") + split_name(split));
  ForwardOptions opt;
  opt.with_noise = false;
  opt.with_recon = false;
  opt.mute_invariant = flags.no_invariant;
  opt.mute_specific = flags.no_specific;
  Rng unused(0);
  Matrix out(0, model.config().output_dim());
  for (const ModalityBatch& b : batches) {
    Graph g;
    DisentangledSet fwd = model.forward_full(g, b, unused, opt);
    const auto& v = fwd.prediction.value();
    out.data.insert(out.data.end(), v.begin(), v.end());
    out.rows += b.size();
  }
  return out;
}

std::vector<double> split_scores(const Dataset& ds, Split split) {
  std::vector<double> out;
  for (std::size_t i : ds.split_indices(split)) out.push_back(ds.scores[i]);
  return out;
}

std::vector<std::uint32_t> split_classes(const Dataset& ds, Split split) {
  std::vector<std::uint32_t> out;
  for (std::size_t i : ds.split_indices(split)) out.push_back(ds.classes[i]);
  return out;
}

}  // namespace

std::vector<double> predict_scores(Model& model, const Dataset& ds, Split split,
                                   const AblationFlags& flags) {
  if (model.config().task != TaskKind::Regression)
    throw ConfigError("predict_scores on a classification model");
  Matrix raw = predict_raw(model, ds, split, flags);
  return raw.data;
}

std::vector<std::uint32_t> predict_classes(Model& model, const Dataset& ds,
                                           Split split,
                                           const AblationFlags& flags) {
  if (model.config().task != TaskKind::Classification)
    throw ConfigError("predict_classes on a regression model");
  Matrix raw = predict_raw(model, ds, split, flags);
  std::vector<std::uint32_t> out(raw.rows);
  for (std::size_t i = 0; i < raw.rows; ++i) {
    const double* row = raw.row(i);
    std::size_t best = 0;
    for (std::size_t c = 1; c < raw.cols; ++c)
      if (row[c] > row[best]) best = c;
    out[i] = static_cast<std::uint32_t>(best);
  }
  return out;
}

MetricsReport evaluate(Model& model, const Dataset& ds, Split split,
                       const AblationFlags& flags) {
  check_dataset_model(ds, model.config());
  if (model.config().task == TaskKind::Regression)
    return regression_metrics(split_scores(ds, split),
                              predict_scores(model, ds, split, flags));
  return classification_metrics(split_classes(ds, split),
                                predict_classes(model, ds, split, flags),
                                ds.class_count);
}

// ---- training loop ----------------------------------------------------------------

namespace {

// lower-is-better scalar used for model selection
double selection_score(const MetricsReport& r) {
  return r.task == TaskKind::Regression ? r.mae : -r.accuracy;
}

}  // namespace

TrainResult train(const Dataset& ds, const ModelConfig& model_cfg,
                  const TrainConfig& train_cfg) {
  train_cfg.validate();
  ds.validate();
  ModelConfig cfg = apply_ablation(model_cfg, train_cfg.ablation);
  cfg.seed = train_cfg.seed;
  cfg.grl_scale = train_cfg.weights.grl_scale;
  check_dataset_model(ds, cfg);

  Model model(cfg);
  AdamOptimizer optimizer(model, train_cfg.optim);
  Rng shuffle_rng(derive_seed(train_cfg.seed, "shuffle"));
  Rng noise_rng(derive_seed(train_cfg.seed, "noise"));
  Rng mi_rng(derive_seed(train_cfg.seed, "mi"));

  const AblationFlags& flags = train_cfg.ablation;
  ForwardOptions fwd_opt = options_for(flags);

  TrainResult result{model, 0, {}, {}, {}, {}, model.parameter_count(),
                     false, ""};
  double best_score = std::numeric_limits<double>::infinity();
  bool have_best = false;
  std::size_t since_best = 0;
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= train_cfg.epochs; ++epoch) {
    auto batches = make_batches(ds, Split::Train, train_cfg.batch_size,
                                BatchMode::Train, &shuffle_rng);
    if (batches.empty())
      throw BatchSizeError(
          "train split has fewer samples than one batch; nothing to train on");
    double total_sum = 0;
    try {
      for (const ModalityBatch& batch : batches) {
        model.zero_grad();
        Graph g;
        DisentangledSet fwd = model.forward_full(g, batch, noise_rng, fwd_opt);
        LossComputation losses = compute_losses(
            model, g, fwd, batch, train_cfg.weights, flags, mi_rng);
        g.backward(losses.total);
        optimizer.step();
        ++step;
        total_sum += losses.breakdown.total;
        result.loss_log.push_back({step, epoch, losses.breakdown});
      }
    } catch (const DivergenceError& e) {
      result.diverged = true;
      result.divergence_message = e.what();
      break;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_total = total_sum / static_cast<double>(batches.size());
    rec.valid = evaluate(model, ds, Split::Valid, flags);
    result.history.push_back(rec);

    double score = selection_score(rec.valid);
    if (!have_best || score < best_score) {
      best_score = score;
      have_best = true;
      result.model = model;  // parameter snapshot
      result.best_epoch = epoch;
      since_best = 0;
    } else if (train_cfg.patience > 0 && ++since_best >= train_cfg.patience) {
      break;
    }
  }

  // on divergence before the first completed epoch, result.model still
  // holds the initial parameters: the last good state
  result.valid_metrics = evaluate(result.model, ds, Split::Valid, flags);
  result.test_metrics = evaluate(result.model, ds, Split::Test, flags);
  return result;
}

// ---- probes -------------------------------------------------------------------------

namespace {

// Cholesky solve of the SPD system A X = B (A: d x d, B: d x k), in place.
Matrix cholesky_solve(Matrix a, Matrix b) {
  std::size_t d = a.rows;
  for (std::size_t j = 0; j < d; ++j) {
    double diag = a.at(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= a.at(j, k) * a.at(j, k);
    if (diag <= 0) throw Error("cholesky: matrix not positive definite");
    diag = std::sqrt(diag);
    a.at(j, j) = diag;
    for (std::size_t i = j + 1; i < d; ++i) {
      double v = a.at(i, j);
      for (std::size_t k = 0; k < j; ++k) v -= a.at(i, k) * a.at(j, k);
      a.at(i, j) = v / diag;
    }
  }
  // forward then back substitution per column of B
  for (std::size_t c = 0; c < b.cols; ++c) {
    for (std::size_t i = 0; i < d; ++i) {
      double v = b.at(i, c);
      for (std::size_t k = 0; k < i; ++k) v -= a.at(i, k) * b.at(k, c);
      b.at(i, c) = v / a.at(i, i);
    }
    for (std::size_t i = d; i-- > 0;) {
      double v = b.at(i, c);
      for (std::size_t k = i + 1; k < d; ++k) v -= a.at(k, i) * b.at(k, c);
      b.at(i, c) = v / a.at(i, i);
    }
  }
  return b;
}

// Ridge regression with intercept: returns [d+1 x k] weights.
Matrix ridge_fit(const Matrix& x, const Matrix& y, double reg) {
  std::size_t n = x.rows, d = x.cols + 1;
  Matrix gram(d, d);
  Matrix xty(d, y.cols);
  auto feat = [&](std::size_t i, std::size_t j) {
    return j < x.cols ? x.at(i, j) : 1.0;
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < d; ++a) {
      double fa = feat(i, a);
      for (std::size_t b = a; b < d; ++b) gram.at(a, b) += fa * feat(i, b);
      for (std::size_t c = 0; c < y.cols; ++c)
        xty.at(a, c) += fa * y.at(i, c);
    }
  }
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = 0; b < a; ++b) gram.at(a, b) = gram.at(b, a);
    gram.at(a, a) += reg;
  }
  return cholesky_solve(std::move(gram), std::move(xty));
}

Matrix ridge_predict(const Matrix& x, const Matrix& w) {
  Matrix out(x.rows, w.cols);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t c = 0; c < w.cols; ++c) {
      double acc = w.at(x.cols, c);  // intercept
      for (std::size_t j = 0; j < x.cols; ++j)
        acc += x.at(i, j) * w.at(j, c);
      out.at(i, c) = acc;
    }
  return out;
}

// Variance-weighted multi-output R^2 around the evaluation-set mean.
double r_squared(const Matrix& y, const Matrix& pred) {
  std::vector<double> mean(y.cols, 0.0);
  for (std::size_t i = 0; i < y.rows; ++i)
    for (std::size_t c = 0; c < y.cols; ++c) mean[c] += y.at(i, c);
  for (double& m : mean) m /= static_cast<double>(y.rows);
  double sse = 0, sst = 0;
  for (std::size_t i = 0; i < y.rows; ++i)
    for (std::size_t c = 0; c < y.cols; ++c) {
      double e = y.at(i, c) - pred.at(i, c);
      double t = y.at(i, c) - mean[c];
      sse += e * e;
      sst += t * t;
    }
  if (sst == 0.0) return 0.0;
  return 1.0 - sse / sst;
}

struct SplitEmbeddings {
  // [component][modality] feature matrices for one split
  std::array<std::array<Matrix, 3>, 3> comp;
  std::vector<std::size_t> sample_indices;
};

SplitEmbeddings collect_embeddings(Model& model, const Dataset& ds, Split split,
                                   Rng& noise_rng) {
  SplitEmbeddings out;
  auto batches = make_batches(ds, split, 256, BatchMode::Eval, nullptr);
  if (batches.empty())
    throw Error(std::string("empty split: ") + split_name(split));
  std::size_t dk = model.config().d_k;
  for (Modality m : model.config().active_modalities())
    for (std::size_t c = 0; c < 3; ++c)
      out.comp[c][index_of(m)] = Matrix(0, dk);
  ForwardOptions opt;
  opt.with_recon = false;
  for (const ModalityBatch& b : batches) {
    Graph g;
    DisentangledSet fwd = model.forward_full(g, b, noise_rng, opt);
    out.sample_indices.insert(out.sample_indices.end(), b.indices.begin(),
                              b.indices.end());
    for (Modality m : model.config().active_modalities()) {
      std::size_t mi = index_of(m);
      const Tensor* comps[3] = {&fwd.invariant[mi], &fwd.specific[mi],
                                &fwd.noise[mi]};
      for (std::size_t c = 0; c < 3; ++c) {
        const auto& v = comps[c]->value();
        Matrix& dst = out.comp[c][mi];
        dst.data.insert(dst.data.end(), v.begin(), v.end());
        dst.rows += b.size();
      }
    }
  }
  return out;
}

Matrix gather_factor(const Matrix& factor,
                     const std::vector<std::size_t>& idx) {
  Matrix out(idx.size(), factor.cols);
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy(factor.row(idx[i]), factor.row(idx[i]) + factor.cols,
              out.row(i));
  return out;
}

constexpr double kProbeRidge = 1e-6;

}  // namespace

ProbeReport probe_disentanglement(Model& model, const Dataset& ds,
                                  std::uint64_t noise_seed) {
  if (!ds.factors.has_value())
    throw ProbeError(
        "probe_disentanglement requires a dataset with ground-truth factors "
        "(synthetic provenance)");
  check_dataset_model(ds, model.config());
  Rng noise_rng(derive_seed(noise_seed ? noise_seed : model.config().seed,
                            "probe-noise"));
  SplitEmbeddings tr = collect_embeddings(model, ds, Split::Train, noise_rng);
  SplitEmbeddings te = collect_embeddings(model, ds, Split::Test, noise_rng);
  const FactorSet& factors = *ds.factors;

  ProbeReport report;
  for (Modality m : model.config().active_modalities()) {
    std::size_t mi = index_of(m);
    Matrix shared_tr = gather_factor(factors.shared, tr.sample_indices);
    Matrix shared_te = gather_factor(factors.shared, te.sample_indices);
    Matrix priv_tr = gather_factor(factors.private_[mi], tr.sample_indices);
    Matrix priv_te = gather_factor(factors.private_[mi], te.sample_indices);
    for (std::size_t c = 0; c < 3; ++c) {
      Matrix w = ridge_fit(tr.comp[c][mi], shared_tr, kProbeRidge);
      report.r2_shared[c][mi] =
          r_squared(shared_te, ridge_predict(te.comp[c][mi], w));
      Matrix wp = ridge_fit(tr.comp[c][mi], priv_tr, kProbeRidge);
      report.r2_private[c][mi] =
          r_squared(priv_te, ridge_predict(te.comp[c][mi], wp));
    }
  }

  // Linear label probe from the concatenated noise components.
  auto concat_noise = [&](const SplitEmbeddings& e) {
    const auto active = model.config().active_modalities();
    std::size_t n = e.sample_indices.size();
    std::size_t dk = model.config().d_k;
    Matrix out(n, active.size() * dk);
    for (std::size_t a = 0; a < active.size(); ++a) {
      const Matrix& src = e.comp[2][index_of(active[a])];
      for (std::size_t i = 0; i < n; ++i)
        std::copy(src.row(i), src.row(i) + dk, out.row(i) + a * dk);
    }
    return out;
  };
  auto label_class = [&](std::size_t sample) -> std::uint32_t {
    if (ds.task == TaskKind::Classification) return ds.classes[sample];
    return ds.scores[sample] > 0.0 ? 1u : 0u;
  };
  std::size_t n_classes =
      ds.task == TaskKind::Classification ? ds.class_count : 2;
  Matrix onehot_tr(tr.sample_indices.size(), n_classes);
  for (std::size_t i = 0; i < tr.sample_indices.size(); ++i)
    onehot_tr.at(i, label_class(tr.sample_indices[i])) = 1.0;
  Matrix w = ridge_fit(concat_noise(tr), onehot_tr, kProbeRidge);
  Matrix pred = ridge_predict(concat_noise(te), w);
  std::vector<std::size_t> class_counts(n_classes, 0);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < te.sample_indices.size(); ++i) {
    std::uint32_t truth = label_class(te.sample_indices[i]);
    ++class_counts[truth];
    std::size_t best = 0;
    for (std::size_t c = 1; c < n_classes; ++c)
      if (pred.at(i, c) > pred.at(i, best)) best = c;
    if (best == truth) ++hits;
  }
  report.noise_probe_accuracy =
      static_cast<double>(hits) / static_cast<double>(te.sample_indices.size());
  report.majority_rate =
      static_cast<double>(*std::max_element(class_counts.begin(),
                                            class_counts.end())) /
      static_cast<double>(te.sample_indices.size());
  return report;
}

// ---- ablation suite --------------------------------------------------------------

AblationTable run_ablation_suite(const Dataset& ds,
                                 const ModelConfig& model_cfg,
                                 const TrainConfig& train_cfg,
                                 std::size_t max_parallel) {
  struct RowSpec {
    const char* name;
    const char* group;
    const char* flag;  // nullptr for the full model
  };
  static const RowSpec kRows[] = {
      {"MInD", "", nullptr},
      {"w/o Visual", "Modality", "no-visual"},
      {"w/o Audio", "Modality", "no-audio"},
      {"w/o Text", "Modality", "no-text"},
      {"w/o M-Invariant", "Disentanglement", "no-invariant"},
      {"w/o M-Specific", "Disentanglement", "no-specific"},
      {"Non-Disentangled", "Disentanglement", "non-disentangled"},
      {"w/o L_Info", "Constraint", "no-info"},
      {"w/o L_Cons", "Constraint", "no-cons"},
      {"w/o L_Diff", "Constraint", "no-diff"},
      {"w/o L_Recon", "Constraint", "no-recon"},
      {"w/o L_CyR", "Constraint", "no-cyr"},
      {"w/o L_NP", "Constraint", "no-np"},
      {"Only L_Task", "Constraint", "only-task"},
  };

  AblationTable table;
  table.rows.resize(std::size(kRows));
  if (max_parallel == 0)
    max_parallel = std::max(1u, std::thread::hardware_concurrency());

  auto run_row = [&](std::size_t i) {
    const RowSpec& spec = kRows[i];
    TrainConfig cfg = train_cfg;
    cfg.seed = derive_seed(train_cfg.seed, "ablation", i);
    std::vector<std::string> flag_names = train_cfg.ablation.names();
    if (spec.flag) flag_names.push_back(spec.flag);
    cfg.ablation = AblationFlags::parse(flag_names);
    TrainResult r = train(ds, model_cfg, cfg);
    AblationRow row;
    row.name = spec.name;
    row.group = spec.group;
    row.flags = flag_names;
    row.seed = cfg.seed;
    row.valid = r.valid_metrics;
    row.test = r.test_metrics;
    table.rows[i] = std::move(row);
  };

  for (std::size_t start = 0; start < std::size(kRows);
       start += max_parallel) {
    std::size_t end = std::min(start + max_parallel, std::size(kRows));
    std::vector<std::future<void>> futs;
    for (std::size_t i = start; i < end; ++i)
      futs.push_back(std::async(std::launch::async, run_row, i));
    for (auto& f : futs) f.get();
  }
  return table;
}

std::string format_ablation_table(const AblationTable& table, TaskKind task) {
  std::ostringstream os;
  auto line = [&] { os << std::string(64, '-') << "\n"; };
  char buf[128];
  if (task == TaskKind::Regression) {
    std::snprintf(buf, sizeof(buf), "%-24s %8s %8s %8s\n", "Model", "MAE",
                  "Corr", "Acc-2");
  } else {
    std::snprintf(buf, sizeof(buf), "%-24s %8s %8s\n", "Model", "Acc", "F1");
  }
  line();
  os << buf;
  line();
  std::string group;
  for (const AblationRow& r : table.rows) {
    if (r.group != group) {
      group = r.group;
      os << "  [" << group << "]\n";
    }
    if (task == TaskKind::Regression)
      std::snprintf(buf, sizeof(buf), "%-24s %8.4f %8.4f %8.4f\n",
                    r.name.c_str(), r.test.mae, r.test.corr, r.test.acc2);
    else
      std::snprintf(buf, sizeof(buf), "%-24s %8.4f %8.4f\n", r.name.c_str(),
                    r.test.accuracy, r.test.f1);
    os << buf;
  }
  line();
  return os.str();
}

}  // namespace mind
