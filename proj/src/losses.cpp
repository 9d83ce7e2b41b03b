#include "mind/losses.hpp"

#include <cmath>

namespace mind {

namespace {
constexpr double kCorrEps = 1e-8;
}

AblationFlags AblationFlags::parse(const std::vector<std::string>& names) {
  AblationFlags f;
  for (const std::string& n : names) {
    if (n == "no-info") f.no_info = true;
    else if (n == "no-cons") f.no_cons = true;
    else if (n == "no-diff") f.no_diff = true;
    else if (n == "no-recon") f.no_recon = true;
    else if (n == "no-cyr") f.no_cyr = true;
    else if (n == "no-np") f.no_np = true;
    else if (n == "only-task") f.only_task = true;
    else if (n == "no-invariant") f.no_invariant = true;
    else if (n == "no-specific") f.no_specific = true;
    else if (n == "non-disentangled") f.non_disentangled = true;
    else if (n == "no-visual") f.drop_modality[index_of(Modality::Visual)] = true;
    else if (n == "no-audio") f.drop_modality[index_of(Modality::Audio)] = true;
    else if (n == "no-text") f.drop_modality[index_of(Modality::Text)] = true;
    else
      throw ConfigError("unknown ablation flag: " + n);
  }
  return f;
}

std::vector<std::string> AblationFlags::names() const {
  std::vector<std::string> out;
  if (no_info) out.push_back("no-info");
  if (no_cons) out.push_back("no-cons");
  if (no_diff) out.push_back("no-diff");
  if (no_recon) out.push_back("no-recon");
  if (no_cyr) out.push_back("no-cyr");
  if (no_np) out.push_back("no-np");
  if (only_task) out.push_back("only-task");
  if (no_invariant) out.push_back("no-invariant");
  if (no_specific) out.push_back("no-specific");
  if (non_disentangled) out.push_back("non-disentangled");
  if (drop_modality[0]) out.push_back("no-visual");
  if (drop_modality[1]) out.push_back("no-audio");
  if (drop_modality[2]) out.push_back("no-text");
  return out;
}

ForwardOptions options_for(const AblationFlags& flags) {
  ForwardOptions opt;
  opt.with_noise = flags.noise_branch_needed();
  opt.with_recon = flags.recon_enabled();
  opt.mute_invariant = flags.no_invariant;
  opt.mute_specific = flags.no_specific;
  return opt;
}

const char* component_tag(Component c) {
  switch (c) {
    case Component::Invariant: return "S";
    case Component::Specific: return "P";
    case Component::Noise: return "N";
  }
  return "?";
}

// ---- MI estimator -------------------------------------------------------------

Tensor mi_jsd_estimate(Model& model, Graph& g, const Tensor& x,
                       const Tensor& y, StatsNet which, Rng& rng) {
  if (x.rows() < 2)
    throw BatchSizeError("mi_jsd_estimate requires n >= 2, got n = " +
                         std::to_string(x.rows()));
  return mi_jsd_estimate(model, g, x, y, which, rng.derangement(x.rows()));
}

Tensor mi_jsd_estimate(Model& model, Graph& g, const Tensor& x,
                       const Tensor& y, StatsNet which,
                       const std::vector<std::size_t>& marginal_perm) {
  std::size_t n = x.rows();
  if (n < 2)
    throw BatchSizeError("mi_jsd_estimate requires n >= 2, got n = " +
                         std::to_string(n));
  if (marginal_perm.size() != n)
    throw ShapeError("marginal permutation length " +
                     std::to_string(marginal_perm.size()) +
                     " does not match batch size " + std::to_string(n));
  for (std::size_t i = 0; i < n; ++i)
    if (marginal_perm[i] == i)
      throw Error("marginal permutation has a fixed point at " +
                  std::to_string(i));
  Tensor joint_scores = model.statistics_score(g, x, y, which);
  // E[-sp(-T)] over paired rows
  Tensor joint = scalar_mul(
      mean(softplus(scalar_mul(joint_scores, -1.0))), -1.0);
  Tensor y_shuffled = gather_rows(y, marginal_perm);
  Tensor marginal_scores = model.statistics_score(g, x, y_shuffled, which);
  Tensor marginal = mean(softplus(marginal_scores));
  return sub(joint, marginal);
}

Tensor info_loss(Model& model, Graph& g, const DisentangledSet& fwd, Rng& rng) {
  const auto active = model.config().active_modalities();
  std::size_t n = fwd.features[index_of(active.front())].rows();
  std::vector<std::vector<std::size_t>> perms;
  for (std::size_t i = 0; i < 3 * active.size(); ++i)
    perms.push_back(rng.derangement(n));
  return info_loss(model, g, fwd, perms);
}

Tensor info_loss(Model& model, Graph& g, const DisentangledSet& fwd,
                 const std::vector<std::vector<std::size_t>>& marginal_perms) {
  const auto active = model.config().active_modalities();
  if (marginal_perms.size() != 3 * active.size())
    throw ShapeError("info_loss expects " + std::to_string(3 * active.size()) +
                     " marginal permutations, got " +
                     std::to_string(marginal_perms.size()));
  std::vector<Tensor> feats;
  for (Modality m : active) feats.push_back(fwd.features[index_of(m)]);
  Tensor feat_cat = concat_cols(std::span<const Tensor>(feats));

  std::size_t p = 0;
  Tensor loss = g.scalar(0.0);
  for (Modality m : active) {
    Tensor mi = mi_jsd_estimate(model, g, feat_cat, fwd.invariant[index_of(m)],
                                StatsNet::InvariantShared, marginal_perms[p++]);
    loss = add(loss, scalar_mul(mi, -1.0));
  }
  for (Modality m : active) {
    Tensor mi =
        mi_jsd_estimate(model, g, fwd.features[index_of(m)],
                        fwd.specific[index_of(m)], private_stats(m),
                        marginal_perms[p++]);
    loss = add(loss, scalar_mul(mi, -1.0));
  }
  for (Modality m : active) {
    Tensor mi =
        mi_jsd_estimate(model, g, fwd.noise_input[index_of(m)],
                        fwd.noise[index_of(m)], private_stats(m),
                        marginal_perms[p++]);
    loss = add(loss, scalar_mul(mi, -1.0));
  }
  return loss;
}

// ---- consistency ---------------------------------------------------------------

Tensor cross_correlation(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("cross_correlation: shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  if (a.rows() < 2)
    throw BatchSizeError("cross_correlation requires n >= 2, got n = " +
                         std::to_string(a.rows()));
  Tensor ac = batch_standardize(a);
  Tensor bc = batch_standardize(b);
  Tensor numer = matmul(transpose(ac), bc);
  Tensor na = sqrt_elem(col_sum(mul(ac, ac)));  // [1 x d] column norms
  Tensor nb = sqrt_elem(col_sum(mul(bc, bc)));
  Tensor denom = scalar_add(matmul(transpose(na), nb), kCorrEps);
  return div(numer, denom);
}

Tensor bt_loss(const Tensor& a, const Tensor& b, double lambda_bt) {
  Tensor c = cross_correlation(a, b);
  Graph& g = *a.graph();
  Tensor diag = diag_part(c);
  Tensor ones = g.full({diag.size()}, 1.0);
  Tensor on_diag = sum_sq(sub(ones, diag));
  Tensor off_diag = sub(sum_sq(c), sum_sq(diag));
  return add(on_diag, scalar_mul(off_diag, lambda_bt));
}

Tensor cons_loss(const std::vector<Tensor>& invariant, double lambda_bt) {
  if (invariant.size() < 2)
    throw ShapeError("cons_loss needs at least two views");
  Graph& g = *invariant[0].graph();
  Tensor loss = g.scalar(0.0);
  for (std::size_t i = 0; i < invariant.size(); ++i)
    for (std::size_t j = i + 1; j < invariant.size(); ++j)
      loss = add(loss, bt_loss(invariant[i], invariant[j], lambda_bt));
  return loss;
}

// ---- difference -----------------------------------------------------------------

Tensor hsic(const Tensor& r1, const Tensor& r2) {
  if (r1.rows() != r2.rows())
    throw ShapeError("hsic: row counts disagree, " + shape_str(r1.shape()) +
                     " vs " + shape_str(r2.shape()));
  std::size_t n = r1.rows();
  if (n < 2)
    throw BatchSizeError("hsic requires n >= 2, got n = " + std::to_string(n));
  Graph& g = *r1.graph();
  // centering matrix U = I - (1/n) e e^T
  std::vector<double> u(n * n, -1.0 / static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) u[i * n + i] += 1.0;
  Tensor uc = g.constant({n, n}, std::move(u));
  Tensor k1 = matmul(r1, transpose(r1));
  Tensor k2 = matmul(r2, transpose(r2));
  Tensor prod = matmul(matmul(uc, k1), matmul(uc, k2));
  double scale = 1.0 / (static_cast<double>(n - 1) * static_cast<double>(n - 1));
  return scalar_mul(trace(prod), scale);
}

std::vector<ComponentPair> diff_pairs(const std::vector<Modality>& active) {
  std::vector<ComponentPair> pairs;
  for (Modality m : active)
    pairs.push_back({Component::Invariant, Component::Specific, m, m});
  for (Modality m : active)
    pairs.push_back({Component::Invariant, Component::Noise, m, m});
  for (std::size_t i = 0; i < active.size(); ++i)
    for (std::size_t j = i + 1; j < active.size(); ++j)
      pairs.push_back(
          {Component::Specific, Component::Specific, active[i], active[j]});
  for (Modality m : active)
    pairs.push_back({Component::Specific, Component::Noise, m, m});
  return pairs;
}

namespace {

const Tensor& component_of(const DisentangledSet& fwd, Component c,
                           Modality m) {
  switch (c) {
    case Component::Invariant: return fwd.invariant[index_of(m)];
    case Component::Specific: return fwd.specific[index_of(m)];
    case Component::Noise: return fwd.noise[index_of(m)];
  }
  throw Error("unreachable component kind");
}

}  // namespace

Tensor diff_loss(const DisentangledSet& fwd,
                 const std::vector<Modality>& active) {
  auto pairs = diff_pairs(active);
  Graph& g = *fwd.invariant[index_of(active.front())].graph();
  Tensor loss = g.scalar(0.0);
  for (const ComponentPair& p : pairs)
    loss = add(loss, hsic(component_of(fwd, p.first_kind, p.first),
                          component_of(fwd, p.second_kind, p.second)));
  return loss;
}

// ---- reconstruction --------------------------------------------------------------

Tensor recon_loss(const DisentangledSet& fwd,
                  const std::vector<Modality>& active, std::size_t d_k) {
  Graph& g = *fwd.features[index_of(active.front())].graph();
  Tensor loss = g.scalar(0.0);
  for (Modality m : active) {
    const Tensor& z = fwd.features[index_of(m)];
    const Tensor& z_hat = fwd.reconstructed[index_of(m)];
    if (!z_hat.valid())
      throw Error("recon_loss: forward pass skipped reconstruction");
    if (z.shape() != z_hat.shape())
      throw ShapeError("recon_loss: shape mismatch " + shape_str(z.shape()) +
                       " vs " + shape_str(z_hat.shape()));
    double norm = 1.0 / (static_cast<double>(z.rows()) *
                         static_cast<double>(d_k));
    loss = add(loss, scalar_mul(sum_sq(sub(z, z_hat)), norm));
  }
  return scalar_mul(loss, 1.0 / static_cast<double>(active.size()));
}

CyclicLoss cyclic_recon_loss(Model& model, Graph& g,
                             const DisentangledSet& fwd, double grl_scale) {
  const auto active = model.config().active_modalities();
  std::size_t dk = model.config().d_k;
  CyclicLoss out;
  Tensor loss = g.scalar(0.0);
  for (Modality m : active) {
    const Tensor& informative = fwd.informative[index_of(m)];
    const Tensor& noise = fwd.noise[index_of(m)];
    if (!noise.valid())
      throw Error("cyclic_recon_loss: forward pass skipped the noise branch");
    std::size_t n = informative.rows();
    // reconstruct the informative concatenation from reversed noise
    Tensor from_noise =
        model.decode_cyclic(g, grad_reverse(noise, grl_scale),
                            CycDirection::NToF, m);
    Tensor err_f = sum_sq(sub(informative, from_noise));
    out.raw += err_f.scalar();
    loss = add(loss, scalar_mul(err_f, 1.0 / (static_cast<double>(n) *
                                              static_cast<double>(2 * dk))));
    // reconstruct the noise from the reversed informative concatenation
    Tensor from_informative =
        model.decode_cyclic(g, grad_reverse(informative, grl_scale),
                            CycDirection::FToN, m);
    Tensor err_n = sum_sq(sub(noise, from_informative));
    out.raw += err_n.scalar();
    loss = add(loss, scalar_mul(err_n, 1.0 / (static_cast<double>(n) *
                                              static_cast<double>(dk))));
  }
  out.normalized = loss;
  return out;
}

// ---- task terms -------------------------------------------------------------------

namespace {

Tensor prediction_loss(Graph& g, const Tensor& pred, const ModalityBatch& batch,
                       TaskKind task, std::size_t class_count,
                       const char* name) {
  std::size_t n = pred.rows();
  if (task == TaskKind::Regression) {
    if (batch.scores.size() != n)
      throw ShapeError(std::string(name) + ": prediction rows " +
                       std::to_string(n) + " vs " +
                       std::to_string(batch.scores.size()) + " labels");
    Tensor y = g.constant({n, 1}, batch.scores);
    return scalar_mul(sum_sq(sub(pred, y)), 1.0 / static_cast<double>(n));
  }
  if (batch.classes.size() != n)
    throw ShapeError(std::string(name) + ": prediction rows " +
                     std::to_string(n) + " vs " +
                     std::to_string(batch.classes.size()) + " labels");
  if (pred.cols() != class_count)
    throw ShapeError(std::string(name) + ": prediction width " +
                     std::to_string(pred.cols()) + " vs class count " +
                     std::to_string(class_count));
  std::vector<double> onehot(n * class_count, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (batch.classes[i] >= class_count)
      throw ConfigError(std::string(name) + ": label " +
                        std::to_string(batch.classes[i]) +
                        " out of class range [0, " +
                        std::to_string(class_count) + ")");
    onehot[i * class_count + batch.classes[i]] = 1.0;
  }
  Tensor oh = g.constant({n, class_count}, std::move(onehot));
  Tensor picked = sum(mul(oh, log_softmax_rows(pred)));
  return scalar_mul(picked, -1.0 / static_cast<double>(n));
}

}  // namespace

Tensor task_loss(Graph& g, const Tensor& pred, const ModalityBatch& batch,
                 TaskKind task, std::size_t class_count) {
  return prediction_loss(g, pred, batch, task, class_count, "task_loss");
}

Tensor noise_pred_loss(Graph& g, const Tensor& noise_pred,
                       const ModalityBatch& batch, TaskKind task,
                       std::size_t class_count) {
  return prediction_loss(g, noise_pred, batch, task, class_count,
                         "noise_pred_loss");
}

// ---- composition --------------------------------------------------------------------

LossComputation total_loss(Graph& g, const LossParts& parts,
                           const LossWeights& weights, std::size_t d_k) {
  auto part = [&](const std::optional<Tensor>& t, const char* name) {
    if (!t.has_value()) return g.scalar(0.0);
    double v = t->scalar();
    if (!std::isfinite(v))
      throw DivergenceError(std::string(name) + " is non-finite (" +
                            std::to_string(v) + "); training diverged");
    return *t;
  };
  Tensor task = part(parts.task, "L_Task");
  Tensor np = part(parts.np, "L_NP");
  Tensor info = part(parts.info, "L_Info");
  Tensor cons = part(parts.cons, "L_Cons");
  Tensor diff = part(parts.diff, "L_Diff");
  Tensor recon = part(parts.recon, "L_Recon");
  Tensor cyr = part(parts.cyr, "L_CyR");

  Tensor total = add(task, np);
  total = add(total, scalar_mul(info, weights.alpha));
  total = add(total, scalar_mul(cons, weights.beta));
  total = add(total, scalar_mul(diff, weights.gamma));
  total = add(total, scalar_mul(add(recon, cyr), weights.lambda));

  LossComputation out;
  out.total = total;
  LossBreakdown& b = out.breakdown;
  b.task = task.scalar();
  b.np = np.scalar();
  b.info = info.scalar();
  b.cons = cons.scalar();
  b.diff = diff.scalar();
  b.recon = recon.scalar();
  b.cyr = cyr.scalar();
  b.cyr_raw = parts.cyr.has_value() ? parts.cyr_raw : 0.0;
  b.total = total.scalar();
  b.alpha = weights.alpha;
  b.beta = weights.beta;
  b.gamma = weights.gamma;
  b.lambda = weights.lambda;
  b.lambda_bt = weights.resolved_lambda_bt(d_k);
  return out;
}

LossComputation compute_losses(Model& model, Graph& g,
                               const DisentangledSet& fwd,
                               const ModalityBatch& batch,
                               const LossWeights& weights,
                               const AblationFlags& flags, Rng& mi_rng) {
  const ModelConfig& cfg = model.config();
  const auto active = cfg.active_modalities();
  LossParts parts;
  parts.task = task_loss(g, fwd.prediction, batch, cfg.task, cfg.class_count);
  if (cfg.non_disentangled)
    return total_loss(g, parts, weights, cfg.d_k);

  if (flags.np_enabled())
    parts.np = noise_pred_loss(g, fwd.noise_prediction, batch, cfg.task,
                               cfg.class_count);
  if (flags.info_enabled()) parts.info = info_loss(model, g, fwd, mi_rng);
  if (flags.cons_enabled()) {
    std::vector<Tensor> inv;
    for (Modality m : active) inv.push_back(fwd.invariant[index_of(m)]);
    parts.cons = cons_loss(inv, weights.resolved_lambda_bt(cfg.d_k));
  }
  if (flags.diff_enabled()) parts.diff = diff_loss(fwd, active);
  if (flags.recon_enabled()) parts.recon = recon_loss(fwd, active, cfg.d_k);
  if (flags.cyr_enabled()) {
    CyclicLoss cyr = cyclic_recon_loss(model, g, fwd, weights.grl_scale);
    parts.cyr = cyr.normalized;
    parts.cyr_raw = cyr.raw;
  }
  return total_loss(g, parts, weights, cfg.d_k);
}

}  // namespace mind
