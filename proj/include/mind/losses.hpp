#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mind/networks.hpp"

namespace mind {

// Defaults are calibrated on the default synthetic task so each weighted
// term's gradient norm at initialization sits within one order of magnitude
// of the task gradient's.
struct LossWeights {
  double alpha = 0.1;    // information term
  double beta = 1e-4;    // consistency term
  double gamma = 0.1;    // difference term
  double lambda = 1.0;   // both reconstruction terms
  double lambda_bt = 0;  // 0 -> embedding dimension
  double grl_scale = 1.0;

  double resolved_lambda_bt(std::size_t d_k) const {
    return lambda_bt > 0 ? lambda_bt : static_cast<double>(d_k);
  }
};

struct AblationFlags {
  bool no_info = false;
  bool no_cons = false;
  bool no_diff = false;
  bool no_recon = false;
  bool no_cyr = false;
  bool no_np = false;
  bool only_task = false;
  bool no_invariant = false;   // zero invariant components at fusion
  bool no_specific = false;    // zero specific components at fusion
  bool non_disentangled = false;
  std::array<bool, 3> drop_modality{false, false, false};

  bool info_enabled() const {
    return !no_info && !only_task && !non_disentangled;
  }
  bool cons_enabled() const {
    return !no_cons && !only_task && !non_disentangled;
  }
  bool diff_enabled() const {
    return !no_diff && !only_task && !non_disentangled;
  }
  bool recon_enabled() const {
    return !no_recon && !only_task && !non_disentangled;
  }
  bool cyr_enabled() const { return !no_cyr && !only_task && !non_disentangled; }
  bool np_enabled() const { return !no_np && !only_task && !non_disentangled; }
  bool noise_branch_needed() const {
    return info_enabled() || diff_enabled() || recon_enabled() ||
           cyr_enabled() || np_enabled();
  }

  static AblationFlags parse(const std::vector<std::string>& names);
  std::vector<std::string> names() const;
};

ForwardOptions options_for(const AblationFlags& flags);

// Per-step loss values; cyr_raw keeps the unnormalized squared norms for
// logging, it does not enter the total.
struct LossBreakdown {
  double task = 0, np = 0, info = 0, cons = 0, diff = 0, recon = 0, cyr = 0;
  double cyr_raw = 0;
  double total = 0;
  double alpha = 0, beta = 0, gamma = 0, lambda = 0, lambda_bt = 0;
};

// ---- the seven terms ---------------------------------------------------------

// Jensen-Shannon MI lower-bound estimate between paired rows of x and y.
// The product of marginals is surrogated by re-pairing y through a
// fixed-point-free in-batch permutation. Always <= 0; a constant-zero
// discriminator yields exactly -2 ln 2.
Tensor mi_jsd_estimate(Model& model, Graph& g, const Tensor& x,
                       const Tensor& y, StatsNet which, Rng& rng);
Tensor mi_jsd_estimate(Model& model, Graph& g, const Tensor& x,
                       const Tensor& y, StatsNet which,
                       const std::vector<std::size_t>& marginal_perm);

// Sum of negated MI estimates: (Z_cat, S_m), (Z_m, P_m), (G_m, N_m) over the
// active modalities; three estimator terms per modality.
Tensor info_loss(Model& model, Graph& g, const DisentangledSet& fwd, Rng& rng);
Tensor info_loss(Model& model, Graph& g, const DisentangledSet& fwd,
                 const std::vector<std::vector<std::size_t>>& marginal_perms);

// Batch cross-correlation of two views, column mean-centered, denominators
// guarded with epsilon 1e-8.
Tensor cross_correlation(const Tensor& a, const Tensor& b);

// Redundancy-reduction loss: diagonal toward one, off-diagonal toward zero.
Tensor bt_loss(const Tensor& a, const Tensor& b, double lambda_bt);

// bt_loss summed over unordered pairs of invariant components.
Tensor cons_loss(const std::vector<Tensor>& invariant, double lambda_bt);

// (n-1)^-2 Tr(U K1 U K2) with inner-product kernels and centering U.
Tensor hsic(const Tensor& r1, const Tensor& r2);

enum class Component { Invariant, Specific, Noise };
const char* component_tag(Component c);  // "S", "P", "N"

struct ComponentPair {
  Component first_kind, second_kind;
  Modality first, second;
};

// The independence pairs: (S_m,P_m), (S_m,N_m), (P_m1,P_m2), (P_m,N_m).
// Twelve pairs for three active modalities.
std::vector<ComponentPair> diff_pairs(const std::vector<Modality>& active);

Tensor diff_loss(const DisentangledSet& fwd,
                 const std::vector<Modality>& active);

// Mean over modalities of per-width-normalized squared reconstruction error.
Tensor recon_loss(const DisentangledSet& fwd,
                  const std::vector<Modality>& active, std::size_t d_k);

struct CyclicLoss {
  Tensor normalized;  // optimized scalar: batch-averaged, width-normalized
  double raw = 0;     // plain summed squared norms, for the log
};

// Mutual reconstruction between informative concatenation and noise, each
// decoder fed through a gradient reversal.
CyclicLoss cyclic_recon_loss(Model& model, Graph& g, const DisentangledSet& fwd,
                             double grl_scale);

// Cross-entropy (classification) or mean squared error (regression).
Tensor task_loss(Graph& g, const Tensor& pred, const ModalityBatch& batch,
                 TaskKind task, std::size_t class_count);

// Same functional form applied to the noise-branch prediction.
Tensor noise_pred_loss(Graph& g, const Tensor& noise_pred,
                       const ModalityBatch& batch, TaskKind task,
                       std::size_t class_count);

// ---- composition --------------------------------------------------------------

struct LossParts {
  std::optional<Tensor> task, np, info, cons, diff, recon, cyr;
  double cyr_raw = 0;
};

struct LossComputation {
  LossBreakdown breakdown;
  Tensor total;
};

// total = task + np + alpha info + beta cons + gamma diff
//         + lambda (recon + cyr); absent parts contribute exactly zero.
// Throws DivergenceError naming the first non-finite part.
LossComputation total_loss(Graph& g, const LossParts& parts,
                           const LossWeights& weights, std::size_t d_k);

// Builds every enabled term from a forward pass and composes the total.
LossComputation compute_losses(Model& model, Graph& g,
                               const DisentangledSet& fwd,
                               const ModalityBatch& batch,
                               const LossWeights& weights,
                               const AblationFlags& flags, Rng& mi_rng);

}  // namespace mind
