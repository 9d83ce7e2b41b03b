#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mind/data.hpp"
#include "mind/rng.hpp"
#include "mind/tensor.hpp"
#include "mind/types.hpp"

namespace mind {

struct ModelConfig {
  std::size_t d_k = 64;
  std::array<std::size_t, 3> input_dims{16, 16, 16};  // d_V, d_A, d_T
  TaskKind task = TaskKind::Regression;
  std::size_t class_count = 0;  // classification only
  std::size_t stats_depth = 2;  // hidden layers in the statistics networks
  std::size_t stats_width = 0;  // 0 -> d_k
  std::size_t head_depth = 2;   // hidden layers in the prediction heads
  std::size_t head_width = 0;   // 0 -> d_k
  double grl_scale = 1.0;
  std::uint64_t seed = 1;
  std::array<bool, 3> active{true, true, true};  // modality switches
  bool non_disentangled = false;   // fuse projected features directly
  bool mute_invariant = false;     // zero invariant components at fusion
  bool mute_specific = false;      // zero specific components at fusion
  bool per_modality_recon_decoder = false;

  void validate() const;
  std::size_t output_dim() const;
  std::size_t stats_hidden() const { return stats_width ? stats_width : d_k; }
  std::size_t head_hidden() const { return head_width ? head_width : d_k; }
  std::vector<Modality> active_modalities() const;
  std::size_t active_count() const;
  bool is_active(Modality m) const { return active[index_of(m)]; }
};

struct LinearLayer {
  Variable weight;  // [out x in]
  Variable bias;    // [out]
  bool present() const { return !weight.value.empty(); }
};

// Linear stack with GeLU between layers and a linear output.
struct Mlp {
  std::vector<LinearLayer> layers;
  bool present() const { return !layers.empty(); }
};

enum class StatsNet { InvariantShared, PrivateV, PrivateA, PrivateT };
StatsNet private_stats(Modality m);

enum class CycDirection { FToN, NToF };

struct ModelParams {
  std::array<LinearLayer, 3> proj;      // d_m -> d_k per modality
  LinearLayer shared_enc;               // single parameter set, all modalities
  std::array<LinearLayer, 3> priv_enc;  // per modality
  Mlp stats_inv;                        // scores (Z_cat, S_m) pairs
  std::array<Mlp, 3> stats_priv;        // scores (Z,P) and (G,N) pairs
  std::vector<Mlp> recon_dec;           // one shared, or three per-modality
  std::array<Mlp, 3> cyc_f2n;           // informative (2 d_k) -> noise (d_k)
  std::array<Mlp, 3> cyc_n2f;           // noise (d_k) -> informative (2 d_k)
  LinearLayer fusion;                   // concat -> d_k, plain linear
  Mlp head;                             // d_k -> output
  Mlp noise_head;                       // 3 d_k -> output, behind a GRL

  void for_each(
      const std::function<void(const std::string&, Variable&)>& fn);
  void for_each(
      const std::function<void(const std::string&, const Variable&)>& fn) const;
};

struct ForwardOptions {
  bool with_noise = true;      // sample noise and run the noise branch
  bool with_recon = true;      // decode reconstructions
  bool mute_invariant = false; // zero the invariant components at fusion
  bool mute_specific = false;  // zero the specific components at fusion
};

// Everything one forward pass produces, on a single graph. Handles for
// inactive modalities or skipped branches are left invalid.
struct DisentangledSet {
  std::array<Tensor, 3> features;       // projected inputs, n x d_k
  std::array<Tensor, 3> invariant;      // shared-encoder outputs
  std::array<Tensor, 3> specific;       // private-encoder outputs
  std::array<Tensor, 3> noise_input;    // fresh standard-normal draws
  std::array<Tensor, 3> noise;          // private-encoded noise
  std::array<Tensor, 3> informative;    // invariant ++ specific, n x 2 d_k
  std::array<Tensor, 3> reconstructed;  // decoded features, n x d_k
  Tensor fused;                         // n x d_k
  Tensor prediction;                    // n x output_dim
  Tensor noise_prediction;              // n x output_dim
};

// Fresh i.i.d. standard-normal tensor, detached from the gradient graph.
Tensor sample_noise(Graph& g, std::size_t n, std::size_t d_k, Rng& rng);

class Model {
 public:
  explicit Model(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }
  std::size_t parameter_count() const;
  void zero_grad();

  Tensor project_input(Graph& g, const Tensor& x, Modality m);
  Tensor encode_shared(Graph& g, const Tensor& z);
  Tensor encode_private(Graph& g, const Tensor& x, Modality m);
  Tensor statistics_score(Graph& g, const Tensor& x, const Tensor& y,
                          StatsNet which);
  Tensor decode_recon(Graph& g, const Tensor& inv, const Tensor& spec,
                      const Tensor& noise, Modality m);
  Tensor decode_cyclic(Graph& g, const Tensor& x, CycDirection dir, Modality m);

  // fused = FC(concat of invariant and specific parts); prediction = head.
  std::pair<Tensor, Tensor> fuse_predict(Graph& g,
                                         const std::array<Tensor, 3>& inv,
                                         const std::array<Tensor, 3>& spec,
                                         bool mute_invariant = false,
                                         bool mute_specific = false);

  // The noise head alone, no gradient reversal (used by noise_predict and by
  // the sign-flip verification).
  Tensor noise_head_forward(Graph& g, const Tensor& x);
  Tensor noise_predict(Graph& g, const std::array<Tensor, 3>& noise,
                       double grl_scale);

  DisentangledSet forward_full(Graph& g, const ModalityBatch& batch,
                               Rng& noise_rng, const ForwardOptions& opt = {});

 private:
  Tensor apply_linear(Graph& g, LinearLayer& layer, const Tensor& x);
  Tensor apply_mlp(Graph& g, Mlp& mlp, const Tensor& x);
  Mlp& recon_decoder(Modality m);

  ModelConfig cfg_;
  ModelParams params_;
};

}  // namespace mind
