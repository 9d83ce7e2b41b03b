#include "mind/networks.hpp"

#include <cmath>

namespace mind {

void ModelConfig::validate() const {
  if (d_k < 2) throw ConfigError("model config: d_k must be >= 2");
  for (Modality m : kModalities)
    if (is_active(m) && input_dims[index_of(m)] == 0)
      throw ConfigError(std::string("model config: input dim for ") +
                        modality_name(m) + " must be positive");
  if (task == TaskKind::Classification && class_count < 2)
    throw ConfigError("model config: classification needs class_count >= 2");
  if (active_count() == 0)
    throw ConfigError("model config: at least one modality must be active");
  if (!(grl_scale > 0.0))
    throw ConfigError("model config: grl_scale must be positive");
}

std::size_t ModelConfig::output_dim() const {
  return task == TaskKind::Classification ? class_count : 1;
}

std::vector<Modality> ModelConfig::active_modalities() const {
  std::vector<Modality> out;
  for (Modality m : kModalities)
    if (is_active(m)) out.push_back(m);
  return out;
}

std::size_t ModelConfig::active_count() const {
  return active_modalities().size();
}

StatsNet private_stats(Modality m) {
  switch (m) {
    case Modality::Visual: return StatsNet::PrivateV;
    case Modality::Audio: return StatsNet::PrivateA;
    case Modality::Text: return StatsNet::PrivateT;
  }
  throw ConfigError("unknown modality");
}

// ---- parameter registry ------------------------------------------------------

namespace {

template <typename Layer, typename Fn>
void visit_linear(const std::string& name, Layer& layer, Fn&& fn) {
  if (!layer.present()) return;
  fn(name + ".w", layer.weight);
  fn(name + ".b", layer.bias);
}

template <typename M, typename Fn>
void visit_mlp(const std::string& name, M& mlp, Fn&& fn) {
  for (std::size_t i = 0; i < mlp.layers.size(); ++i)
    visit_linear(name + "." + std::to_string(i), mlp.layers[i], fn);
}

template <typename P, typename Fn>
void visit_params(P& p, Fn&& fn) {
  for (Modality m : kModalities)
    visit_linear(std::string("proj_") + modality_tag(m), p.proj[index_of(m)],
                 fn);
  visit_linear("shared_enc", p.shared_enc, fn);
  for (Modality m : kModalities)
    visit_linear(std::string("priv_enc_") + modality_tag(m),
                 p.priv_enc[index_of(m)], fn);
  visit_mlp("stats_inv", p.stats_inv, fn);
  for (Modality m : kModalities)
    visit_mlp(std::string("stats_priv_") + modality_tag(m),
              p.stats_priv[index_of(m)], fn);
  for (std::size_t i = 0; i < p.recon_dec.size(); ++i)
    visit_mlp(p.recon_dec.size() == 1 ? std::string("recon_dec")
                                      : "recon_dec_" + std::string(modality_tag(
                                            static_cast<Modality>(i))),
              p.recon_dec[i], fn);
  for (Modality m : kModalities) {
    visit_mlp(std::string("cyc_f2n_") + modality_tag(m),
              p.cyc_f2n[index_of(m)], fn);
    visit_mlp(std::string("cyc_n2f_") + modality_tag(m),
              p.cyc_n2f[index_of(m)], fn);
  }
  visit_linear("fusion", p.fusion, fn);
  visit_mlp("head", p.head, fn);
  visit_mlp("noise_head", p.noise_head, fn);
}

}  // namespace

void ModelParams::for_each(
    const std::function<void(const std::string&, Variable&)>& fn) {
  visit_params(*this, fn);
}

void ModelParams::for_each(
    const std::function<void(const std::string&, const Variable&)>& fn) const {
  visit_params(*this, fn);
}

// ---- initialization ----------------------------------------------------------

namespace {

LinearLayer make_linear(std::size_t out, std::size_t in, Rng& rng) {
  // uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero
  double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  std::vector<double> w(out * in);
  for (double& v : w) v = rng.uniform(-bound, bound);
  LinearLayer l;
  l.weight = Variable({out, in}, std::move(w));
  l.bias = Variable::zeros({out});
  return l;
}

Mlp make_mlp(std::size_t in, std::size_t hidden, std::size_t depth,
             std::size_t out, Rng& rng) {
  Mlp mlp;
  std::size_t cur = in;
  for (std::size_t i = 0; i < depth; ++i) {
    mlp.layers.push_back(make_linear(hidden, cur, rng));
    cur = hidden;
  }
  mlp.layers.push_back(make_linear(out, cur, rng));
  return mlp;
}

}  // namespace

Model::Model(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(derive_seed(cfg_.seed, "init"));
  std::size_t dk = cfg_.d_k;
  std::size_t n_active = cfg_.active_count();

  for (Modality m : kModalities)
    if (cfg_.is_active(m))
      params_.proj[index_of(m)] =
          make_linear(dk, cfg_.input_dims[index_of(m)], rng);

  if (!cfg_.non_disentangled) {
    params_.shared_enc = make_linear(dk, dk, rng);
    for (Modality m : kModalities)
      if (cfg_.is_active(m)) params_.priv_enc[index_of(m)] = make_linear(dk, dk, rng);

    std::size_t sh = cfg_.stats_hidden();
    params_.stats_inv =
        make_mlp(n_active * dk + dk, sh, cfg_.stats_depth, 1, rng);
    for (Modality m : kModalities)
      if (cfg_.is_active(m))
        params_.stats_priv[index_of(m)] =
            make_mlp(dk + dk, sh, cfg_.stats_depth, 1, rng);

    std::size_t n_dec = cfg_.per_modality_recon_decoder ? 3 : 1;
    for (std::size_t i = 0; i < n_dec; ++i) {
      if (cfg_.per_modality_recon_decoder && !cfg_.active[i]) {
        params_.recon_dec.emplace_back();
        continue;
      }
      params_.recon_dec.push_back(make_mlp(3 * dk, dk, 1, dk, rng));
    }
    for (Modality m : kModalities) {
      if (!cfg_.is_active(m)) continue;
      params_.cyc_f2n[index_of(m)] = make_mlp(2 * dk, dk, 1, dk, rng);
      params_.cyc_n2f[index_of(m)] = make_mlp(dk, dk, 1, 2 * dk, rng);
    }
  }

  std::size_t fusion_in =
      cfg_.non_disentangled ? n_active * dk : 2 * n_active * dk;
  params_.fusion = make_linear(dk, fusion_in, rng);
  params_.head =
      make_mlp(dk, cfg_.head_hidden(), cfg_.head_depth, cfg_.output_dim(), rng);
  if (!cfg_.non_disentangled)
    params_.noise_head = make_mlp(n_active * dk, cfg_.head_hidden(),
                                  cfg_.head_depth, cfg_.output_dim(), rng);
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  params_.for_each(
      [&](const std::string&, const Variable& v) { n += v.size(); });
  return n;
}

void Model::zero_grad() {
  params_.for_each([](const std::string&, Variable& v) { v.zero_grad(); });
}

// ---- forward ops -------------------------------------------------------------

Tensor Model::apply_linear(Graph& g, LinearLayer& layer, const Tensor& x) {
  Tensor w = g.leaf(layer.weight);
  Tensor b = g.leaf(layer.bias);
  return add_row_bias(matmul(x, transpose(w)), b);
}

Tensor Model::apply_mlp(Graph& g, Mlp& mlp, const Tensor& x) {
  Tensor cur = x;
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    cur = apply_linear(g, mlp.layers[i], cur);
    if (i + 1 < mlp.layers.size()) cur = gelu(cur);
  }
  return cur;
}

Mlp& Model::recon_decoder(Modality m) {
  if (cfg_.per_modality_recon_decoder) return params_.recon_dec[index_of(m)];
  return params_.recon_dec[0];
}

Tensor Model::project_input(Graph& g, const Tensor& x, Modality m) {
  if (!cfg_.is_active(m))
    throw ConfigError(std::string("modality ") + modality_name(m) +
                      " is not active in this model");
  if (x.cols() != cfg_.input_dims[index_of(m)])
    throw ConfigError(std::string("input width ") + std::to_string(x.cols()) +
                      " does not match configured " +
                      std::to_string(cfg_.input_dims[index_of(m)]) + " for " +
                      modality_name(m));
  return apply_linear(g, params_.proj[index_of(m)], x);
}

Tensor Model::encode_shared(Graph& g, const Tensor& z) {
  if (z.cols() != cfg_.d_k)
    throw ShapeError("encode_shared: width " + std::to_string(z.cols()) +
                     " != d_k " + std::to_string(cfg_.d_k));
  return gelu(apply_linear(g, params_.shared_enc, z));
}

Tensor Model::encode_private(Graph& g, const Tensor& x, Modality m) {
  if (!cfg_.is_active(m))
    throw ConfigError(std::string("modality ") + modality_name(m) +
                      " is not active in this model");
  if (x.cols() != cfg_.d_k)
    throw ShapeError("encode_private: width " + std::to_string(x.cols()) +
                     " != d_k " + std::to_string(cfg_.d_k));
  return gelu(apply_linear(g, params_.priv_enc[index_of(m)], x));
}

Tensor Model::statistics_score(Graph& g, const Tensor& x, const Tensor& y,
                               StatsNet which) {
  if (x.rows() != y.rows())
    throw ShapeError("statistics_score: row counts disagree, " +
                     shape_str(x.shape()) + " vs " + shape_str(y.shape()));
  Mlp& net = which == StatsNet::InvariantShared
                 ? params_.stats_inv
                 : params_.stats_priv[static_cast<std::size_t>(which) - 1];
  Tensor joint = concat_cols({x, y});
  return apply_mlp(g, net, joint);
}

Tensor Model::decode_recon(Graph& g, const Tensor& inv, const Tensor& spec,
                           const Tensor& noise, Modality m) {
  Tensor cat = concat_cols({inv, spec, noise});
  return apply_mlp(g, recon_decoder(m), cat);
}

Tensor Model::decode_cyclic(Graph& g, const Tensor& x, CycDirection dir,
                            Modality m) {
  if (!cfg_.is_active(m))
    throw ConfigError(std::string("modality ") + modality_name(m) +
                      " is not active in this model");
  std::size_t dk = cfg_.d_k;
  if (dir == CycDirection::FToN) {
    if (x.cols() != 2 * dk)
      throw ShapeError("decode_cyclic F->N expects width " +
                       std::to_string(2 * dk) + ", got " +
                       std::to_string(x.cols()));
    return apply_mlp(g, params_.cyc_f2n[index_of(m)], x);
  }
  if (x.cols() != dk)
    throw ShapeError("decode_cyclic N->F expects width " + std::to_string(dk) +
                     ", got " + std::to_string(x.cols()));
  return apply_mlp(g, params_.cyc_n2f[index_of(m)], x);
}

std::pair<Tensor, Tensor> Model::fuse_predict(Graph& g,
                                              const std::array<Tensor, 3>& inv,
                                              const std::array<Tensor, 3>& spec,
                                              bool mute_invariant,
                                              bool mute_specific) {
  std::vector<Tensor> parts;
  for (Modality m : cfg_.active_modalities()) {
    Tensor s = inv[index_of(m)];
    parts.push_back(mute_invariant ? scalar_mul(s, 0.0) : s);
  }
  for (Modality m : cfg_.active_modalities()) {
    Tensor p = spec[index_of(m)];
    parts.push_back(mute_specific ? scalar_mul(p, 0.0) : p);
  }
  Tensor fused = apply_linear(g, params_.fusion,
                              concat_cols(std::span<const Tensor>(parts)));
  Tensor pred = apply_mlp(g, params_.head, fused);
  return {fused, pred};
}

Tensor Model::noise_head_forward(Graph& g, const Tensor& x) {
  return apply_mlp(g, params_.noise_head, x);
}

Tensor Model::noise_predict(Graph& g, const std::array<Tensor, 3>& noise,
                            double grl_scale) {
  std::vector<Tensor> parts;
  for (Modality m : cfg_.active_modalities())
    parts.push_back(noise[index_of(m)]);
  Tensor cat = concat_cols(std::span<const Tensor>(parts));
  return noise_head_forward(g, grad_reverse(cat, grl_scale));
}

Tensor sample_noise(Graph& g, std::size_t n, std::size_t d_k, Rng& rng) {
  if (n == 0 || d_k == 0)
    throw ShapeError("sample_noise: dimensions must be positive");
  return g.constant({n, d_k}, rng.normal_vec(n * d_k));
}

DisentangledSet Model::forward_full(Graph& g, const ModalityBatch& batch,
                                    Rng& noise_rng, const ForwardOptions& opt) {
  DisentangledSet out;
  std::size_t n = batch.size();
  for (Modality m : cfg_.active_modalities()) {
    std::size_t mi = index_of(m);
    const Matrix& x = batch.features[mi];
    if (x.rows != n)
      throw ShapeError("batch features row count mismatch for " +
                       std::string(modality_name(m)));
    Tensor xt = g.constant({x.rows, x.cols}, x.data);
    out.features[mi] = project_input(g, xt, m);
  }

  if (cfg_.non_disentangled) {
    std::vector<Tensor> parts;
    for (Modality m : cfg_.active_modalities())
      parts.push_back(out.features[index_of(m)]);
    out.fused = apply_linear(g, params_.fusion,
                             concat_cols(std::span<const Tensor>(parts)));
    out.prediction = apply_mlp(g, params_.head, out.fused);
    return out;
  }

  for (Modality m : cfg_.active_modalities()) {
    std::size_t mi = index_of(m);
    out.invariant[mi] = encode_shared(g, out.features[mi]);
    out.specific[mi] = encode_private(g, out.features[mi], m);
    out.informative[mi] = concat_cols({out.invariant[mi], out.specific[mi]});
  }

  if (opt.with_noise) {
    for (Modality m : cfg_.active_modalities()) {
      std::size_t mi = index_of(m);
      out.noise_input[mi] = sample_noise(g, n, cfg_.d_k, noise_rng);
      out.noise[mi] = encode_private(g, out.noise_input[mi], m);
    }
    if (opt.with_recon)
      for (Modality m : cfg_.active_modalities()) {
        std::size_t mi = index_of(m);
        out.reconstructed[mi] = decode_recon(g, out.invariant[mi],
                                             out.specific[mi], out.noise[mi], m);
      }
    out.noise_prediction = noise_predict(g, out.noise, cfg_.grl_scale);
  }

  auto [fused, pred] =
      fuse_predict(g, out.invariant, out.specific,
                   cfg_.mute_invariant || opt.mute_invariant,
                   cfg_.mute_specific || opt.mute_specific);
  out.fused = fused;
  out.prediction = pred;
  return out;
}

}  // namespace mind
