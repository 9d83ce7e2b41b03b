#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "mind/checkpoint.hpp"
#include "mind/io_util.hpp"
#include "mind/networks.hpp"
#include "mind/rng.hpp"

using namespace mind;

namespace {

ModelConfig small_config(std::uint64_t seed = 1) {
  ModelConfig cfg;
  cfg.d_k = 8;
  cfg.input_dims = {5, 6, 7};
  cfg.seed = seed;
  return cfg;
}

ModalityBatch random_batch(const ModelConfig& cfg, std::size_t n,
                           std::uint64_t seed) {
  Rng rng(seed);
  ModalityBatch b;
  for (Modality m : kModalities) {
    std::size_t d = cfg.input_dims[index_of(m)];
    b.features[index_of(m)] = Matrix(n, d, rng.normal_vec(n * d));
  }
  b.scores = rng.normal_vec(n);
  b.indices.resize(n);
  for (std::size_t i = 0; i < n; ++i) b.indices[i] = i;
  return b;
}

}  // namespace

TEST_CASE("project_input shape contract and width validation") {
  ModelConfig cfg;
  cfg.d_k = 64;
  cfg.input_dims = {47, 74, 768};
  cfg.seed = 3;
  Model model(cfg);
  Graph g;
  Rng rng(1);
  Tensor x = g.constant({4, 47}, rng.normal_vec(4 * 47));
  Tensor z = model.project_input(g, x, Modality::Visual);
  CHECK(z.shape() == Shape{4, 64});

  Tensor wrong = g.constant({4, 46}, rng.normal_vec(4 * 46));
  CHECK_THROWS_AS(model.project_input(g, wrong, Modality::Visual), ConfigError);
}

TEST_CASE("project_input with identity weights is the identity") {
  ModelConfig cfg = small_config();
  cfg.input_dims = {8, 8, 8};  // d_m == d_k
  Model model(cfg);
  LinearLayer& proj = model.params().proj[0];
  std::fill(proj.weight.value.begin(), proj.weight.value.end(), 0.0);
  for (std::size_t i = 0; i < 8; ++i) proj.weight.value[i * 8 + i] = 1.0;
  std::fill(proj.bias.value.begin(), proj.bias.value.end(), 0.0);

  Rng rng(2);
  std::vector<double> data = rng.normal_vec(3 * 8);
  Graph g;
  Tensor x = g.constant({3, 8}, data);
  CHECK(model.project_input(g, x, Modality::Visual).value() == data);
}

TEST_CASE("projection weights receive gradient") {
  ModelConfig cfg = small_config();
  Model model(cfg);
  model.zero_grad();
  Graph g;
  Rng rng(4);
  Tensor x = g.constant({3, 5}, rng.normal_vec(15));
  Tensor z = model.project_input(g, x, Modality::Visual);
  g.backward(sum(z));
  double mass = 0;
  for (double v : model.params().proj[0].weight.grad) mass += std::abs(v);
  CHECK(mass > 0);
}

TEST_CASE("shared encoder uses one parameter set across modalities") {
  ModelConfig cfg = small_config();
  Model model(cfg);
  Rng rng(5);
  std::vector<double> zv = rng.normal_vec(3 * 8);
  std::vector<double> za = rng.normal_vec(3 * 8);

  auto outputs = [&]() {
    Graph g;
    Tensor sv = model.encode_shared(g, g.constant({3, 8}, zv));
    Tensor sa = model.encode_shared(g, g.constant({3, 8}, za));
    return std::make_pair(sv.value(), sa.value());
  };
  auto [sv0, sa0] = outputs();
  model.params().shared_enc.weight.value[5] += 0.25;
  auto [sv1, sa1] = outputs();
  CHECK(sv0 != sv1);
  CHECK(sa0 != sa1);

  // the shared encoder appears exactly once in the registry
  std::size_t shared_groups = 0;
  model.params().for_each([&](const std::string& name, const Variable&) {
    if (name.rfind("shared_enc", 0) == 0) ++shared_groups;
  });
  CHECK(shared_groups == 2);  // weight + bias
}

TEST_CASE("shared encoder maps zero to zero with zero bias") {
  ModelConfig cfg = small_config();
  Model model(cfg);
  std::fill(model.params().shared_enc.bias.value.begin(),
            model.params().shared_enc.bias.value.end(), 0.0);
  Graph g;
  Tensor z = g.full({4, 8}, 0.0);
  for (double v : model.encode_shared(g, z).value()) CHECK(v == 0.0);
}

TEST_CASE("private encoders are parameter-separated per modality") {
  ModelConfig cfg = small_config();
  Model model(cfg);
  Rng rng(6);
  std::vector<double> x = rng.normal_vec(3 * 8);
  auto encode = [&](Modality m) {
    Graph g;
    return model.encode_private(g, g.constant({3, 8}, x), m).value();
  };
  auto v0 = encode(Modality::Visual);
  auto a0 = encode(Modality::Audio);
  model.params().priv_enc[index_of(Modality::Visual)].weight.value[3] += 0.5;
  CHECK(encode(Modality::Visual) != v0);
  CHECK(encode(Modality::Audio) == a0);
}

TEST_CASE("inactive modality is rejected") {
  ModelConfig cfg = small_config();
  cfg.active = {true, false, true};
  Model model(cfg);
  Graph g;
  Tensor x = g.full({2, 8}, 0.1);
  CHECK_THROWS_AS(model.encode_private(g, x, Modality::Audio), ConfigError);
}

TEST_CASE("sample_noise determinism and moments") {
  Graph g;
  Rng r1(77), r2(77);
  Tensor n1 = sample_noise(g, 4, 8, r1);
  Tensor n2 = sample_noise(g, 4, 8, r2);
  CHECK(n1.value() == n2.value());

  Tensor n3 = sample_noise(g, 4, 8, r1);  // consecutive draws differ
  CHECK(n3.value() != n1.value());

  Rng big(123);
  std::vector<double> draws = big.normal_vec(1'000'000);
  double mean = 0;
  for (double v : draws) mean += v;
  mean /= static_cast<double>(draws.size());
  double var = 0;
  for (double v : draws) var += (v - mean) * (v - mean);
  var /= static_cast<double>(draws.size());
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.01);
}

TEST_CASE("statistics network shape and zero final layer") {
  ModelConfig cfg = small_config();
  Model model(cfg);
  Graph g;
  Rng rng(8);
  Tensor x = g.constant({5, 8}, rng.normal_vec(40));
  Tensor y = g.constant({5, 8}, rng.normal_vec(40));
  Tensor score = model.statistics_score(g, x, y, StatsNet::PrivateT);
  CHECK(score.shape() == Shape{5, 1});

  Mlp& net = model.params().stats_priv[index_of(Modality::Text)];
  LinearLayer& last = net.layers.back();
  std::fill(last.weight.value.begin(), last.weight.value.end(), 0.0);
  std::fill(last.bias.value.begin(), last.bias.value.end(), 0.0);
  Graph g2;
  Tensor score0 = model.statistics_score(g2, g2.constant({5, 8}, x.value()),
                                         g2.constant({5, 8}, y.value()),
                                         StatsNet::PrivateT);
  for (double v : score0.value()) CHECK(v == 0.0);

  Tensor short_y = g.constant({4, 8}, rng.normal_vec(32));
  CHECK_THROWS_AS(model.statistics_score(g, x, short_y, StatsNet::PrivateT),
                  ShapeError);
}

TEST_CASE("recon decoder shape and row equivariance") {
  ModelConfig cfg = small_config();
  Model model(cfg);
  Rng rng(9);
  std::vector<double> s = rng.normal_vec(4 * 8);
  std::vector<double> p = rng.normal_vec(4 * 8);
  std::vector<double> n = rng.normal_vec(4 * 8);
  auto decode = [&](const std::vector<double>& sv, const std::vector<double>& pv,
                    const std::vector<double>& nv) {
    Graph g;
    return model
        .decode_recon(g, g.constant({4, 8}, sv), g.constant({4, 8}, pv),
                      g.constant({4, 8}, nv), Modality::Visual)
        .value();
  };
  auto base = decode(s, p, n);
  CHECK(base.size() == 4 * 8);

  // swap rows 0 and 2 in every input; output rows swap identically
  auto swap_rows = [](std::vector<double> v) {
    for (std::size_t j = 0; j < 8; ++j) std::swap(v[j], v[2 * 8 + j]);
    return v;
  };
  auto swapped = decode(swap_rows(s), swap_rows(p), swap_rows(n));
  CHECK(swapped == swap_rows(base));
}

TEST_CASE("cyclic decoders: shapes and per-modality separation") {
  ModelConfig cfg = small_config();
  Model model(cfg);
  Graph g;
  Rng rng(10);
  Tensor informative = g.constant({3, 16}, rng.normal_vec(48));
  Tensor noise = g.constant({3, 8}, rng.normal_vec(24));

  Tensor to_noise =
      model.decode_cyclic(g, informative, CycDirection::FToN, Modality::Audio);
  CHECK(to_noise.shape() == Shape{3, 8});
  Tensor to_info =
      model.decode_cyclic(g, noise, CycDirection::NToF, Modality::Audio);
  CHECK(to_info.shape() == Shape{3, 16});

  CHECK_THROWS_AS(
      model.decode_cyclic(g, noise, CycDirection::FToN, Modality::Audio),
      ShapeError);

  auto decode_v = [&](Modality m) {
    Graph g2;
    return model
        .decode_cyclic(g2, g2.constant({3, 8}, noise.value()),
                       CycDirection::NToF, m)
        .value();
  };
  auto visual0 = decode_v(Modality::Visual);
  auto audio0 = decode_v(Modality::Audio);
  model.params().cyc_n2f[index_of(Modality::Visual)].layers[0].weight.value[0] +=
      0.7;
  CHECK(decode_v(Modality::Visual) != visual0);
  CHECK(decode_v(Modality::Audio) == audio0);
}

TEST_CASE("prediction is independent of the noise branch") {
  ModelConfig cfg = small_config();
  Model model(cfg);
  ModalityBatch batch = random_batch(cfg, 6, 21);

  auto predict_with_noise_seed = [&](std::uint64_t seed) {
    Graph g;
    Rng noise(seed);
    DisentangledSet fwd = model.forward_full(g, batch, noise, {});
    return fwd.prediction.value();
  };
  auto p1 = predict_with_noise_seed(100);
  auto p2 = predict_with_noise_seed(200);  // different noise draws
  CHECK(p1 == p2);
  CHECK(p1.size() == 6);
}

TEST_CASE("muting components zeroes them at the fusion input") {
  ModelConfig cfg = small_config();
  Model model(cfg);
  ModalityBatch batch = random_batch(cfg, 5, 22);
  Rng noise(0);

  Graph g;
  ForwardOptions mute;
  mute.with_noise = false;
  mute.mute_invariant = true;
  DisentangledSet muted = model.forward_full(g, batch, noise, mute);

  Graph g2;
  ForwardOptions plain;
  plain.with_noise = false;
  DisentangledSet full = model.forward_full(g2, batch, noise, plain);
  CHECK(muted.prediction.value() != full.prediction.value());

  // with the invariant path muted, perturbing the shared encoder is inert
  model.params().shared_enc.weight.value[0] += 1.0;
  Graph g3;
  DisentangledSet muted2 = model.forward_full(g3, batch, noise, mute);
  CHECK(muted2.prediction.value() == muted.prediction.value());
}

TEST_CASE("noise_predict forward ignores the reversal layer") {
  ModelConfig cfg = small_config();
  Model model(cfg);
  ModalityBatch batch = random_batch(cfg, 4, 23);
  Graph g;
  Rng noise(3);
  DisentangledSet fwd = model.forward_full(g, batch, noise, {});
  std::vector<Tensor> parts;
  for (Modality m : cfg.active_modalities())
    parts.push_back(fwd.noise[index_of(m)]);
  Tensor direct = model.noise_head_forward(
      g, concat_cols(std::span<const Tensor>(parts)));
  CHECK(fwd.noise_prediction.value() == direct.value());
  CHECK(fwd.noise_prediction.shape() == Shape{4, 1});
}

TEST_CASE("forward_full shapes, determinism, and gradient coverage") {
  ModelConfig cfg = small_config(77);
  Model model(cfg);
  ModalityBatch batch = random_batch(cfg, 6, 24);

  Graph g;
  Rng noise(55);
  DisentangledSet fwd = model.forward_full(g, batch, noise, {});
  for (Modality m : kModalities) {
    std::size_t mi = index_of(m);
    CHECK(fwd.features[mi].shape() == Shape{6, 8});
    CHECK(fwd.invariant[mi].shape() == Shape{6, 8});
    CHECK(fwd.specific[mi].shape() == Shape{6, 8});
    CHECK(fwd.noise_input[mi].shape() == Shape{6, 8});
    CHECK(fwd.noise[mi].shape() == Shape{6, 8});
    CHECK(fwd.informative[mi].shape() == Shape{6, 16});
    CHECK(fwd.reconstructed[mi].shape() == Shape{6, 8});
  }
  CHECK(fwd.fused.shape() == Shape{6, 8});
  CHECK(fwd.prediction.shape() == Shape{6, 1});
  CHECK(fwd.noise_prediction.shape() == Shape{6, 1});

  Graph g2;
  Rng noise2(55);
  DisentangledSet fwd2 = model.forward_full(g2, batch, noise2, {});
  CHECK(fwd.prediction.value() == fwd2.prediction.value());
  CHECK(fwd.reconstructed[0].value() == fwd2.reconstructed[0].value());

  // a loss touching every branch populates every parameter group
  model.zero_grad();
  Tensor loss = add(sum(fwd.prediction), sum(fwd.noise_prediction));
  for (Modality m : kModalities)
    loss = add(loss, sum(fwd.reconstructed[index_of(m)]));
  Tensor feat_cat =
      concat_cols({fwd.features[0], fwd.features[1], fwd.features[2]});
  loss = add(loss, sum(model.statistics_score(g, feat_cat, fwd.invariant[0],
                                              StatsNet::InvariantShared)));
  for (Modality m : kModalities) {
    loss = add(loss, sum(model.statistics_score(
                        g, fwd.features[index_of(m)],
                        fwd.specific[index_of(m)], private_stats(m))));
    loss = add(loss, sum(model.decode_cyclic(g, fwd.noise[index_of(m)],
                                             CycDirection::NToF, m)));
    loss = add(loss, sum(model.decode_cyclic(g, fwd.informative[index_of(m)],
                                             CycDirection::FToN, m)));
  }
  g.backward(loss);
  model.params().for_each([&](const std::string& name, const Variable& v) {
    double mass = 0;
    for (double x : v.grad) mass += std::abs(x);
    INFO("group ", name);
    CHECK(mass > 0);
  });
}

TEST_CASE("parameter count is a pure function of the config") {
  ModelConfig a = small_config(1);
  ModelConfig b = small_config(999);
  CHECK(Model(a).parameter_count() == Model(b).parameter_count());
  CHECK(Model(a).parameter_count() > 0);

  ModelConfig dropped = small_config(1);
  dropped.active = {true, true, false};
  CHECK(Model(dropped).parameter_count() < Model(a).parameter_count());
}

TEST_CASE("row permutation equivariance of the full forward") {
  ModelConfig cfg = small_config();
  Model model(cfg);
  ModalityBatch batch = random_batch(cfg, 5, 31);
  ModalityBatch swapped = batch;
  for (Modality m : kModalities) {
    Matrix& x = swapped.features[index_of(m)];
    for (std::size_t j = 0; j < x.cols; ++j) std::swap(x.at(0, j), x.at(3, j));
  }
  std::swap(swapped.scores[0], swapped.scores[3]);

  Rng noise(1);
  Graph g;
  ForwardOptions opt;
  opt.with_noise = false;
  auto base = model.forward_full(g, batch, noise, opt).prediction.value();
  Graph g2;
  auto perm = model.forward_full(g2, swapped, noise, opt).prediction.value();
  CHECK(perm[0] == base[3]);
  CHECK(perm[3] == base[0]);
  CHECK(perm[1] == base[1]);
}

TEST_CASE("non-disentangled variant predicts straight from projections") {
  ModelConfig cfg = small_config();
  cfg.non_disentangled = true;
  Model model(cfg);
  ModalityBatch batch = random_batch(cfg, 4, 41);
  Graph g;
  Rng noise(2);
  DisentangledSet fwd = model.forward_full(g, batch, noise, {});
  CHECK(fwd.prediction.shape() == Shape{4, 1});
  CHECK(!fwd.invariant[0].valid());
  CHECK(!fwd.noise[0].valid());
  CHECK(Model(cfg).parameter_count() <
        Model(small_config()).parameter_count());
}

TEST_CASE("checkpoint round trip is bitwise and validates") {
  namespace fs = std::filesystem;
  ModelConfig cfg = small_config(31);
  cfg.task = TaskKind::Classification;
  cfg.class_count = 3;
  cfg.active = {true, false, true};
  cfg.mute_specific = true;
  Model model(cfg);
  fs::path dir = fs::temp_directory_path() / "mind_ckpt_test";
  fs::create_directories(dir);
  std::string path = (dir / "model.mndp").string();
  save_checkpoint(model, path);

  Model back = load_checkpoint(path);
  CHECK(back.config().d_k == cfg.d_k);
  CHECK(back.config().task == TaskKind::Classification);
  CHECK(back.config().class_count == 3);
  CHECK(back.config().active == cfg.active);
  CHECK(back.config().mute_specific);
  CHECK(back.parameter_count() == model.parameter_count());
  std::vector<const Variable*> orig, loaded;
  model.params().for_each(
      [&](const std::string&, const Variable& v) { orig.push_back(&v); });
  back.params().for_each(
      [&](const std::string&, const Variable& v) { loaded.push_back(&v); });
  REQUIRE(orig.size() == loaded.size());
  bool equal = true;
  for (std::size_t i = 0; i < orig.size(); ++i)
    if (orig[i]->value != loaded[i]->value) equal = false;
  CHECK(equal);

  // saving the loaded model reproduces the bytes
  std::string path2 = (dir / "model2.mndp").string();
  save_checkpoint(back, path2);
  CHECK(io::read_file(path) == io::read_file(path2));

  // truncation and magic failures are distinct diagnostics
  std::string raw = io::read_file(path);
  io::write_file((dir / "trunc.mndp").string(), raw.substr(0, raw.size() / 2));
  CHECK_THROWS_WITH_AS(load_checkpoint((dir / "trunc.mndp").string()),
                       doctest::Contains("truncated"), FormatError);
  std::string bad = raw;
  bad[0] = 'X';
  io::write_file((dir / "bad.mndp").string(), bad);
  CHECK_THROWS_WITH_AS(load_checkpoint((dir / "bad.mndp").string()),
                       doctest::Contains("magic"), FormatError);
}
