#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "mind/data.hpp"
#include "mind/io_util.hpp"

using namespace mind;
namespace fs = std::filesystem;

namespace {

SyntheticSpec tiny_spec(std::uint64_t seed = 7) {
  SyntheticSpec spec;
  spec.n_samples = 100;
  spec.shared_dim = 3;
  spec.private_dim = 2;
  spec.feature_dims = {8, 9, 10};
  spec.noise_scale = 0.05;
  spec.seed = seed;
  return spec;
}

fs::path temp_dir() {
  fs::path dir = fs::temp_directory_path() / "mind_data_test";
  fs::create_directories(dir);
  return dir;
}

// least-squares residual of predicting targets from features, plain
// normal-equations solve written independently of the library
double lstsq_relative_residual(const Matrix& x, const Matrix& y) {
  std::size_t n = x.rows, d = x.cols;
  std::vector<std::vector<double>> a(d, std::vector<double>(d, 0.0));
  Matrix xty(d, y.cols);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < d; ++p) {
      for (std::size_t q = 0; q < d; ++q)
        a[p][q] += x.at(i, p) * x.at(i, q);
      for (std::size_t c = 0; c < y.cols; ++c)
        xty.at(p, c) += x.at(i, p) * y.at(i, c);
    }
  // Gaussian elimination with partial pivoting
  Matrix w(d, y.cols);
  for (std::size_t c = 0; c < y.cols; ++c) {
    auto aa = a;
    std::vector<double> b(d);
    for (std::size_t p = 0; p < d; ++p) b[p] = xty.at(p, c);
    for (std::size_t col = 0; col < d; ++col) {
      std::size_t piv = col;
      for (std::size_t r = col + 1; r < d; ++r)
        if (std::abs(aa[r][col]) > std::abs(aa[piv][col])) piv = r;
      std::swap(aa[col], aa[piv]);
      std::swap(b[col], b[piv]);
      for (std::size_t r = col + 1; r < d; ++r) {
        double f = aa[r][col] / aa[col][col];
        for (std::size_t k = col; k < d; ++k) aa[r][k] -= f * aa[col][k];
        b[r] -= f * b[col];
      }
    }
    for (std::size_t r = d; r-- > 0;) {
      double v = b[r];
      for (std::size_t k = r + 1; k < d; ++k) v -= aa[r][k] * w.at(k, c);
      w.at(r, c) = v / aa[r][r];
    }
  }
  double sse = 0, ref = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < y.cols; ++c) {
      double pred = 0;
      for (std::size_t p = 0; p < d; ++p) pred += x.at(i, p) * w.at(p, c);
      double e = y.at(i, c) - pred;
      sse += e * e;
      ref += y.at(i, c) * y.at(i, c);
    }
  return std::sqrt(sse / std::max(ref, 1e-300));
}

}  // namespace

TEST_CASE("synthetic generation is deterministic and well-shaped") {
  SyntheticSpec spec = tiny_spec();
  Dataset a = generate_synthetic(spec);
  Dataset b = generate_synthetic(spec);
  for (Modality m : kModalities)
    CHECK(a.features[index_of(m)].data == b.features[index_of(m)].data);
  CHECK(a.scores == b.scores);
  CHECK(a.splits == b.splits);
  CHECK(a.provenance == b.provenance);

  CHECK(a.n_samples() == 100);
  CHECK(a.features[0].cols == 8);
  CHECK(a.features[1].cols == 9);
  CHECK(a.features[2].cols == 10);
  CHECK(a.scores.size() == 100);
  CHECK(a.factors.has_value());

  // 70/10/20 split carve
  CHECK(a.split_indices(Split::Train).size() == 70);
  CHECK(a.split_indices(Split::Valid).size() == 10);
  CHECK(a.split_indices(Split::Test).size() == 20);

  Dataset c = generate_synthetic(tiny_spec(8));
  CHECK(a.features[0].data != c.features[0].data);
}

TEST_CASE("noise-free features lie in the factor span") {
  SyntheticSpec spec = tiny_spec();
  spec.noise_scale = 0.0;
  Dataset ds = generate_synthetic(spec);
  const FactorSet& f = *ds.factors;
  for (Modality m : kModalities) {
    std::size_t mi = index_of(m);
    std::size_t n = ds.n_samples();
    Matrix coords(n, spec.shared_dim + spec.private_dim);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < spec.shared_dim; ++j)
        coords.at(i, j) = f.shared.at(i, j);
      for (std::size_t j = 0; j < spec.private_dim; ++j)
        coords.at(i, spec.shared_dim + j) = f.private_[mi].at(i, j);
    }
    CHECK(lstsq_relative_residual(coords, ds.features[mi]) <= 1e-10);
  }
}

TEST_CASE("synthetic spec invariants are enforced") {
  SyntheticSpec spec = tiny_spec();
  spec.shared_dim = 6;
  spec.private_dim = 4;  // 10 > d_V = 8
  CHECK_THROWS_WITH_AS(generate_synthetic(spec),
                       doctest::Contains("identifiability"), ConfigError);

  SyntheticSpec neg = tiny_spec();
  neg.noise_scale = -0.1;
  CHECK_THROWS_AS(generate_synthetic(neg), ConfigError);
}

TEST_CASE("binary synthetic labels are the score sign") {
  SyntheticSpec spec = tiny_spec();
  spec.task = TaskKind::Classification;
  spec.class_count = 2;
  Dataset ds = generate_synthetic(spec);
  CHECK(ds.classes.size() == 100);
  CHECK(ds.scores.empty());
  std::set<std::uint32_t> seen(ds.classes.begin(), ds.classes.end());
  CHECK(seen == std::set<std::uint32_t>{0, 1});
}

TEST_CASE("quantile-binned classes are roughly balanced") {
  SyntheticSpec spec = tiny_spec();
  spec.n_samples = 400;
  spec.task = TaskKind::Classification;
  spec.class_count = 4;
  Dataset ds = generate_synthetic(spec);
  std::array<std::size_t, 4> counts{};
  for (auto c : ds.classes) counts[c]++;
  for (std::size_t c = 0; c < 4; ++c) CHECK(counts[c] >= 80);
}

TEST_CASE("MINDF round trip is bitwise") {
  fs::path dir = temp_dir();
  Dataset ds = generate_synthetic(tiny_spec());
  std::string path = (dir / "ds.mndf").string();
  write_features(ds, path);
  write_features(ds, (dir / "ds2.mndf").string());
  CHECK(io::read_file(path) == io::read_file((dir / "ds2.mndf").string()));

  Dataset back = load_features(path);
  for (Modality m : kModalities)
    CHECK(back.features[index_of(m)].data == ds.features[index_of(m)].data);
  CHECK(back.scores == ds.scores);
  CHECK(back.splits == ds.splits);
  CHECK(back.task == ds.task);
  CHECK(!back.factors.has_value());  // factors live only in memory
}

TEST_CASE("MINDF loader failure modes are distinct diagnostics") {
  fs::path dir = temp_dir();
  Dataset ds = generate_synthetic(tiny_spec());
  std::string path = (dir / "base.mndf").string();
  write_features(ds, path);
  std::string raw = io::read_file(path);

  io::write_file((dir / "trunc.mndf").string(), raw.substr(0, raw.size() - 40));
  CHECK_THROWS_WITH_AS(load_features((dir / "trunc.mndf").string()),
                       doctest::Contains("truncated"), FormatError);

  std::string bad = raw;
  bad[1] = 'X';
  io::write_file((dir / "badmagic.mndf").string(), bad);
  CHECK_THROWS_WITH_AS(load_features((dir / "badmagic.mndf").string()),
                       doctest::Contains("magic"), FormatError);

  io::write_file((dir / "extra.mndf").string(), raw + "zzzz");
  CHECK_THROWS_WITH_AS(load_features((dir / "extra.mndf").string()),
                       doctest::Contains("dimension disagreement"),
                       FormatError);

  // patch a feature to NaN: header is 4+4+4+12+1+4 = 29 bytes
  std::string nan_raw = raw;
  std::uint64_t nan_bits = 0x7ff8000000000000ULL;
  for (int i = 0; i < 8; ++i)
    nan_raw[29 + i] = static_cast<char>((nan_bits >> (8 * i)) & 0xff);
  io::write_file((dir / "nan.mndf").string(), nan_raw);
  CHECK_THROWS_WITH_AS(load_features((dir / "nan.mndf").string()),
                       doctest::Contains("non-finite"), FormatError);
}

TEST_CASE("CSV and binary loaders agree to 64-bit exactness") {
  fs::path dir = temp_dir() / "csv_fixture";
  Dataset ds = generate_synthetic(tiny_spec(15));
  write_features_csv(ds, dir.string());
  std::string bin_path = (temp_dir() / "fixture.mndf").string();
  write_features(ds, bin_path);

  Dataset from_csv = load_features(dir.string());
  Dataset from_bin = load_features(bin_path);
  for (Modality m : kModalities)
    CHECK(from_csv.features[index_of(m)].data ==
          from_bin.features[index_of(m)].data);
  CHECK(from_csv.scores == from_bin.scores);
  CHECK(from_csv.splits == from_bin.splits);
}

TEST_CASE("a 100-sample split yields 3 train batches and 4 eval batches") {
  SyntheticSpec spec = tiny_spec();
  spec.n_samples = 143;  // 70% carve -> train split of exactly 100
  Dataset ds = generate_synthetic(spec);
  REQUIRE(ds.split_indices(Split::Train).size() == 100);
  Rng rng(1);
  auto train_b = make_batches(ds, Split::Train, 32, BatchMode::Train, &rng);
  CHECK(train_b.size() == 3);
  for (const auto& b : train_b) CHECK(b.size() == 32);
  auto eval_b = make_batches(ds, Split::Train, 32, BatchMode::Eval, nullptr);
  CHECK(eval_b.size() == 4);
  std::size_t covered = 0;
  for (const auto& b : eval_b) covered += b.size();
  CHECK(covered == 100);
}

TEST_CASE("train batches drop the short tail, eval batches keep it") {
  SyntheticSpec spec = tiny_spec();
  Dataset ds = generate_synthetic(spec);
  // train split has 70 rows; with batch 32 that is 2 full batches
  Rng rng(3);
  auto train_batches = make_batches(ds, Split::Train, 32, BatchMode::Train, &rng);
  CHECK(train_batches.size() == 2);
  for (const auto& b : train_batches) CHECK(b.size() == 32);

  auto eval_batches =
      make_batches(ds, Split::Train, 32, BatchMode::Eval, nullptr);
  CHECK(eval_batches.size() == 3);
  std::set<std::size_t> seen;
  std::size_t total = 0;
  for (const auto& b : eval_batches) {
    total += b.size();
    seen.insert(b.indices.begin(), b.indices.end());
  }
  CHECK(total == 70);
  CHECK(seen.size() == 70);  // every sample exactly once

  Rng r1(9), r2(9);
  auto b1 = make_batches(ds, Split::Train, 16, BatchMode::Train, &r1);
  auto b2 = make_batches(ds, Split::Train, 16, BatchMode::Train, &r2);
  REQUIRE(b1.size() == b2.size());
  for (std::size_t i = 0; i < b1.size(); ++i)
    CHECK(b1[i].indices == b2[i].indices);

  CHECK_THROWS_AS(make_batches(ds, Split::Train, 1, BatchMode::Train, &rng),
                  BatchSizeError);
}

TEST_CASE("batch features and labels match their source rows") {
  Dataset ds = generate_synthetic(tiny_spec());
  auto batches = make_batches(ds, Split::Valid, 4, BatchMode::Eval, nullptr);
  REQUIRE(!batches.empty());
  const ModalityBatch& b = batches[0];
  for (std::size_t i = 0; i < b.size(); ++i) {
    std::size_t src = b.indices[i];
    CHECK(b.scores[i] == ds.scores[src]);
    for (Modality m : kModalities) {
      const Matrix& x = ds.features[index_of(m)];
      const Matrix& bx = b.features[index_of(m)];
      for (std::size_t j = 0; j < x.cols; ++j)
        CHECK(bx.at(i, j) == x.at(src, j));
    }
  }
}

TEST_CASE("seven-class binning rounds half away from zero and clamps") {
  CHECK(label_to_class7(2.6) == 6);
  CHECK(label_to_class7(-3.4) == 0);
  CHECK(label_to_class7(0.0) == 3);
  CHECK(label_to_class7(0.5) == 4);
  CHECK(label_to_class7(-0.5) == 2);
  CHECK(label_to_class7(7.0) == 6);
  CHECK(label_to_class7(-7.0) == 0);

  Rng rng(21);
  for (int i = 0; i < 200; ++i) {
    double a = rng.uniform(-4.0, 4.0);
    double b = rng.uniform(-4.0, 4.0);
    if (a > b) std::swap(a, b);
    CHECK(label_to_class7(a) <= label_to_class7(b));  // monotone
  }
}

TEST_CASE("dataset validation rejects inconsistent shapes") {
  Dataset ds = generate_synthetic(tiny_spec());
  ds.features[1] = Matrix(50, 9);  // wrong row count
  CHECK_THROWS_WITH_AS(ds.validate(), doctest::Contains("mismatch"),
                       FormatError);
}
