#include "mind/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "mind/io_util.hpp"

namespace mind {

namespace {

constexpr char kMagic[4] = {'M', 'N', 'D', 'F'};
constexpr std::uint32_t kVersion = 1;

void check_finite(const Matrix& m, const char* name) {
  for (double v : m.data)
    if (!std::isfinite(v))
      throw FormatError(std::string("non-finite feature value in ") + name);
}

}  // namespace

std::vector<std::size_t> Dataset::split_indices(Split s) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < splits.size(); ++i)
    if (splits[i] == static_cast<std::uint8_t>(s)) idx.push_back(i);
  return idx;
}

void Dataset::validate() const {
  std::size_t n = n_samples();
  for (Modality m : kModalities) {
    const Matrix& x = features[index_of(m)];
    if (x.rows != n)
      throw FormatError(std::string("sample count mismatch: ") +
                        modality_name(m) + " has " + std::to_string(x.rows) +
                        " rows, expected " + std::to_string(n));
    check_finite(x, modality_name(m));
  }
  if (task == TaskKind::Regression) {
    if (scores.size() != n)
      throw FormatError("label count mismatch: " +
                        std::to_string(scores.size()) + " scores for " +
                        std::to_string(n) + " samples");
    for (double v : scores)
      if (!std::isfinite(v)) throw FormatError("non-finite label value");
  } else {
    if (classes.size() != n)
      throw FormatError("label count mismatch: " +
                        std::to_string(classes.size()) + " classes for " +
                        std::to_string(n) + " samples");
    if (class_count < 2)
      throw FormatError("classification dataset requires class_count >= 2");
    for (std::uint32_t c : classes)
      if (c >= class_count)
        throw FormatError("class label " + std::to_string(c) +
                          " out of range [0, " + std::to_string(class_count) +
                          ")");
  }
  for (std::uint8_t s : splits)
    if (s > 2) throw FormatError("invalid split tag " + std::to_string(s));
}

void SyntheticSpec::validate() const {
  if (n_samples < 10) throw ConfigError("synthetic spec: n_samples too small");
  if (shared_dim == 0 || private_dim == 0)
    throw ConfigError("synthetic spec: factor dimensions must be positive");
  for (Modality m : kModalities) {
    std::size_t d = feature_dims[index_of(m)];
    if (shared_dim + private_dim > d)
      throw ConfigError(
          "synthetic spec: d_s + d_p <= d_m required for identifiability, "
          "got " +
          std::to_string(shared_dim) + " + " + std::to_string(private_dim) +
          " > " + std::to_string(d) + " for " + modality_name(m));
  }
  if (noise_scale < 0.0)
    throw ConfigError("synthetic spec: noise scale must be >= 0");
  if (task == TaskKind::Classification && class_count < 2)
    throw ConfigError("synthetic spec: classification needs class_count >= 2");
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::size_t n = spec.n_samples;
  std::size_t ds = spec.shared_dim, dp = spec.private_dim;
  std::size_t df = ds + dp;

  // label weight directions, unit norm, scaled
  auto unit_vec = [&](std::size_t d, double scale) {
    std::vector<double> w = rng.normal_vec(d);
    double nrm = 0.0;
    for (double v : w) nrm += v * v;
    nrm = std::sqrt(nrm);
    for (double& v : w) v = v / nrm * scale;
    return w;
  };
  std::vector<double> w_shared = unit_vec(ds, spec.shared_label_scale);
  std::array<std::vector<double>, 3> w_private;
  for (Modality m : kModalities)
    w_private[index_of(m)] = unit_vec(dp, spec.private_label_scale);

  // mixing matrices, entries N(0, 1/df) so features have unit-ish scale
  std::array<Matrix, 3> mixing;
  double mix_sd = 1.0 / std::sqrt(static_cast<double>(df));
  for (Modality m : kModalities) {
    std::size_t dm = spec.feature_dims[index_of(m)];
    Matrix a(dm, df);
    for (double& v : a.data) v = rng.normal() * mix_sd;
    mixing[index_of(m)] = std::move(a);
  }

  Dataset out;
  out.task = spec.task;
  out.class_count = spec.task == TaskKind::Classification ? spec.class_count : 0;
  FactorSet factors;
  factors.shared = Matrix(n, ds);
  for (Modality m : kModalities) {
    factors.private_[index_of(m)] = Matrix(n, dp);
    out.features[index_of(m)] = Matrix(n, spec.feature_dims[index_of(m)]);
  }
  out.scores.resize(n);

  std::vector<double> coords(df);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < ds; ++j)
      factors.shared.at(i, j) = rng.normal();
    double y = 0.0;
    for (std::size_t j = 0; j < ds; ++j)
      y += w_shared[j] * factors.shared.at(i, j);
    for (Modality m : kModalities) {
      std::size_t mi = index_of(m);
      Matrix& pf = factors.private_[mi];
      for (std::size_t j = 0; j < dp; ++j) pf.at(i, j) = rng.normal();
      for (std::size_t j = 0; j < dp; ++j)
        y += w_private[mi][j] * pf.at(i, j);
      for (std::size_t j = 0; j < ds; ++j) coords[j] = factors.shared.at(i, j);
      for (std::size_t j = 0; j < dp; ++j) coords[ds + j] = pf.at(i, j);
      Matrix& x = out.features[mi];
      const Matrix& a = mixing[mi];
      for (std::size_t r = 0; r < x.cols; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < df; ++c) acc += a.at(r, c) * coords[c];
        x.at(i, r) = acc + spec.noise_scale * rng.normal();
      }
    }
    out.scores[i] = y;
  }

  if (spec.task == TaskKind::Classification) {
    out.classes.resize(n);
    if (spec.class_count == 2) {
      for (std::size_t i = 0; i < n; ++i)
        out.classes[i] = out.scores[i] > 0.0 ? 1u : 0u;
    } else {
      // quantile bins over the generated scores
      std::vector<double> sorted = out.scores;
      std::sort(sorted.begin(), sorted.end());
      std::vector<double> thresholds;
      for (std::size_t c = 1; c < spec.class_count; ++c)
        thresholds.push_back(sorted[c * n / spec.class_count]);
      for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t cls = 0;
        for (double t : thresholds)
          if (out.scores[i] >= t) ++cls;
        out.classes[i] = cls;
      }
    }
    out.scores.clear();
  }

  out.splits.resize(n);
  std::size_t n_train = n * 7 / 10, n_valid = n / 10;
  for (std::size_t i = 0; i < n; ++i) {
    if (i < n_train)
      out.splits[i] = static_cast<std::uint8_t>(Split::Train);
    else if (i < n_train + n_valid)
      out.splits[i] = static_cast<std::uint8_t>(Split::Valid);
    else
      out.splits[i] = static_cast<std::uint8_t>(Split::Test);
  }

  std::ostringstream spec_repr;
  spec_repr << n << "/" << ds << "/" << dp << "/" << spec.feature_dims[0] << ","
            << spec.feature_dims[1] << "," << spec.feature_dims[2] << "/"
            << io::format_double(spec.noise_scale) << "/"
            << io::format_double(spec.shared_label_scale) << "/"
            << io::format_double(spec.private_label_scale) << "/"
            << static_cast<int>(spec.task) << "/" << spec.class_count << "/"
            << spec.seed;
  char hex[32];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(io::fnv1a64(spec_repr.str())));
  out.provenance = std::string("synthetic:") + hex;
  out.factors = std::move(factors);
  out.validate();
  return out;
}

// ---- MINDF container --------------------------------------------------------

void write_features(const Dataset& ds, const std::string& path) {
  ds.validate();
  io::ByteWriter w;
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  std::size_t n = ds.n_samples();
  w.u32(static_cast<std::uint32_t>(n));
  for (Modality m : kModalities)
    w.u32(static_cast<std::uint32_t>(ds.features[index_of(m)].cols));
  w.u8(static_cast<std::uint8_t>(ds.task));
  w.u32(static_cast<std::uint32_t>(ds.class_count));
  for (Modality m : kModalities)
    for (double v : ds.features[index_of(m)].data) w.f64(v);
  if (ds.task == TaskKind::Regression)
    for (double v : ds.scores) w.f64(v);
  else
    for (std::uint32_t c : ds.classes) w.u32(c);
  for (std::uint8_t s : ds.splits) w.u8(s);
  io::write_file(path, w.buf);
}

namespace {

Dataset load_mindf(const std::string& path, const std::string& raw) {
  io::ByteReader r(raw, "MINDF file " + path);
  r.need(4);
  if (!std::equal(kMagic, kMagic + 4, raw.data()))
    throw FormatError("bad magic in " + path + ": expected MNDF");
  r.pos = 4;
  std::uint32_t version = r.u32();
  if (version != kVersion)
    throw FormatError("unsupported MINDF version " + std::to_string(version) +
                      " in " + path);
  std::uint32_t n = r.u32();
  std::array<std::uint32_t, 3> dims{};
  for (auto& d : dims) d = r.u32();
  auto task = static_cast<TaskKind>(r.u8());
  if (task != TaskKind::Regression && task != TaskKind::Classification)
    throw FormatError("invalid task kind byte in " + path);
  std::uint32_t class_count = r.u32();

  // header/payload consistency before reading the body
  std::size_t expect = 0;
  for (auto d : dims) expect += std::size_t(n) * d * 8;
  expect += task == TaskKind::Regression ? std::size_t(n) * 8
                                         : std::size_t(n) * 4;
  expect += n;  // split tags
  if (r.remaining() < expect)
    throw FormatError("truncated MINDF payload in " + path + ": header needs " +
                      std::to_string(expect) + " bytes, found " +
                      std::to_string(r.remaining()));
  if (r.remaining() > expect)
    throw FormatError("dimension disagreement in " + path +
                      ": payload has " + std::to_string(r.remaining()) +
                      " bytes but header accounts for " +
                      std::to_string(expect));

  Dataset ds;
  ds.task = task;
  ds.class_count = class_count;
  for (Modality m : kModalities) {
    Matrix x(n, dims[index_of(m)]);
    for (double& v : x.data) v = r.f64();
    ds.features[index_of(m)] = std::move(x);
  }
  if (task == TaskKind::Regression) {
    ds.scores.resize(n);
    for (double& v : ds.scores) v = r.f64();
  } else {
    ds.classes.resize(n);
    for (std::uint32_t& c : ds.classes) c = r.u32();
  }
  ds.splits.resize(n);
  for (std::uint8_t& s : ds.splits) s = r.u8();
  ds.provenance = path;
  ds.validate();
  return ds;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw FormatError("cannot parse number '" + s + "' in " + where);
  return v;
}

Matrix load_feature_csv(const std::string& path) {
  std::istringstream in(io::read_file(path));
  std::string line;
  if (!std::getline(in, line))
    throw FormatError("empty CSV file: " + path);
  std::size_t cols = split_csv_line(line).size();
  std::vector<double> data;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != cols)
      throw FormatError("ragged CSV row in " + path + ": expected " +
                        std::to_string(cols) + " cells, got " +
                        std::to_string(cells.size()));
    for (const auto& c : cells) data.push_back(parse_double(c, path));
    ++rows;
  }
  return Matrix(rows, cols, std::move(data));
}

Dataset load_csv_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  Dataset ds;
  const char* files[3] = {"visual.csv", "audio.csv", "text.csv"};
  for (Modality m : kModalities) {
    fs::path p = fs::path(dir) / files[index_of(m)];
    if (!fs::exists(p))
      throw FormatError("missing " + std::string(files[index_of(m)]) +
                        " in CSV directory " + dir);
    ds.features[index_of(m)] = load_feature_csv(p.string());
  }
  fs::path lp = fs::path(dir) / "labels.csv";
  if (!fs::exists(lp))
    throw FormatError("missing labels.csv in CSV directory " + dir);
  std::istringstream in(io::read_file(lp.string()));
  std::string line;
  if (!std::getline(in, line))
    throw FormatError("empty labels.csv in " + dir);
  auto header = split_csv_line(line);
  if (header.size() != 2 || header[1] != "split" ||
      (header[0] != "score" && header[0] != "class"))
    throw FormatError(
        "labels.csv header must be 'score,split' or 'class,split', got '" +
        line + "'");
  bool regression = header[0] == "score";
  ds.task = regression ? TaskKind::Regression : TaskKind::Classification;
  std::uint32_t max_class = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != 2)
      throw FormatError("ragged labels.csv row: '" + line + "'");
    if (regression) {
      ds.scores.push_back(parse_double(cells[0], "labels.csv"));
    } else {
      double v = parse_double(cells[0], "labels.csv");
      auto c = static_cast<std::uint32_t>(v);
      ds.classes.push_back(c);
      max_class = std::max(max_class, c);
    }
    ds.splits.push_back(
        static_cast<std::uint8_t>(split_from_name(cells[1])));
  }
  if (!regression) ds.class_count = max_class + 1;
  ds.provenance = dir;
  ds.validate();
  return ds;
}

}  // namespace

Dataset load_features(const std::string& path) {
  if (std::filesystem::is_directory(path)) return load_csv_dir(path);
  std::string raw = io::read_file(path);
  if (raw.size() < 4 || !std::equal(kMagic, kMagic + 4, raw.data()))
    throw FormatError("bad magic in " + path + ": expected MNDF");
  return load_mindf(path, raw);
}

void write_features_csv(const Dataset& ds, const std::string& dir) {
  ds.validate();
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const char* files[3] = {"visual.csv", "audio.csv", "text.csv"};
  for (Modality m : kModalities) {
    const Matrix& x = ds.features[index_of(m)];
    std::string out;
    for (std::size_t j = 0; j < x.cols; ++j) {
      if (j) out += ",";
      out += "f" + std::to_string(j);
    }
    out += "\n";
    for (std::size_t i = 0; i < x.rows; ++i) {
      for (std::size_t j = 0; j < x.cols; ++j) {
        if (j) out += ",";
        out += io::format_double(x.at(i, j));
      }
      out += "\n";
    }
    io::write_file((fs::path(dir) / files[index_of(m)]).string(), out);
  }
  std::string out = ds.task == TaskKind::Regression ? "score,split\n"
                                                    : "class,split\n";
  for (std::size_t i = 0; i < ds.n_samples(); ++i) {
    if (ds.task == TaskKind::Regression)
      out += io::format_double(ds.scores[i]);
    else
      out += std::to_string(ds.classes[i]);
    out += ",";
    out += split_name(static_cast<Split>(ds.splits[i]));
    out += "\n";
  }
  io::write_file((fs::path(dir) / "labels.csv").string(), out);
}

// ---- batching ----------------------------------------------------------------

std::vector<ModalityBatch> make_batches(const Dataset& ds, Split split,
                                        std::size_t batch_size, BatchMode mode,
                                        Rng* shuffle_rng) {
  if (batch_size < 1) throw BatchSizeError("batch_size must be >= 1");
  if (mode == BatchMode::Train && batch_size < 2)
    throw BatchSizeError(
        "training requires batch_size >= 2 (marginal resampling needs a "
        "derangement)");
  std::vector<std::size_t> idx = ds.split_indices(split);
  if (mode == BatchMode::Train && shuffle_rng != nullptr) {
    auto perm = shuffle_rng->permutation(idx.size());
    std::vector<std::size_t> shuffled(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) shuffled[i] = idx[perm[i]];
    idx = std::move(shuffled);
  }
  std::vector<ModalityBatch> out;
  for (std::size_t start = 0; start < idx.size(); start += batch_size) {
    std::size_t end = std::min(start + batch_size, idx.size());
    if (mode == BatchMode::Train && end - start < batch_size) break;  // drop short
    ModalityBatch b;
    b.indices.assign(idx.begin() + start, idx.begin() + end);
    std::size_t n = b.indices.size();
    for (Modality m : kModalities) {
      const Matrix& x = ds.features[index_of(m)];
      Matrix bx(n, x.cols);
      for (std::size_t i = 0; i < n; ++i)
        std::copy(x.row(b.indices[i]), x.row(b.indices[i]) + x.cols,
                  bx.row(i));
      b.features[index_of(m)] = std::move(bx);
    }
    if (ds.task == TaskKind::Regression) {
      b.scores.resize(n);
      for (std::size_t i = 0; i < n; ++i) b.scores[i] = ds.scores[b.indices[i]];
    } else {
      b.classes.resize(n);
      for (std::size_t i = 0; i < n; ++i)
        b.classes[i] = ds.classes[b.indices[i]];
    }
    out.push_back(std::move(b));
  }
  return out;
}

int label_to_class7(double score) {
  double r = std::round(score);  // half away from zero
  r = std::clamp(r, -3.0, 3.0);
  return static_cast<int>(r) + 3;
}

}  // namespace mind
