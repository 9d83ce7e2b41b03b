#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mind/rng.hpp"
#include "mind/types.hpp"

namespace mind {

// Ground-truth generative factors, carried only by synthetic datasets.
struct FactorSet {
  Matrix shared;                      // n x d_s
  std::array<Matrix, 3> private_;     // n x d_p per modality
};

struct Dataset {
  std::array<Matrix, 3> features;     // X_V, X_A, X_T
  TaskKind task = TaskKind::Regression;
  std::size_t class_count = 0;        // classification only
  std::vector<double> scores;         // regression labels
  std::vector<std::uint32_t> classes; // classification labels
  std::vector<std::uint8_t> splits;   // Split per sample
  std::string provenance;
  std::optional<FactorSet> factors;

  std::size_t n_samples() const { return splits.size(); }
  std::vector<std::size_t> split_indices(Split s) const;

  // Equal sample counts across modalities, finite features, label sanity.
  void validate() const;
};

struct SyntheticSpec {
  std::size_t n_samples = 2000;
  std::size_t shared_dim = 4;                     // d_s
  std::size_t private_dim = 4;                    // d_p
  std::array<std::size_t, 3> feature_dims{16, 16, 16};  // d_m
  double noise_scale = 0.1;                       // sigma
  // Label weight vectors are drawn on the unit sphere from the seed and
  // scaled by these magnitudes.
  double shared_label_scale = 1.0;
  double private_label_scale = 0.5;
  TaskKind task = TaskKind::Regression;
  std::size_t class_count = 0;
  std::uint64_t seed = 7;

  void validate() const;  // d_s + d_p <= d_m, sigma >= 0, ...
};

// Factor model: x_m = A_m [s; p_m] + sigma eps, y = w_s.s + sum w_pm.p_m.
// Splits are carved deterministically 70/10/20 in sample order.
Dataset generate_synthetic(const SyntheticSpec& spec);

// MINDF binary container.
void write_features(const Dataset& ds, const std::string& path);

// Loads a MINDF file, or a directory holding visual.csv / audio.csv /
// text.csv / labels.csv.
Dataset load_features(const std::string& path);

void write_features_csv(const Dataset& ds, const std::string& dir);

struct ModalityBatch {
  std::array<Matrix, 3> features;
  std::vector<double> scores;
  std::vector<std::uint32_t> classes;
  std::vector<std::size_t> indices;  // dataset sample positions

  std::size_t size() const { return indices.size(); }
};

enum class BatchMode { Train, Eval };

// Train mode shuffles (when rng given) and drops the final short batch;
// eval mode keeps every sample in order. Training requires batch_size >= 2.
std::vector<ModalityBatch> make_batches(const Dataset& ds, Split split,
                                        std::size_t batch_size, BatchMode mode,
                                        Rng* shuffle_rng);

// Sentiment score in [-3, 3] -> class index in [0, 6]; rounding is
// half-away-from-zero, out-of-range scores clamp to the end bins.
int label_to_class7(double score);

}  // namespace mind
