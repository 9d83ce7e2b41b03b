#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mind/errors.hpp"

namespace mind {

enum class Modality : int { Visual = 0, Audio = 1, Text = 2 };

constexpr std::array<Modality, 3> kModalities{Modality::Visual, Modality::Audio,
                                              Modality::Text};

inline constexpr std::size_t index_of(Modality m) {
  return static_cast<std::size_t>(m);
}

const char* modality_tag(Modality m);   // "V", "A", "T"
const char* modality_name(Modality m);  // "visual", "audio", "text"
Modality modality_from_tag(const std::string& tag);

enum class TaskKind : std::uint8_t { Regression = 0, Classification = 1 };

enum class Split : std::uint8_t { Train = 0, Valid = 1, Test = 2 };

const char* split_name(Split s);
Split split_from_name(const std::string& name);

// Plain row-major matrix, no gradients attached.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> d)
      : rows(r), cols(c), data(std::move(d)) {
    if (data.size() != rows * cols)
      throw ShapeError("matrix data length does not match dimensions");
  }

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }
  double* row(std::size_t r) { return data.data() + r * cols; }
  bool empty() const { return data.empty(); }
};

}  // namespace mind
