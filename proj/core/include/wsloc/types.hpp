#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace wsloc {

/// Raised when an input violates a documented precondition (shape, range,
/// unknown name). Carries a human-readable diagnostic.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a metric is not defined for the given input (single-class AUC,
/// no ground-truth boxes).
class UndefinedMetric : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised while reading a text file; remembers the 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Dense row-major 2D array of doubles.
struct Grid {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Grid() = default;
  Grid(int r, int c, double fill = 0.0);

  double& operator()(int r, int c) { return data[index(r, c)]; }
  double operator()(int r, int c) const { return data[index(r, c)]; }
  std::size_t index(int r, int c) const {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) +
           static_cast<std::size_t>(c);
  }
  std::size_t size() const { return data.size(); }
  std::span<double> values() { return data; }
  std::span<const double> values() const { return data; }

  bool operator==(const Grid&) const = default;
};

/// Dense channel-major (C x H x W) 3D array of doubles.
struct Tensor3 {
  int channels = 0;
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Tensor3() = default;
  Tensor3(int c, int r, int w, double fill = 0.0);

  std::size_t plane() const {
    return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  }
  std::size_t index(int c, int r, int w) const {
    return static_cast<std::size_t>(c) * plane() +
           static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) +
           static_cast<std::size_t>(w);
  }
  double& operator()(int c, int r, int w) { return data[index(c, r, w)]; }
  double operator()(int c, int r, int w) const { return data[index(c, r, w)]; }

  std::span<double> channel(int c) { return {data.data() + c * plane(), plane()}; }
  std::span<const double> channel(int c) const {
    return {data.data() + c * plane(), plane()};
  }
  Grid channel_grid(int c) const;

  bool operator==(const Tensor3&) const = default;
};

bool all_finite(std::span<const double> values);

}  // namespace wsloc
