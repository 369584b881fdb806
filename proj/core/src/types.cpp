#include "wsloc/types.hpp"

#include <algorithm>
#include <cmath>

namespace wsloc {

ParseError::ParseError(const std::string& source, std::size_t line, const std::string& what)
    : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

Grid::Grid(int r, int c, double fill)
    : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {
  if (r < 0 || c < 0) throw InvalidInput("Grid: negative dimension");
}

Tensor3::Tensor3(int c, int r, int w, double fill)
    : channels(c),
      rows(r),
      cols(w),
      data(static_cast<std::size_t>(c) * static_cast<std::size_t>(r) * static_cast<std::size_t>(w),
           fill) {
  if (c < 0 || r < 0 || w < 0) throw InvalidInput("Tensor3: negative dimension");
}

Grid Tensor3::channel_grid(int c) const {
  Grid g(rows, cols);
  auto src = channel(c);
  std::copy(src.begin(), src.end(), g.data.begin());
  return g;
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace wsloc
