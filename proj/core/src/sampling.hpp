#pragma once

#include "stochsynth/model.hpp"
#include "stochsynth/rng.hpp"

#include <random>

namespace stochsynth::detail {

inline Vec uniform_in(const Box& b, Engine& eng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Vec x(b.dim());
  for (std::size_t i = 0; i < b.dim(); ++i) x[i] = b.lo[i] + U(eng) * (b.hi[i] - b.lo[i]);
  return x;
}

inline Vec sample_input(const InputSet& inputs, Engine& eng) {
  if (inputs.is_finite()) {
    const auto& pts = inputs.points();
    std::uniform_int_distribution<std::size_t> pick(0, pts.size() - 1);
    return pts[pick(eng)];
  }
  const auto& boxes = inputs.box_list();
  std::uniform_int_distribution<std::size_t> pick(0, boxes.size() - 1);
  return uniform_in(boxes[pick(eng)], eng);
}

}  // namespace stochsynth::detail
