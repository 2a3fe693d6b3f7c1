#ifndef VOXBUILD_GRAD_CHECK_HPP_
#define VOXBUILD_GRAD_CHECK_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "voxbuild/tensor.hpp"

namespace voxbuild {

struct GradCheckItem {
  std::string name;
  Tensor* value;         // perturbed in place, restored after each probe
  const Tensor* grad;    // analytic gradient computed by the caller
};

struct GradCheckOptions {
  double eps = 1e-4;
  std::size_t min_coords = 200;  // sampled coordinates per tensor (all, if fewer)
  std::uint64_t seed = 0;
};

// Central finite differences against the supplied reverse-mode gradients.
// `loss` must recompute the scalar loss from the current tensor values.
// Returns the max of |fd - grad| / max(1, |fd|, |grad|) over all sampled
// coordinates; throws NumericalError on a non-finite loss.
double grad_check(const std::function<double()>& loss,
                  std::span<const GradCheckItem> items,
                  const GradCheckOptions& opts = {});

}  // namespace voxbuild

#endif  // VOXBUILD_GRAD_CHECK_HPP_
