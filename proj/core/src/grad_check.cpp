#include "voxbuild/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "voxbuild/error.hpp"
#include "voxbuild/rng.hpp"

namespace voxbuild {

double grad_check(const std::function<double()>& loss,
                  std::span<const GradCheckItem> items,
                  const GradCheckOptions& opts) {
  if (opts.eps <= 0.0) throw std::invalid_argument("grad_check: eps <= 0");
  double max_rel = 0.0;
  for (std::size_t item_idx = 0; item_idx < items.size(); ++item_idx) {
    const GradCheckItem& item = items[item_idx];
    const std::size_t n = item.value->numel();
    if (n == 0) continue;
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    std::size_t take = std::min(n, opts.min_coords);
    if (take < n) {
      Rng rng(mix_seed(opts.seed, item_idx));
      for (std::size_t i = 0; i < take; ++i) {
        std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(coords[i], coords[j]);
      }
    }
    for (std::size_t i = 0; i < take; ++i) {
      const std::size_t c = coords[i];
      double& v = item.value->data[c];
      const double saved = v;
      v = saved + opts.eps;
      const double lp = loss();
      v = saved - opts.eps;
      const double lm = loss();
      v = saved;
      if (!std::isfinite(lp) || !std::isfinite(lm)) {
        throw NumericalError("grad_check: non-finite loss while probing " +
                             item.name);
      }
      const double fd = (lp - lm) / (2.0 * opts.eps);
      const double g = item.grad->data[c];
      const double denom = std::max({1.0, std::fabs(fd), std::fabs(g)});
      max_rel = std::max(max_rel, std::fabs(fd - g) / denom);
    }
  }
  return max_rel;
}

}  // namespace voxbuild
