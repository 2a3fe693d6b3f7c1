#ifndef VOXBUILD_OPTIM_HPP_
#define VOXBUILD_OPTIM_HPP_

#include <cstdint>
#include <utility>
#include <vector>

#include "voxbuild/tensor.hpp"

namespace voxbuild {

enum class OptimizerKind : std::uint8_t { SgdMomentum, Adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Owns slot buffers for a fixed list of (parameter, gradient) tensor pairs.
// Update order is the registration order, so steps are deterministic.
class Optimizer {
 public:
  Optimizer(OptimizerConfig config,
            std::vector<std::pair<Tensor*, const Tensor*>> params);

  void step(double lr);

 private:
  OptimizerConfig config_;
  std::vector<std::pair<Tensor*, const Tensor*>> params_;
  std::vector<std::vector<double>> slot_m_;
  std::vector<std::vector<double>> slot_v_;
  std::uint64_t t_ = 0;
};

}  // namespace voxbuild

#endif  // VOXBUILD_OPTIM_HPP_
