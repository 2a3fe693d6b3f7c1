#include "voxbuild/tensor.hpp"

#include <algorithm>

namespace voxbuild {

namespace {

// Output-column tile: keeps the weight slab for one tile cache-resident
// while every row passes over it. Matters for the wide builder action head,
// whose weight matrix is far larger than L2.
constexpr std::size_t kTile = 512;

}  // namespace

void linear_forward(const double* __restrict x, const double* __restrict w,
                    const double* __restrict bias, double* __restrict y,
                    std::size_t rows, std::size_t in, std::size_t out) {
  for (std::size_t o0 = 0; o0 < out; o0 += kTile) {
    const std::size_t o1 = std::min(o0 + kTile, out);
    for (std::size_t r = 0; r < rows; ++r) {
      double* __restrict yr = y + r * out;
      if (bias != nullptr) {
        for (std::size_t o = o0; o < o1; ++o) yr[o] = bias[o];
      } else {
        for (std::size_t o = o0; o < o1; ++o) yr[o] = 0.0;
      }
      const double* xr = x + r * in;
      for (std::size_t i = 0; i < in; ++i) {
        const double xi = xr[i];
        const double* __restrict wi = w + i * out;
        for (std::size_t o = o0; o < o1; ++o) yr[o] += xi * wi[o];
      }
    }
  }
}

void linear_backward(const double* __restrict x, const double* __restrict w,
                     const double* __restrict dy, double* __restrict dx,
                     double* __restrict dw, double* __restrict dbias,
                     std::size_t rows, std::size_t in, std::size_t out) {
  if (dx != nullptr) {
    for (std::size_t o0 = 0; o0 < out; o0 += kTile) {
      const std::size_t o1 = std::min(o0 + kTile, out);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* __restrict dyr = dy + r * out;
        double* __restrict dxr = dx + r * in;
        for (std::size_t i = 0; i < in; ++i) {
          const double* __restrict wi = w + i * out;
          // Four independent accumulators break the add latency chain; the
          // summation order is fixed by this source, not the optimizer.
          double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
          std::size_t o = o0;
          for (; o + 4 <= o1; o += 4) {
            a0 += dyr[o] * wi[o];
            a1 += dyr[o + 1] * wi[o + 1];
            a2 += dyr[o + 2] * wi[o + 2];
            a3 += dyr[o + 3] * wi[o + 3];
          }
          double acc = (a0 + a1) + (a2 + a3);
          for (; o < o1; ++o) acc += dyr[o] * wi[o];
          dxr[i] += acc;
        }
      }
    }
  }
  if (dw != nullptr) {
    for (std::size_t o0 = 0; o0 < out; o0 += kTile) {
      const std::size_t o1 = std::min(o0 + kTile, out);
      for (std::size_t i = 0; i < in; ++i) {
        double* __restrict dwi = dw + i * out;
        for (std::size_t r = 0; r < rows; ++r) {
          const double xi = x[r * in + i];
          const double* __restrict dyr = dy + r * out;
          for (std::size_t o = o0; o < o1; ++o) dwi[o] += xi * dyr[o];
        }
      }
    }
  }
  if (dbias != nullptr) {
    for (std::size_t r = 0; r < rows; ++r) {
      const double* __restrict dyr = dy + r * out;
      for (std::size_t o = 0; o < out; ++o) dbias[o] += dyr[o];
    }
  }
}

}  // namespace voxbuild
