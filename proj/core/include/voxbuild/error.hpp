#ifndef VOXBUILD_ERROR_HPP_
#define VOXBUILD_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace voxbuild {

// Bad input data: malformed records, out-of-range coordinates, infeasible
// action sequences, checkpoint mismatches. Maps to CLI exit code 2.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite loss or gradients during training. Maps to CLI exit code 3.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace voxbuild

#endif  // VOXBUILD_ERROR_HPP_
