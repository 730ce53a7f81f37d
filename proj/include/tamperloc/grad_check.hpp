#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tamperloc/tensor.hpp"

namespace tamperloc {

using OpFn = std::function<Tensor(const std::vector<Tensor>&)>;

struct GradCheckReport {
  std::string op;
  bool ok = true;
  Scalar max_rel_err = 0;
  Index worst_input = -1;   // which input tensor held the worst element
  Index worst_elem = -1;    // flat index inside that input
  Scalar analytic = 0;
  Scalar numeric = 0;
};

// Central-difference check of the reverse pass of fn. The forward output is
// reduced by summation (matching the ones-seed in Tensor::backward), every
// input element is nudged by +-h, and the analytic gradient is compared with
// relative error |a - n| / max(1, |a|, |n|). Throws NumericError when either
// side produces a non-finite value, ConfigError when h is outside [1e-5, 1e-2].
GradCheckReport grad_check(const std::string& op, const OpFn& fn,
                           std::vector<Tensor> inputs, Scalar h, Scalar tol);

// Same check, probing only `samples` seeded-random elements per input tensor
// (all of them when the tensor is that small). For large parameter sets where
// the exhaustive sweep would be too slow.
GradCheckReport grad_check_sampled(const std::string& op, const OpFn& fn,
                                   std::vector<Tensor> inputs, Scalar h,
                                   Scalar tol, Index samples,
                                   std::uint64_t seed);

}  // namespace tamperloc
