#include "tamperloc/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "tamperloc/rng.hpp"

namespace tamperloc {

namespace {

Scalar eval_sum(const std::string& op, const OpFn& fn, const std::vector<Tensor>& inputs) {
  Tensor y = fn(inputs);
  const Scalar s = y.data().sum();
  if (!std::isfinite(s)) {
    throw NumericError("grad_check(" + op + "): forward produced a non-finite value");
  }
  return s;
}

// runs backward once, then central-differences the listed elements
GradCheckReport probe_elements(const std::string& op, const OpFn& fn,
                               std::vector<Tensor>& inputs, Scalar h,
                               Scalar tol,
                               const std::vector<std::vector<Index>>& picks) {
  for (Tensor& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tensor y = fn(inputs);
  y.backward();
  std::vector<ArrayX> analytic;
  analytic.reserve(inputs.size());
  for (const Tensor& t : inputs) {
    if (!t.has_grad()) {
      throw NumericError("grad_check(" + op + "): input received no gradient");
    }
    analytic.push_back(t.grad());
  }

  GradCheckReport rep;
  rep.op = op;
  for (size_t i = 0; i < inputs.size(); ++i) {
    ArrayX& data = inputs[i].raw_data();
    for (Index j : picks[i]) {
      const Scalar saved = data[j];
      data[j] = saved + h;
      const Scalar up = eval_sum(op, fn, inputs);
      data[j] = saved - h;
      const Scalar down = eval_sum(op, fn, inputs);
      data[j] = saved;
      const Scalar num = (up - down) / (2 * h);
      const Scalar ana = analytic[i][j];
      if (!std::isfinite(num) || !std::isfinite(ana)) {
        throw NumericError("grad_check(" + op + "): non-finite gradient at input " +
                           std::to_string(i) + " element " + std::to_string(j));
      }
      const Scalar rel =
          std::abs(ana - num) / std::max({Scalar(1), std::abs(ana), std::abs(num)});
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_input = static_cast<Index>(i);
        rep.worst_elem = j;
        rep.analytic = ana;
        rep.numeric = num;
      }
    }
  }
  rep.ok = rep.max_rel_err <= tol;
  return rep;
}

void check_step(const std::string& op, Scalar h) {
  if (!(h >= 1e-5 && h <= 1e-2)) {
    throw ConfigError("grad_check(" + op + "): step h must lie in [1e-5, 1e-2]");
  }
}

}  // namespace

GradCheckReport grad_check(const std::string& op, const OpFn& fn,
                           std::vector<Tensor> inputs, Scalar h, Scalar tol) {
  check_step(op, h);
  std::vector<std::vector<Index>> picks(inputs.size());
  for (size_t i = 0; i < inputs.size(); ++i) {
    picks[i].resize(static_cast<size_t>(inputs[i].numel()));
    for (Index j = 0; j < inputs[i].numel(); ++j) {
      picks[i][static_cast<size_t>(j)] = j;
    }
  }
  return probe_elements(op, fn, inputs, h, tol, picks);
}

GradCheckReport grad_check_sampled(const std::string& op, const OpFn& fn,
                                   std::vector<Tensor> inputs, Scalar h,
                                   Scalar tol, Index samples,
                                   std::uint64_t seed) {
  check_step(op, h);
  if (samples < 1) {
    throw ConfigError("grad_check(" + op + "): samples must be >= 1");
  }
  RngStream rng(seed);
  std::vector<std::vector<Index>> picks(inputs.size());
  for (size_t i = 0; i < inputs.size(); ++i) {
    const Index n = inputs[i].numel();
    if (n <= samples) {
      picks[i].resize(static_cast<size_t>(n));
      for (Index j = 0; j < n; ++j) picks[i][static_cast<size_t>(j)] = j;
    } else {
      for (Index k = 0; k < samples; ++k) {
        Index j = rng.uniform_int(0, n - 1);
        if (std::find(picks[i].begin(), picks[i].end(), j) == picks[i].end()) {
          picks[i].push_back(j);
        }
      }
    }
  }
  return probe_elements(op, fn, inputs, h, tol, picks);
}

}  // namespace tamperloc
