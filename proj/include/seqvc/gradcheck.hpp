// seqvc/gradcheck.hpp
//
// Central-difference gradient verification for any scalar-valued
// differentiable function built from the tensor primitives.

// Copyright 2026  seqvc authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef SEQVC_GRADCHECK_HPP_
#define SEQVC_GRADCHECK_HPP_

#include <functional>

#include "seqvc/tensor.hpp"

namespace seqvc {

struct GradCheckOptions {
  double step = 1e-5;
  // Coordinates checked per tensor; larger tensors are subsampled.
  std::size_t max_coords_per_tensor = 64;
  std::uint64_t seed = 1234;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t coords_checked = 0;
};

// f must rebuild its graph from the given parameter tensors on every call
// and be deterministic (no dropout, no fresh randomness). Returns the
// maximum over checked coordinates of
//   |analytic - numeric| / max(1, |analytic|, |numeric|).
inline GradCheckReport grad_check(const std::function<TensorPtr()> &f,
                                  const std::vector<TensorPtr> &params,
                                  const GradCheckOptions &opts = {}) {
  GradCheckReport report;
  std::vector<std::vector<real>> analytic(params.size());
  {
    for (const auto &p : params) {
      p->ensure_grad();
      p->zero_grad();
    }
    TapeScope scope;
    TensorPtr loss = f();
    require_shape(loss->size() == 1, "grad_check: f must return a scalar");
    if (!std::isfinite(static_cast<double>(loss->v[0])))
      throw NumericError("grad_check: non-finite loss");
    scope.tape().backward(loss);
    for (std::size_t k = 0; k < params.size(); ++k) analytic[k] = params[k]->g;
  }

  Rng rng(opts.seed);
  const real h = static_cast<real>(opts.step);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto &p = *params[k];
    std::vector<std::size_t> coords;
    if (p.size() <= opts.max_coords_per_tensor) {
      coords.resize(p.size());
      for (std::size_t i = 0; i < p.size(); ++i) coords[i] = i;
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, p.size() - 1);
      coords.resize(opts.max_coords_per_tensor);
      for (auto &c : coords) c = pick(rng);
    }
    for (std::size_t c : coords) {
      const real saved = p.v[c];
      double fp, fm;
      {
        NoGradScope ng;
        p.v[c] = saved + h;
        fp = static_cast<double>(f()->v[0]);
        p.v[c] = saved - h;
        fm = static_cast<double>(f()->v[0]);
        p.v[c] = saved;
      }
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw NumericError("grad_check: non-finite perturbed loss");
      const double numeric = (fp - fm) / (2.0 * static_cast<double>(h));
      const double exact = static_cast<double>(analytic[k][c]);
      const double denom = std::max({1.0, std::abs(exact), std::abs(numeric)});
      report.max_rel_err = std::max(report.max_rel_err, std::abs(exact - numeric) / denom);
      ++report.coords_checked;
    }
  }
  return report;
}

}  // namespace seqvc

#endif  // SEQVC_GRADCHECK_HPP_
