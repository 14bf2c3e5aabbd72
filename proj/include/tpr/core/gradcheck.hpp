#ifndef TPR_CORE_GRADCHECK_HPP
#define TPR_CORE_GRADCHECK_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "tpr/core/errors.hpp"
#include "tpr/core/param.hpp"
#include "tpr/core/rng.hpp"

namespace tpr {

struct GradCheckOptions {
  double epsilon = 1e-5;
  // Coordinates sampled per parameter tensor; <=0 means every coordinate.
  int coords_per_param = 32;
  std::uint64_t seed = 7;
  // Relative-error denominators are floored at rel_floor times the largest
  // analytic gradient magnitude, so finite-difference noise on near-zero
  // coordinates is judged against the gradient's dominant scale.
  double rel_floor = 1e-3;
  double min_denom = 1e-6;
};

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::int64_t worst_index = -1;
  double analytic = 0.0, numeric = 0.0;
};

// Central finite differences against analytic gradients, meant to run in
// f64 (f32 finite differences drown in roundoff). `compute(want_grad)` must
// zero grads, run the full forward (and backward when asked) and return the
// loss; it must be deterministic, which is verified by re-evaluation.
inline GradCheckResult grad_check(const std::function<double(bool)>& compute,
                                  const ParamRefs<double>& params,
                                  const GradCheckOptions& opts = {}) {
  const double l0 = compute(true);
  std::vector<Tensor<double>> analytic;
  analytic.reserve(params.size());
  for (auto* p : params) analytic.push_back(p->grad);

  const double l1 = compute(false);
  if (l0 != l1)
    throw VerificationError("grad_check: loss is not deterministic (" +
                            std::to_string(l0) + " vs " + std::to_string(l1) + ")");

  double gmax = 0.0;
  for (const auto& g : analytic)
    for (std::int64_t i = 0; i < g.numel(); ++i) gmax = std::max(gmax, std::fabs(g[i]));
  const double floor = std::max(opts.min_denom, opts.rel_floor * gmax);

  Rng rng(opts.seed);
  GradCheckResult res;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& value = params[pi]->value;
    const std::int64_t n = value.numel();
    std::vector<std::int64_t> coords;
    if (opts.coords_per_param <= 0 || opts.coords_per_param >= n) {
      coords.resize(static_cast<size_t>(n));
      for (std::int64_t i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
    } else {
      for (int i = 0; i < opts.coords_per_param; ++i)
        coords.push_back(static_cast<std::int64_t>(rng.randint(static_cast<std::uint64_t>(n))));
    }
    for (std::int64_t idx : coords) {
      const double orig = value[idx];
      value[idx] = orig + opts.epsilon;
      const double lp = compute(false);
      value[idx] = orig - opts.epsilon;
      const double lm = compute(false);
      value[idx] = orig;
      const double numeric = (lp - lm) / (2.0 * opts.epsilon);
      const double a = analytic[pi][idx];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), floor});
      const double rel = std::fabs(a - numeric) / denom;
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst_param = params[pi]->name;
        res.worst_index = idx;
        res.analytic = a;
        res.numeric = numeric;
      }
    }
  }
  return res;
}

}  // namespace tpr

#endif
