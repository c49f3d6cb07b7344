#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "csikit/rng.hpp"
#include "csikit/tensor.hpp"

namespace csikit::nn {

struct GradCheckOptions {
  double step = 1e-5;            // central-difference step, scaled per coordinate
  double rel_floor = 1e-3;       // denominator floor for the relative error
  std::size_t max_coords = 0;    // 0 = all coordinates, else a random subset
  std::uint64_t pick_seed = 7;   // coordinate subsampling stream
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::size_t coords_checked = 0;
  std::string worst;  // "<leaf>[i]" of the worst coordinate
};

// Compares reverse-mode gradients of a scalar-valued builder against central
// finite differences. The builder must be deterministic and must read the
// leaves' current values on every call; leaves are perturbed in place.
template <typename S>
GradCheckReport grad_check(const std::function<TensorT<S>()>& build_loss,
                           std::vector<ParameterT<S>> leaves,
                           const GradCheckOptions& opt = {}) {
  for (auto& l : leaves) l.tensor.zero_grad();
  TensorT<S> loss = build_loss();
  require(loss.size() == 1, "grad_check: builder must return a scalar");
  loss.backward();

  std::vector<std::vector<S>> analytic;
  analytic.reserve(leaves.size());
  for (auto& l : leaves) analytic.push_back(l.tensor.grad());

  auto eval = [&]() -> double {
    NoGradGuard guard;
    return static_cast<double>(build_loss().item());
  };

  GradCheckReport report;
  Rng pick(opt.pick_seed);
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto& vals = leaves[li].tensor.mutable_value();
    std::vector<std::size_t> coords;
    if (opt.max_coords == 0 || vals.size() <= opt.max_coords) {
      coords.resize(vals.size());
      for (std::size_t i = 0; i < vals.size(); ++i) coords[i] = i;
    } else {
      for (std::size_t i = 0; i < opt.max_coords; ++i)
        coords.push_back(pick.below(vals.size()));
    }
    for (std::size_t i : coords) {
      const S saved = vals[i];
      const double h =
          opt.step * std::max(1.0, std::abs(static_cast<double>(saved)));
      vals[i] = saved + static_cast<S>(h);
      const double fp = eval();
      vals[i] = saved - static_cast<S>(h);
      const double fm = eval();
      vals[i] = saved;
      const double fd = (fp - fm) / (2.0 * h);
      const double ad = static_cast<double>(analytic[li][i]);
      const double abs_err = std::abs(fd - ad);
      const double rel =
          abs_err / std::max({std::abs(fd), std::abs(ad), opt.rel_floor});
      ++report.coords_checked;
      if (abs_err > report.max_abs_err) report.max_abs_err = abs_err;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst = leaves[li].name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return report;
}

}  // namespace csikit::nn
