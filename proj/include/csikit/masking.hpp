#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "csikit/csi_data.hpp"
#include "csikit/rng.hpp"

namespace csikit::train {

enum class MaskMode { MLM, MPM };

// Which positions of a sequence are hidden from the model, and the Gaussian
// replacement values (standardized coordinates) written at those rows.
// Placeholder (Pad) positions are always included.
struct MaskPlan {
  MaskMode mode = MaskMode::MLM;
  double ratio = 0.0;
  std::size_t length = 0;
  std::size_t dim = 0;
  std::vector<std::size_t> masked_positions;  // sorted, unique
  std::vector<char> is_masked;                // length flags
  std::vector<double> mask_values;            // length x dim, zeros off-mask

  bool covers(std::size_t i) const { return is_masked[i] != 0; }
  std::size_t masked_count() const { return masked_positions.size(); }
};

inline double ratio_lo(MaskMode mode) { return 0.15; }
inline double ratio_hi(MaskMode mode) { return mode == MaskMode::MLM ? 0.70 : 0.40; }

// Draws a masking plan for one sequence. MLM masks ceil(r * #non-Pad)
// uniformly random non-Pad positions; MPM masks the trailing ceil(r * L)
// positions. Pads are converted to Mask unconditionally. When `ratio` is
// absent it is drawn from the mode's range (the trainers draw one ratio per
// batch and pass it down).
inline MaskPlan sample_mask_plan(const std::vector<data::TokenFlag>& flags,
                                 std::size_t dim, MaskMode mode, Rng& rng,
                                 std::optional<double> ratio = std::nullopt) {
  const std::size_t length = flags.size();
  require(length > 0, "sample_mask_plan: empty sequence");
  std::vector<std::size_t> non_pad;
  non_pad.reserve(length);
  for (std::size_t i = 0; i < length; ++i)
    if (flags[i] != data::TokenFlag::Pad) non_pad.push_back(i);
  require(!non_pad.empty(), "sample_mask_plan: every position is a placeholder");

  MaskPlan plan;
  plan.mode = mode;
  plan.length = length;
  plan.dim = dim;
  plan.ratio = ratio ? *ratio : rng.uniform(ratio_lo(mode), ratio_hi(mode));
  require(plan.ratio >= ratio_lo(mode) - 1e-12 &&
              plan.ratio <= ratio_hi(mode) + 1e-12,
          "sample_mask_plan: ratio outside the mode's range");
  plan.is_masked.assign(length, 0);
  for (std::size_t i = 0; i < length; ++i)
    if (flags[i] == data::TokenFlag::Pad) plan.is_masked[i] = 1;

  if (mode == MaskMode::MLM) {
    const auto extra = static_cast<std::size_t>(
        std::ceil(plan.ratio * static_cast<double>(non_pad.size()) - 1e-12));
    // partial Fisher-Yates over the non-Pad candidates
    std::vector<std::size_t> pool = non_pad;
    const std::size_t take = std::min(extra, pool.size());
    for (std::size_t i = 0; i < take; ++i) {
      const std::size_t j = i + rng.below(pool.size() - i);
      std::swap(pool[i], pool[j]);
      plan.is_masked[pool[i]] = 1;
    }
  } else {
    const auto tail = static_cast<std::size_t>(
        std::ceil(plan.ratio * static_cast<double>(length) - 1e-12));
    for (std::size_t i = length - std::min(tail, length); i < length; ++i)
      plan.is_masked[i] = 1;
  }

  plan.mask_values.assign(length * dim, 0.0);
  for (std::size_t i = 0; i < length; ++i) {
    if (!plan.is_masked[i]) continue;
    plan.masked_positions.push_back(i);
    for (std::size_t j = 0; j < dim; ++j)
      plan.mask_values[i * dim + j] = rng.normal();
  }
  return plan;
}

// Inference plan: hide only the placeholders.
inline MaskPlan pads_only_plan(const std::vector<data::TokenFlag>& flags,
                               std::size_t dim, Rng& rng) {
  MaskPlan plan;
  plan.mode = MaskMode::MLM;
  plan.ratio = 0.0;
  plan.length = flags.size();
  plan.dim = dim;
  plan.is_masked.assign(plan.length, 0);
  plan.mask_values.assign(plan.length * dim, 0.0);
  for (std::size_t i = 0; i < plan.length; ++i) {
    if (flags[i] != data::TokenFlag::Pad) continue;
    plan.is_masked[i] = 1;
    plan.masked_positions.push_back(i);
    for (std::size_t j = 0; j < dim; ++j)
      plan.mask_values[i * dim + j] = rng.normal();
  }
  return plan;
}

// Fixed-position plan (tail prediction, saliency targets): masks the given
// positions plus every placeholder.
inline MaskPlan explicit_plan(const std::vector<data::TokenFlag>& flags,
                              std::size_t dim,
                              const std::vector<std::size_t>& positions,
                              Rng& rng, MaskMode mode = MaskMode::MLM) {
  MaskPlan plan;
  plan.mode = mode;
  plan.ratio = 0.0;
  plan.length = flags.size();
  plan.dim = dim;
  plan.is_masked.assign(plan.length, 0);
  plan.mask_values.assign(plan.length * dim, 0.0);
  for (std::size_t i = 0; i < plan.length; ++i)
    if (flags[i] == data::TokenFlag::Pad) plan.is_masked[i] = 1;
  for (std::size_t p : positions) {
    require(p < plan.length, "explicit_plan: position out of range");
    plan.is_masked[p] = 1;
  }
  for (std::size_t i = 0; i < plan.length; ++i) {
    if (!plan.is_masked[i]) continue;
    plan.masked_positions.push_back(i);
    for (std::size_t j = 0; j < dim; ++j)
      plan.mask_values[i * dim + j] = rng.normal();
  }
  return plan;
}

}  // namespace csikit::train
