#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "apo/core.hpp"

namespace apo::shaping {

// Group advantage normalization, test-time difficulty, the DADS KL-weight
// projection family, and STCR advantage scaling.

struct FilteredGroupError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Fraction of the group that answered incorrectly.
double group_difficulty(std::span<const int> accuracy_flags, int group_size);

// (r_i - mean) / (population std + epsilon_std); all zeros when the variance
// is exactly zero.
std::vector<double> normalize_advantages(std::span<const double> rewards,
                                         double epsilon_std);

// f(d) with f mapping [0,1] onto [0,1], monotone decreasing except Constant:
//   Exponential: 1 - e^(e*(d-1))    (primary form)
//   Linear:      1 - d
//   Cubic:       1 - d^3
//   Constant:    1
// Throws std::domain_error outside [0,1].
double eval_projection(ProjectionVariant variant, double d);

// Per-trajectory KL weights: f(d)*beta for correct trajectories when d != 0,
// beta otherwise. Callers must have filtered all-correct groups; throws
// FilteredGroupError when d == 0.
std::vector<double> dads_kl_weights(const RolloutGroup& group, double beta,
                                    ProjectionVariant variant);

// 2 - mu^(L_mean_acc - L_i). Only meaningful for L_i > L_mean_acc; callers
// apply it solely to incorrect trajectories longer than the mean correct
// length.
double stcr_alpha(int length, double mean_correct_length, double mu);

// Full shaping pipeline for one group: all-correct groups come back skipped
// with zero advantages; otherwise composite rewards are normalized, broadcast
// to tokens, STCR-scaled where enabled, and paired with DADS KL weights.
// `mean_correct_length_override` substitutes a batch-level mean when the
// trainer runs with lmean_scope = batch.
ShapedAdvantages shape_group(
    const RolloutGroup& group, const TrainConfig& config,
    std::optional<double> mean_correct_length_override = std::nullopt);

}  // namespace apo::shaping
