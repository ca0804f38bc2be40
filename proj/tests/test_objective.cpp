#include <doctest.h>

#include <cmath>

#include "apo/objective.hpp"
#include "apo/prng.hpp"
#include "apo/shaping.hpp"
#include "oracle.hpp"
#include "test_util.hpp"

using namespace apo;
using namespace apo::objective;

namespace {

// A group whose three policies coincide: ratios 1, KL 0.
RolloutGroup identity_group(Rng& rng, int group_size) {
  std::vector<Trajectory> trs;
  for (int i = 0; i < group_size; ++i) {
    Trajectory tr = testutil::random_trajectory(rng, 3, 12);
    tr.logp_old = tr.logp_current;
    tr.logp_ref = tr.logp_current;
    trs.push_back(std::move(tr));
  }
  return make_group(testutil::dummy_task(), std::move(trs), 0.5);
}

ShapedAdvantages uniform_shape(const RolloutGroup& g, double advantage,
                               double kl_weight) {
  ShapedAdvantages s;
  for (const Trajectory& tr : g.trajectories) {
    s.per_token_advantage.emplace_back(tr.length(), advantage);
    s.kl_weight.push_back(kl_weight);
  }
  return s;
}

bool near_clip_kink(const RolloutGroup& g, double eps, double margin) {
  for (const Trajectory& tr : g.trajectories) {
    for (int t = 0; t < tr.length(); ++t) {
      const double ratio = std::exp(tr.logp_current[t] - tr.logp_old[t]);
      if (std::abs(ratio - (1.0 - eps)) < margin ||
          std::abs(ratio - (1.0 + eps)) < margin) {
        return true;
      }
    }
  }
  return false;
}

}  // namespace

TEST_CASE("importance ratio spot values") {
  CHECK(importance_ratio(-2.0, -2.0) == 1.0);
  CHECK(importance_ratio(-1.0, -2.0) ==
        doctest::Approx(2.7182818284590451).epsilon(1e-15));
  CHECK(importance_ratio(-3.0, -2.0) ==
        doctest::Approx(0.36787944117144233).epsilon(1e-15));
}

TEST_CASE("token kl estimator spot values and non-negativity") {
  CHECK(token_kl(-1.5, -1.5) == 0.0);
  // delta = logp_ref - logp_current = 1
  CHECK(token_kl(-2.0, -1.0) ==
        doctest::Approx(0.71828182845904509).epsilon(1e-15));
  Rng rng(7);
  for (int i = 0; i < 100000; ++i) {
    const double a = -8.0 * rng.next_unit();
    const double b = -8.0 * rng.next_unit();
    const double kl = token_kl(a, b);
    CHECK(kl >= 0.0);
    if (a == b) CHECK(kl == 0.0);
  }
}

TEST_CASE("identity group: surrogate is the group mean of advantages") {
  Rng rng(4);
  const RolloutGroup g = identity_group(rng, 4);
  const ShapedAdvantages s = uniform_shape(g, 0.0, 0.04);
  // Distinct per-trajectory advantages, broadcast per token.
  ShapedAdvantages shaped = s;
  const std::vector<double> advs = {1.5, -0.5, 0.25, -1.25};
  for (int i = 0; i < 4; ++i) {
    shaped.per_token_advantage[i].assign(g.trajectories[i].length(), advs[i]);
  }
  const LossBreakdown loss = group_loss(g, shaped, TrainConfig{});
  const double expected = (1.5 - 0.5 + 0.25 - 1.25) / 4.0;
  CHECK(loss.surrogate_term == doctest::Approx(expected).epsilon(1e-15));
  CHECK(loss.kl_term == 0.0);
  CHECK(loss.total == doctest::Approx(-expected).epsilon(1e-15));
  CHECK(loss.clip_fraction == 0.0);
}

TEST_CASE("loss breakdown satisfies its sign identity") {
  Rng rng(5);
  TrainConfig config;
  for (int trial = 0; trial < 50; ++trial) {
    const RolloutGroup g = testutil::random_group(rng, 4, 2, 20, 0.5);
    if (g.difficulty == 0.0) continue;
    const ShapedAdvantages shaped = shaping::shape_group(g, config);
    const LossBreakdown loss = group_loss(g, shaped, config);
    CHECK(loss.total == -(loss.surrogate_term - loss.kl_term));
    CHECK(loss.clip_fraction >= 0.0);
    CHECK(loss.clip_fraction <= 1.0);
  }
}

TEST_CASE("clipping picks the documented branch") {
  // Two single-token trajectories; the second is inert (zero advantage).
  Rng rng(6);
  RolloutGroup g = identity_group(rng, 2);
  TrainConfig config;  // eps = 0.2

  // ratio 1.5 with positive advantage: min(1.5A, 1.2A) = 1.2A, clipped.
  g.trajectories[0].logp_old[0] = -2.0;
  g.trajectories[0].logp_current[0] = -2.0 + std::log(1.5);
  ShapedAdvantages shaped = uniform_shape(g, 0.0, 0.0);
  shaped.per_token_advantage[0].assign(g.trajectories[0].length(), 0.0);
  shaped.per_token_advantage[0][0] = 2.0;

  // Isolate token 0 of trajectory 0 by zeroing everything else.
  const LossBreakdown up = group_loss(g, shaped, config);
  const double len0 = g.trajectories[0].length();
  CHECK(up.surrogate_term ==
        doctest::Approx(1.2 * 2.0 / len0 / 2.0).epsilon(1e-12));
  CHECK(up.clip_fraction > 0.0);

  // ratio 0.5 with negative advantage: min(0.5A, 0.8A) = 0.8A, clipped.
  g.trajectories[0].logp_current[0] = -2.0 + std::log(0.5);
  shaped.per_token_advantage[0][0] = -1.0;
  const LossBreakdown down = group_loss(g, shaped, config);
  CHECK(down.surrogate_term ==
        doctest::Approx(0.8 * -1.0 / len0 / 2.0).epsilon(1e-12));

  // ratio 0.5 with positive advantage: min(0.5A, 0.8A) = 0.5A, unclipped.
  shaped.per_token_advantage[0][0] = 1.0;
  const LossBreakdown raw = group_loss(g, shaped, config);
  CHECK(raw.surrogate_term ==
        doctest::Approx(0.5 * 1.0 / len0 / 2.0).epsilon(1e-12));
  CHECK(raw.clip_fraction == 0.0);
}

TEST_CASE("group loss is invariant under trajectory permutation") {
  Rng rng(8);
  TrainConfig config;
  const RolloutGroup g = testutil::random_group(rng, 6, 2, 25, 0.5);
  if (g.difficulty != 0.0) {
    const ShapedAdvantages shaped = shaping::shape_group(g, config);
    const LossBreakdown base = group_loss(g, shaped, config);

    RolloutGroup permuted = g;
    ShapedAdvantages pshaped = shaped;
    const std::vector<int> perm = {3, 0, 5, 1, 4, 2};
    for (int i = 0; i < 6; ++i) {
      permuted.trajectories[i] = g.trajectories[perm[i]];
      pshaped.per_token_advantage[i] = shaped.per_token_advantage[perm[i]];
      pshaped.kl_weight[i] = shaped.kl_weight[perm[i]];
    }
    const LossBreakdown after = group_loss(permuted, pshaped, config);
    CHECK(after.total == doctest::Approx(base.total).epsilon(1e-12));
    CHECK(after.clip_fraction == base.clip_fraction);
  }
}

TEST_CASE("skipped groups are rejected") {
  Rng rng(2);
  RolloutGroup g = identity_group(rng, 2);
  ShapedAdvantages shaped = uniform_shape(g, 0.0, 0.0);
  shaped.group_skipped = true;
  CHECK_THROWS_AS(group_loss(g, shaped, TrainConfig{}), SkippedGroupError);
  Rng prng(3);
  policy::PolicySnapshot p =
      policy::PolicySnapshot::random_init(32, 4, 16, 0.1, prng);
  CHECK_THROWS_AS(group_loss_gradient(g, shaped, p, TrainConfig{}),
                  SkippedGroupError);
}

TEST_CASE("alpha=1, beta_i=beta reduces bit-exactly to vanilla grpo loss") {
  Rng rng(12);
  TrainConfig apo_config;  // dads+stcr on
  TrainConfig vanilla;
  vanilla.enable_dads = false;
  vanilla.enable_stcr = false;
  for (int trial = 0; trial < 100; ++trial) {
    const RolloutGroup g = testutil::random_group(rng, 8, 1, 40, 0.5);
    if (g.difficulty == 0.0) continue;
    // The APO loss computed on vanilla-shaped advantages must equal the
    // vanilla loss: the extensions only enter through shaping.
    const ShapedAdvantages plain = shaping::shape_group(g, vanilla);
    const LossBreakdown a = group_loss(g, plain, apo_config);
    const LossBreakdown b = group_loss(g, plain, vanilla);
    CHECK(a.total == b.total);
    CHECK(a.surrogate_term == b.surrogate_term);
    CHECK(a.kl_term == b.kl_term);
  }
}

TEST_CASE("zero advantages with zero kl weight give a zero gradient") {
  Rng init_rng(21);
  const policy::PolicySnapshot p = policy::PolicySnapshot::random_init(
      tasks::kVocabSize, 8, 24, 0.2, init_rng, tasks::kEos);
  const TaskInstance task = testutil::dummy_task();
  Rng rng(22);
  const RolloutGroup g =
      testutil::sampled_group(p, p, p, task, 4, 0.5, rng, true);
  const ShapedAdvantages shaped = uniform_shape(g, 0.0, 0.0);
  TrainConfig config;
  const std::vector<double> grad = group_loss_gradient(g, shaped, p, config);
  for (double gj : grad) CHECK(gj == 0.0);
}

TEST_CASE("theta == ref with zero advantages gives zero gradient via kl") {
  Rng init_rng(31);
  const policy::PolicySnapshot p = policy::PolicySnapshot::random_init(
      tasks::kVocabSize, 8, 24, 0.2, init_rng, tasks::kEos);
  const TaskInstance task = testutil::dummy_task();
  Rng rng(32);
  const RolloutGroup g =
      testutil::sampled_group(p, p, p, task, 4, 0.5, rng, true);
  const ShapedAdvantages shaped = uniform_shape(g, 0.0, 0.04);  // beta > 0
  TrainConfig config;
  const std::vector<double> grad = group_loss_gradient(g, shaped, p, config);
  for (double gj : grad) CHECK(gj == 0.0);  // KL gradient vanishes at equality
}

TEST_CASE("analytic gradient matches finite differences on toy instances") {
  TrainConfig config;
  config.epsilon_std = 1e-6;
  int instances_checked = 0;
  uint64_t seed = 0;
  while (instances_checked < 5 && seed < 100) {
    ++seed;
    Rng init_rng(seed);
    policy::PolicySnapshot current = policy::PolicySnapshot::random_init(
        tasks::kVocabSize, 6, 20, 0.2, init_rng, tasks::kEos);
    policy::PolicySnapshot behavior = current;
    // Perturb the behavior policy so ratios move off 1 and clipping engages.
    Rng perturb_rng(seed + 1000);
    for (double& w : behavior.params) {
      w += 0.05 * perturb_rng.next_gaussian();
    }
    policy::PolicySnapshot reference = current;
    for (double& w : reference.params) {
      w += 0.05 * perturb_rng.next_gaussian();
    }
    const TaskInstance task =
        tasks::generate_task({tasks::Family::ModularChain, 0, seed});
    Rng rng(seed + 2000);
    const RolloutGroup g = testutil::sampled_group(
        current, behavior, reference, task, 4, 0.5, rng, true);
    if (g.difficulty == 0.0) continue;
    if (near_clip_kink(g, config.clip_epsilon, 1e-3)) continue;

    const ShapedAdvantages shaped = shaping::shape_group(g, config);
    if (shaped.group_skipped) continue;
    const std::vector<double> analytic =
        group_loss_gradient(g, shaped, current, config);

    const auto loss = [&](std::span<const double> theta) {
      policy::PolicySnapshot q = current;
      q.params.assign(theta.begin(), theta.end());
      RolloutGroup h = g;
      for (Trajectory& tr : h.trajectories) {
        tr.logp_current = policy::score_logprob(q, task, tr.tokens);
      }
      return group_loss(h, shaped, config).total;
    };
    const std::vector<double> numeric =
        oracle::fd_gradient(loss, current.params, 1e-5);

    for (size_t j = 0; j < analytic.size(); ++j) {
      const double denom =
          std::max(std::abs(analytic[j]), std::abs(numeric[j]));
      if (denom > 1e-8) {
        CHECK(std::abs(analytic[j] - numeric[j]) / denom <= 1e-4);
      }
    }
    ++instances_checked;
  }
  CHECK(instances_checked == 5);
}
