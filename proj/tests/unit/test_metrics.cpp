#include <doctest.h>

#include <cmath>

#include "geoagent/errors.hpp"
#include "geoagent/metrics.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace geoagent;

namespace {
LabelMask row(std::vector<std::uint8_t> v, int k) {
  LabelMask m(1, static_cast<int>(v.size()), k);
  m.data = std::move(v);
  return m;
}
}  // namespace

TEST_CASE("confusion counts") {
  const ConfusionMatrix cm = confusion(row({0, 0, 1, 1}, 2), row({0, 1, 1, 1}, 2), 2);
  CHECK(cm.at(0, 0) == 1);
  CHECK(cm.at(0, 1) == 1);
  CHECK(cm.at(1, 0) == 0);
  CHECK(cm.at(1, 1) == 2);
  CHECK(cm.total() == 4);
  CHECK(confusion(LabelMask(0, 0, 3), LabelMask(0, 0, 3), 3).total() == 0);
  CHECK_THROWS_AS(confusion(row({0, 1}, 2), row({0}, 2), 2), DimensionError);
  CHECK_THROWS_AS(confusion(row({0, 2}, 2), row({0, 1}, 2), 2), DimensionError);
}

TEST_CASE("miou and mf1 on the hand example") {
  ConfusionMatrix cm(2);
  cm.add(0, 0, 1);
  cm.add(0, 1, 1);
  cm.add(1, 1, 2);
  CHECK(miou(cm) == doctest::Approx((0.5 + 2.0 / 3.0) / 2.0).epsilon(1e-15));
  CHECK(mf1(cm) == doctest::Approx((2.0 / 3.0 + 0.8) / 2.0).epsilon(1e-15));
  CHECK(score(cm) == doctest::Approx(1.3166666666666667).epsilon(1e-15));
}

TEST_CASE("absent classes are excluded") {
  const LabelMask y = row({2, 2, 2}, 4);
  CHECK(miou(confusion(y, y, 4)) == 1.0);
  CHECK(score(y, y) == 2.0);
  CHECK(score(row({0, 0}, 2), row({1, 1}, 2)) == 0.0);
  CHECK_THROWS_AS(miou(ConfusionMatrix(3)), UndefinedScoreError);
}

TEST_CASE("metrics agree with the set oracle") {
  nn::Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const int h = nn::uniform_int(rng, 1, 12), w = nn::uniform_int(rng, 1, 12), k = nn::uniform_int(rng, 1, 5);
    const LabelMask y = testutil::random_labels(rng, h, w, k);
    const LabelMask p = testutil::random_labels(rng, h, w, k);
    const auto [oi, of] = testutil::brute_force_miou_mf1(y, p, k);
    const ConfusionMatrix cm = confusion(y, p, k);
    REQUIRE(std::abs(miou(cm) - oi) <= 1e-12);
    REQUIRE(std::abs(mf1(cm) - of) <= 1e-12);
  }
}

TEST_CASE("score is invariant under relabeling both masks") {
  nn::Rng rng(22);
  const std::vector<std::uint8_t> perm = {2, 0, 3, 1};
  for (int trial = 0; trial < 30; ++trial) {
    LabelMask y = testutil::random_labels(rng, 6, 7, 4), p = testutil::random_labels(rng, 6, 7, 4);
    const double before = score(y, p);
    for (auto& v : y.data) v = perm[v];
    for (auto& v : p.data) v = perm[v];
    CHECK(std::abs(score(y, p) - before) < 1e-12);
  }
}

TEST_CASE("patch and map rewards") {
  nn::Rng rng(23);
  const LabelMask y = testutil::random_labels(rng, 8, 8, 3);
  const LabelMask a = testutil::random_labels(rng, 8, 8, 3);
  const LabelMask b = testutil::random_labels(rng, 8, 8, 3);
  CHECK(patch_reward(y, b, b) == 0.0);
  CHECK(patch_reward(y, a, b) == -patch_reward(y, b, a));
  CHECK(patch_reward(y, y, a) == doctest::Approx(2.0 - score(y, a)));
  CHECK(patch_reward(y, a, y) < 0.0);

  CHECK(map_reward(y, b, b, 9) == 0.0);
  const double gain = score(y, a) - score(y, b);
  CHECK(map_reward(y, a, b, 4) == doctest::Approx(4.0 * gain));
  CHECK((map_reward(y, a, b, 4) > 0) == (gain > 0));

  RewardRecord r{3, 2, 0.25, 0.5};
  CHECK(r.total() == 0.75);
  r.map_bonus.reset();
  CHECK(r.total() == 0.25);
}
