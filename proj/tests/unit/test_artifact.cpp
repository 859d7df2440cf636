#include "doctest.h"

#include "flywheel/artifact.hpp"
#include "flywheel/json.hpp"

using namespace flywheel;

namespace {

RewardArtifact make(double sigma = 0.05) {
  RewardArtifact a;
  a.scorer = ScorerModel(RbfParams{{sigma, sigma}, {Anchor{StateVec({0.5, 0.5}), 1.0}, Anchor{StateVec({0.2, 0.7}), 0.5}}},
                         Calibration{0.0, 1.0});
  a.domain = DomainBox::unit(2);
  a.lineage.proposal_id = "root";
  return a;
}

}  // namespace

TEST_CASE("reward composes beta, mapping and score") {
  auto a = make();
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const StateVec s({rng.uniform(), rng.uniform()});
    CHECK(reward(a, s) == a.scorer.score(s));
  }
  a.beta = BetaSchedule{2.0, 0.0};
  a.mapping = MappingParams::identity();
  a.scorer.set_calibration({0.0, 2.0});
  CHECK(reward(a, StateVec({0.5, 0.5})) == doctest::Approx(2.0 * a.scorer.score(StateVec({0.5, 0.5}))));

  a.beta = BetaSchedule{1.0, std::log(2.0)};
  a.mapping = MappingParams::logistic(0.4, 8);
  for (int i = 0; i < 200; ++i) {
    const StateVec s({rng.uniform(), rng.uniform()});
    CHECK(reward(a, s, 1.0) == doctest::Approx(0.5 * reward(a, s)).epsilon(1e-14));
    CHECK(reward(a, s, 0.0) == a.beta.at(0) * apply_mapping(a.mapping, a.scorer.score(s)));
  }
}

TEST_CASE("beta scaling preserves ranking") {
  auto a = make();
  auto b = a;
  b.beta.beta0 = 3.7;
  Rng rng(5);
  std::vector<StateVec> states;
  for (int i = 0; i < 1000; ++i) states.push_back(StateVec({rng.uniform(), rng.uniform()}));
  auto order = [&](const RewardArtifact& x) {
    std::vector<std::size_t> idx(states.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(),
                     [&](auto l, auto r) { return reward(x, states[l]) < reward(x, states[r]); });
    return idx;
  };
  CHECK(order(a) == order(b));
}

TEST_CASE("context gates zero reward where they fire") {
  auto a = make();
  a.gates.push_back(ContextGate{"no-night-center", {{"time", "night"}}, Box{{0.4, 0.4}, {0.6, 0.6}}});
  const StateVec day({0.5, 0.5}, {{"time", "day"}});
  const StateVec night({0.5, 0.5}, {{"time", "night"}});
  CHECK(reward(a, day) > 0.5);
  CHECK(reward(a, night) == 0.0);
  CHECK(ungated_reward(a, night) == reward(a, day));
}

TEST_CASE("states outside the domain are rejected") {
  const auto a = make();
  try {
    (void)reward(a, StateVec({1.5, 0.5}));
    FAIL("expected out_of_domain");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::out_of_domain);
  }
}

TEST_CASE("canonical json is byte-stable and hash-checked") {
  auto a = make();
  a.version = 3;
  const auto text = to_canonical_json(a);
  const auto back = artifact_from_json(text);
  CHECK(back == a);
  CHECK(to_canonical_json(back) == text);

  // Hash ignores the version.
  auto cand = a;
  cand.version.reset();
  CHECK(artifact_hash(cand) == artifact_hash(a));
  CHECK(artifact_hash(make(0.06)) != artifact_hash(make(0.05)));

  auto j = json::parse(text);
  j["beta"]["beta0"] = 5.0;
  try {
    (void)artifact_from_json(j.dump());
    FAIL("expected data error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::data);
  }
  CHECK_THROWS_AS(artifact_from_json("{not json"), Error);
}
