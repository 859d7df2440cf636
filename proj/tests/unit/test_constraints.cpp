#include "doctest.h"

#include <set>

#include "flywheel/constraints.hpp"
#include "flywheel/json.hpp"

using namespace flywheel;

namespace {

RewardArtifact constant_artifact(double raw) {
  RewardArtifact a;
  // Zero-weight anchor: raw score 0 everywhere, calibrated so L = raw's position.
  a.scorer = ScorerModel(RbfParams{{0.1, 0.1}, {Anchor{StateVec({0.5, 0.5}), 0.0}}}, Calibration{-raw, 1.0 - raw});
  a.domain = DomainBox::unit(2);
  return a;
}

}  // namespace

TEST_CASE("violates") {
  CHECK(violates(ConstraintSet{}, StateVec({0.5, 0.5})).empty());
  const ConstraintSet cs({Constraint{"box", ForbiddenBox{{0.4, 0.4}, {0.6, 0.6}, {}}, ""},
                          Constraint{"half", Halfspace{{1.0, 0.0}, 0.5}, ""},
                          Constraint{"cf", Counterfactual{"group", 0.1}, ""}});
  CHECK(violates(cs, StateVec({0.45, 0.5})) == std::vector<std::string>{"box"});
  CHECK(violates(cs, StateVec({0.6, 0.0})) == std::vector<std::string>{"half"});
  CHECK(violates(cs, StateVec({0.55, 0.55})) == std::vector<std::string>{"box", "half"});
  CHECK(violates(cs, StateVec({0.1, 0.1})).empty());
}

TEST_CASE("context-conditioned boxes only fire on matching context") {
  const ConstraintSet cs({Constraint{"night", ForbiddenBox{{0.0, 0.0}, {0.5, 0.5}, {{"time", "night"}}}, ""}});
  CHECK(violates(cs, StateVec({0.2, 0.2}, {{"time", "night"}})) == std::vector<std::string>{"night"});
  CHECK(violates(cs, StateVec({0.2, 0.2}, {{"time", "day"}})).empty());
  CHECK(violates(cs, StateVec({0.2, 0.2})).empty());
  CHECK(cs.gates().size() == 1);
}

TEST_CASE("constraint invariants") {
  CHECK_THROWS_AS(ConstraintSet({Constraint{"a", ForbiddenBox{{0.5}, {0.4}, {}}, ""}}), Error);
  CHECK_THROWS_AS(ConstraintSet({Constraint{"a", Halfspace{{0.0, 0.0}, 1.0}, ""}}), Error);
  CHECK_THROWS_AS(ConstraintSet({Constraint{"a", Counterfactual{"g", 1.5}, ""}}), Error);
  CHECK_THROWS_AS(ConstraintSet({Constraint{"a", Halfspace{{1.0}, 1.0}, ""}, Constraint{"a", Halfspace{{1.0}, 0.0}, ""}}),
                  Error);
}

TEST_CASE("filter_dataset") {
  const auto w = make_world(preset_world("two-ridges", 7));
  const auto d = w.sample_expert(200, 0.2, 7);

  const auto none = filter_dataset(d, ConstraintSet{});
  CHECK(none.kept.states == d.states);
  CHECK(none.rejected.empty());

  const ConstraintSet all({Constraint{"all", ForbiddenBox{{0, 0}, {1, 1}, {}}, ""}});
  try {
    (void)filter_dataset(d, all);
    FAIL("expected empty-kept error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::precondition);
  }

  // Box over the lower ridge; brute-force membership count.
  const ForbiddenBox lower{{0.0, 0.0}, {1.0, 0.5}, {}};
  const ConstraintSet cs({Constraint{"lower", lower, ""}});
  std::size_t inside = 0;
  for (const auto& s : d.states) inside += (s[0] >= 0 && s[0] <= 1 && s[1] >= 0 && s[1] <= 0.5) ? 1 : 0;
  const auto res = filter_dataset(d, cs);
  CHECK(res.rejected.size() == inside);
  CHECK(res.kept.size() + res.rejected.size() == d.size());
  CHECK(inside > 0);
  std::set<std::vector<double>> seen;
  for (const auto& s : res.kept.states) CHECK(seen.insert(s.values).second);
  for (const auto& r : res.rejected) {
    CHECK(seen.insert(r.state.values).second);
    CHECK(r.constraint_ids == std::vector<std::string>{"lower"});
  }
  for (const auto& s : res.kept.states) CHECK(violates(cs, s).empty());
}

TEST_CASE("coverage_audit") {
  const std::vector<StateVec> hold{StateVec({0.1, 0.1}), StateVec({0.3, 0.9}), StateVec({0.7, 0.2})};
  const auto one = coverage_audit(constant_artifact(1.0), hold, 0.5);
  CHECK(one.fraction_covered == 1.0);
  CHECK(one.uncovered.empty());
  const auto zero = coverage_audit(constant_artifact(0.0), hold, 0.5);
  CHECK(zero.fraction_covered == 0.0);
  CHECK(zero.uncovered.size() == 3);
  CHECK_THROWS_AS(coverage_audit(constant_artifact(0.0), {}, 0.5), Error);
  CHECK_THROWS_AS(coverage_audit(constant_artifact(0.0), hold, 1.0), Error);

  // Monotone in the threshold on a nontrivial artifact.
  RewardArtifact a = constant_artifact(0.0);
  a.scorer = ScorerModel(RbfParams{{0.2, 0.2}, {Anchor{StateVec({0.2, 0.2}), 1.0}}}, Calibration{0.0, 1.0});
  Rng rng(1);
  std::vector<StateVec> many;
  for (int i = 0; i < 300; ++i) many.push_back(StateVec({rng.uniform(), rng.uniform()}));
  double prev = 1.0;
  for (int k = 1; k < 100; ++k) {
    const auto rep = coverage_audit(a, many, k / 100.0);
    CHECK(rep.fraction_covered <= prev);
    CHECK(rep.uncovered.size() == static_cast<std::size_t>(std::llround((1 - rep.fraction_covered) * many.size())));
    prev = rep.fraction_covered;
  }
}

TEST_CASE("counterfactual_check") {
  auto a = constant_artifact(0.8);
  const std::vector<StateVec> probes{StateVec({0.2, 0.2}, {{"g", "a"}}), StateVec({0.8, 0.8}, {{"g", "b"}})};
  const auto blind = counterfactual_check(a, probes, "g", 0.0);
  CHECK(blind.pass);
  for (const auto& d : blind.deltas) CHECK(d.max_delta == 0.0);

  a.gates.push_back(ContextGate{"gate", {{"g", "b"}}, Box{{0.0, 0.0}, {0.5, 0.5}}});
  const auto gated = counterfactual_check(a, probes, "g", 0.1);
  CHECK_FALSE(gated.pass);
  REQUIRE(gated.flagged.size() == 1);
  CHECK(gated.flagged[0] == 0);
  CHECK(gated.deltas[0].max_delta == doctest::Approx(reward(a, StateVec({0.2, 0.2}, {{"g", "a"}}))));

  const std::vector<StateVec> bare{StateVec({0.2, 0.2})};
  CHECK_THROWS_AS(counterfactual_check(a, bare, "g", 0.1), Error);
}

TEST_CASE("constraint documents round trip and lint") {
  const ConstraintSet cs({Constraint{"box", ForbiddenBox{{0.4, 0.4}, {0.6, 0.6}, {{"t", "n"}}}, "no center at night"},
                          Constraint{"half", Halfspace{{1.0, 0.0}, 0.9}, ""}});
  const auto text = cs.to_json();
  const auto back = ConstraintSet::from_json(text);
  CHECK(back.to_json() == text);
  CHECK(back.hash() == cs.hash());
  CHECK(ConstraintSet{}.hash() != cs.hash());

  CHECK(lint_constraints(text, 2).ok());
  CHECK_FALSE(lint_constraints(text, 3).ok());
  CHECK_FALSE(lint_constraints("{\"constraints\":[{\"id\":\"x\",\"kind\":\"blob\"}]}").ok());
  CHECK_FALSE(lint_constraints("not json").ok());
  CHECK_THROWS_AS(ConstraintSet::from_json("{}"), Error);
}
