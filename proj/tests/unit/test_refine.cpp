#include "doctest.h"

#include "flywheel/json.hpp"
#include "flywheel/orchestrator.hpp"
#include "flywheel/refine.hpp"

using namespace flywheel;

namespace {

const Session& reference() {
  static const Session s = create_session(SessionConfig{});
  return s;
}

struct Fixture {
  SFKB kb{DomainBox::unit(2), 256};
  std::vector<FlawCluster> clusters;

  // Flaws at the given states, clustered with a wide radius and labeled.
  Fixture(const std::vector<std::vector<double>>& states, Verdict verdict, double rho = 0.2) {
    for (const auto& x : states) {
      FlawRecord f;
      f.state = StateVec(x);
      f.reward_at_discovery = 0.8;
      kb.record_flaw(f);
    }
    std::vector<const FlawRecord*> ptrs;
    for (const auto& f : kb.flaws()) ptrs.push_back(&f);
    clusters = cluster_flaws(ptrs, rho);
    for (const auto& c : clusters) propagate_label(Label{verdict, Author::human, "", 1}, c, kb, 0.0);
  }
};

RefinementProposal noop_patch(const RewardArtifact& a) {
  RefinementProposal p;
  p.id = "noop";
  p.region = Disk{{0.5, 0.5}, 0.05};
  (void)a;
  return p;
}

}  // namespace

TEST_CASE("agent patch on a confirmed singleton") {
  const auto& art = reference().store.head_artifact();
  Fixture fx({{0.5, 0.5}}, Verdict::confirmed);
  const auto p = propose_refinement(fx.clusters[0], fx.kb, art, ActionKind::patch_negative, Author::agent, "p1");
  REQUIRE(p.states.size() == 1);
  CHECK(p.states[0] == StateVec({0.5, 0.5}));
  CHECK(p.weight == -1.0);
  CHECK(p.region.radius == kMinTargetRadius);
  CHECK(p.cluster == fx.clusters[0].id);
}

TEST_CASE("benign clusters cannot be refined") {
  Fixture fx({{0.5, 0.5}}, Verdict::benign);
  try {
    (void)propose_refinement(fx.clusters[0], fx.kb, reference().store.head_artifact(), ActionKind::patch_negative,
                             Author::agent, "p1");
    FAIL("expected precondition error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::precondition);
  }
  CHECK_THROWS_AS(action_kind_from_string("bogus"), Error);
}

TEST_CASE("agent sculpt suppresses below the member median") {
  const auto& art = reference().store.head_artifact();
  const std::vector<std::vector<double>> pts{{0.3, 0.5}, {0.35, 0.5}, {0.4, 0.5}, {0.45, 0.49}, {0.5, 0.51}};
  Fixture fx(pts, Verdict::confirmed, 0.3);
  REQUIRE(fx.clusters.size() == 1);
  REQUIRE(fx.clusters[0].members.size() == 5);
  const auto p = propose_refinement(fx.clusters[0], fx.kb, art, ActionKind::sculpt, Author::agent, "p1");
  std::vector<double> ls;
  for (const auto& x : pts) ls.push_back(art.scorer.score(StateVec(x)));
  std::sort(ls.begin(), ls.end());
  REQUIRE(p.directive);
  CHECK(std::get<SuppressBelow>(*p.directive).a == ls[2]);
  // Region is the bounding ball around the centroid, scaled by 1.5.
  double r = 0;
  for (const auto& x : pts) r = std::max(r, distance(StateVec(x), fx.clusters[0].centroid));
  CHECK(p.region.radius == doctest::Approx(std::max(1.5 * r, kMinTargetRadius)));
}

TEST_CASE("human proposals need explicit parameters") {
  Fixture fx({{0.5, 0.5}}, Verdict::confirmed);
  const auto& art = reference().store.head_artifact();
  CHECK_THROWS_AS(propose_refinement(fx.clusters[0], fx.kb, art, ActionKind::sculpt, Author::human, "p1"), Error);
  HumanEdit e;
  e.directive = Sharpen{0.6, 10};
  const auto p = propose_refinement(fx.clusters[0], fx.kb, art, ActionKind::sculpt, Author::human, "p1", e);
  CHECK(p.author == Author::human);
  HumanEdit seed;
  seed.states = {StateVec({0.4, 0.4})};
  seed.weight = 0.5;
  CHECK(propose_refinement(fx.clusters[0], fx.kb, art, ActionKind::seed_positive, Author::human, "p2", seed).weight ==
        0.5);
  HumanEdit bad;
  bad.states = {StateVec({1.4, 0.4})};
  CHECK_THROWS_AS(propose_refinement(fx.clusters[0], fx.kb, art, ActionKind::patch_negative, Author::human, "p3", bad),
                  Error);
}

TEST_CASE("apply_refinement never touches the parent") {
  const auto parent = reference().store.head_artifact();
  const auto before = to_canonical_json(parent);

  RefinementProposal sc = noop_patch(parent);
  sc.action = ActionKind::sculpt;
  sc.directive = SuppressBelow{0.6};
  const auto c1 = apply_refinement(parent, sc);
  CHECK(c1.scorer == parent.scorer);
  CHECK(c1.mapping != parent.mapping);
  CHECK(apply_mapping(c1.mapping, 0.5) == 0.0);
  CHECK_FALSE(c1.version);
  CHECK(c1.lineage.parent == parent.version);
  CHECK(c1.lineage.proposal_id == "noop");

  RefinementProposal pt = noop_patch(parent);
  pt.states = {StateVec({0.5, 0.5}), StateVec({0.6, 0.5})};
  const auto c2 = apply_refinement(parent, pt);
  CHECK(c2.scorer.rbf().anchors.size() == parent.scorer.rbf().anchors.size() + 2);
  CHECK(to_canonical_json(parent) == before);
}

TEST_CASE("patching a planted bump lowers its reward") {
  SessionConfig cfg;
  cfg.world = "planted-bump";
  for (int i = 0; i < 40; ++i) cfg.plant.push_back(Anchor{StateVec({0.75, 0.7}), 1.0});
  const auto s = create_session(cfg);
  const auto& parent = s.store.head_artifact();
  RefinementProposal p = noop_patch(parent);
  p.states = {StateVec({0.75, 0.7})};
  const auto cand = apply_refinement(parent, p);
  CHECK(reward(cand, StateVec({0.75, 0.7})) < reward(parent, StateVec({0.75, 0.7})));
}

TEST_CASE("recon patches refit instead of inserting anchors") {
  SessionConfig cfg;
  cfg.scorer = ScorerKind::recon;
  cfg.epochs = 200;
  cfg.ensemble_size = 2;
  const auto s = create_session(cfg);
  const auto& parent = s.store.head_artifact();
  RefinementProposal p = noop_patch(parent);
  p.states = {StateVec({0.5, 0.5})};
  CHECK_THROWS_AS(apply_refinement(parent, p), Error);
  const auto ctx = s.refit_context();
  const auto a = apply_refinement(parent, p, &ctx);
  const auto b = apply_refinement(parent, p, &ctx);
  CHECK(to_canonical_json(a) == to_canonical_json(b));
  CHECK(a.scorer.recon().patch_negatives.size() == 1);
}

TEST_CASE("verify") {
  const auto& s = reference();
  const auto& parent = s.store.head_artifact();
  VerifyConfig vc;
  vc.seed = 3;

  // Identity candidate: zero drift.
  const auto noop = noop_patch(parent);
  const auto same = apply_refinement(parent, noop);
  const auto r0 = verify(same, noop, s.reglib, s.constraints, s.judge(), vc);
  CHECK(r0.max_drift == 0.0);
  CHECK(r0.pass == (r0.local_flaws == 0 && r0.min_good >= 0.5 && r0.max_bad <= 0.3));
  CHECK(r0.candidate_hash == artifact_hash(same));

  // Over-aggressive sculpt collapses expert rewards.
  RefinementProposal harsh = noop;
  harsh.id = "harsh";
  harsh.action = ActionKind::sculpt;
  harsh.directive = SuppressBelow{0.99};
  const auto r1 = verify(apply_refinement(parent, harsh), harsh, s.reglib, s.constraints, s.judge(), vc);
  CHECK_FALSE(r1.pass);
  CHECK(r1.min_good < 0.5);

  // Deterministic per seed.
  const auto again = verify(same, noop, s.reglib, s.constraints, s.judge(), vc);
  CHECK(again.to_json().dump() == r0.to_json().dump());
  CHECK(VerificationResult::from_json(r0.to_json()).to_json() == r0.to_json());
}

TEST_CASE("a good patch on the planted bump passes verification") {
  SessionConfig cfg;
  cfg.world = "planted-bump";
  const auto base = create_session(cfg);
  const auto cal = base.store.head_artifact().scorer.calibration();
  const int n = static_cast<int>(std::ceil(cal.lo + 0.8 * (cal.hi - cal.lo)));
  for (int i = 0; i < n; ++i) cfg.plant.push_back(Anchor{StateVec({0.75, 0.7}), 1.0});
  auto s = create_session(cfg);
  const auto reps = run_until_clean(s, 3, 7);
  REQUIRE_FALSE(reps.empty());
  CHECK(reps.front().proposals_merged >= 1);
  for (const auto& [id, v] : s.store.versions()) {
    if (!v.verification) continue;
    CHECK(v.verification->pass);
    CHECK(v.verification->local_flaws == 0);
    CHECK(v.verification->max_drift <= cfg.eps_reg);
  }
}

TEST_CASE("merge gate, rollback and lineage") {
  const auto& s = reference();
  ArtifactStore store(s.store.head_artifact());
  const auto root_bytes = to_canonical_json(store.at(0));
  const auto& parent = store.head_artifact();

  RefinementProposal p = noop_patch(parent);
  p.id = "p1";
  p.states = {StateVec({0.5, 0.5})};
  const auto cand = apply_refinement(parent, p);
  VerificationResult ok;
  ok.proposal_id = "p1";
  ok.candidate_hash = artifact_hash(cand);
  ok.pass = true;

  VerificationResult failed = ok;
  failed.pass = false;
  try {
    store.merge(cand, failed);
    FAIL("expected refusal");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::verification);
  }
  CHECK(store.versions().size() == 1);

  VerificationResult stale = ok;
  stale.candidate_hash = "0000000000000000";
  CHECK_THROWS_AS(store.merge(cand, stale), Error);
  auto tampered = cand;
  tampered.beta.beta0 = 2.0;
  CHECK_THROWS_AS(store.merge(tampered, ok), Error);
  CHECK(store.versions().size() == 1);

  const auto v1 = store.merge(cand, ok);
  CHECK(v1 == 1);
  CHECK(store.head() == 1);
  CHECK(to_canonical_json(store.at(0)) == root_bytes);
  store.check_invariants();

  // A candidate built on the old head is stale once the head moves.
  try {
    store.merge(cand, ok);
    FAIL("expected conflict");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::conflict);
  }

  CHECK(to_canonical_json(store.rollback(0)) == root_bytes);
  const auto cand2 = apply_refinement(store.head_artifact(), p);
  VerificationResult ok2 = ok;
  ok2.candidate_hash = artifact_hash(cand2);
  const auto v2 = store.merge(cand2, ok2);
  CHECK(store.children(0) == std::vector<std::uint64_t>{v1, v2});
  CHECK(store.at(v2).lineage.parent == 0u);
  store.check_invariants();
  try {
    store.rollback(99);
    FAIL("expected not_found");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::not_found);
  }

  // Lineage survives a round trip.
  std::map<std::uint64_t, RewardArtifact> arts;
  for (const auto& [id, v] : store.versions()) arts[id] = v.artifact;
  const auto back = ArtifactStore::from_parts(store.lineage_json(), arts);
  CHECK(back.lineage_json() == store.lineage_json());
  arts[v2].beta.beta0 = 3.0;
  CHECK_THROWS_AS(ArtifactStore::from_parts(store.lineage_json(), arts), Error);
}

TEST_CASE("regression library") {
  const auto& s = reference();
  auto lib = s.reglib;
  CHECK(lib.good.size() == lib.good_baseline.size());
  for (double g : lib.root_baseline) CHECK(g >= lib.theta_good);
  const auto n = lib.bad.size();
  lib.add_bad({lib.good.front(), StateVec({0.5, 0.5}), StateVec({0.5, 0.5})});
  CHECK(lib.bad.size() == n + 1);
  CHECK(lib.cumulative_drift(s.store.head_artifact()) == 0.0);
  CHECK(RegressionLibrary::from_json(lib.to_json()).to_json() == lib.to_json());
}

TEST_CASE("proposal json round trip") {
  RefinementProposal p;
  p.id = "p7";
  p.action = ActionKind::sculpt;
  p.directive = Sharpen{0.4, 9};
  p.region = Disk{{0.2, 0.3}, 0.1};
  p.scale = 0.2;
  p.targets = {StateVec({0.2, 0.3})};
  p.cluster = 4;
  const json j = p;
  CHECK(json(j.get<RefinementProposal>()) == j);
}
