#include "flywheel/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "flywheel/json.hpp"

namespace flywheel {

namespace {

// Stream tags for seeds derived from the session seed.
constexpr std::uint64_t kNegTrainStream = 1;
constexpr std::uint64_t kNegHoldoutStream = 2;
constexpr std::uint64_t kMetricsStream = 0x6d63;

ProbeMass to_probe(const MassEstimate& m) { return ProbeMass{m.mean, m.std_error}; }

json probe_json(const ProbeMass& p) { return json{{"mean", p.mean}, {"std_error", p.std_error}}; }

const RefinementProposal& add_proposal(Session& s, RefinementProposal p) {
  p.validate(s.store.head_artifact().domain);
  s.proposals.push_back(std::move(p));
  return s.proposals.back();
}

std::string next_proposal_id(const Session& s) { return "p" + std::to_string(s.proposals.size() + 1); }

// Unsafe states in the verification ball scoring above the agent floor.
std::vector<StateVec> sweep_region(const Session& s, const RewardArtifact& cand, const RefinementProposal& p,
                                   std::uint64_t seed) {
  RedTeamConfig rc;
  rc.strategy = RedTeamStrategy::random;
  rc.budget = s.config.verify_budget;
  rc.seed = seed;
  rc.theta_high = s.config.agent_floor;
  rc.region = Disk{p.region.center, 2.0 * p.region.radius};
  rc.gap_seeding = false;
  const SFKB scratch(cand.domain, 1);
  std::vector<StateVec> out;
  for (const auto& f : red_team_search(cand, s.constraints, s.judge(), rc, scratch).flaws) {
    const bool near = std::any_of(out.begin(), out.end(), [&](const StateVec& x) { return distance(x, f.state) < 0.01; });
    if (!near && out.size() < 256) out.push_back(f.state);
  }
  return out;
}

// Patch first; feed local red-team finds back into the patch; sculpt last.
bool fix_cluster(Session& s, std::uint64_t cluster_id, std::uint64_t seed, CycleReport& report) {
  const auto* p = &propose(s, cluster_id, ActionKind::patch_negative, Author::agent);
  ++report.proposals_made;
  for (std::size_t round = 0;; ++round) {
    const auto& r = verify_proposal(s, p->id, Rng::derive(seed, round));
    if (r.pass) {
      report.merged_versions.push_back(merge_proposal(s, p->id));
      ++report.proposals_merged;
      return true;
    }
    const bool regressed = r.max_drift > s.reglib.eps_reg || r.min_good < s.reglib.theta_good;
    if (regressed || round + 1 >= s.config.patch_rounds) break;
    // Stack another anchor on targets still above theta_bad, and sweep the
    // verification ball for unsafe states above the agent floor.
    const auto& cand = s.verified.at(p->id).candidate;
    std::vector<StateVec> extra;
    for (const auto& t : p->targets) {
      if (reward(cand, t) > s.reglib.theta_bad) extra.push_back(t);
    }
    const auto swept = sweep_region(s, cand, *p, Rng::derive(seed, 500 + round));
    if (r.local_flaw_states.empty() && extra.empty() && swept.empty()) break;
    RefinementProposal grown = *p;
    grown.id = next_proposal_id(s);
    extra.insert(extra.end(), r.local_flaw_states.begin(), r.local_flaw_states.end());
    extra.insert(extra.end(), swept.begin(), swept.end());
    grown.states.insert(grown.states.end(), extra.begin(), extra.end());
    grown.targets.insert(grown.targets.end(), r.local_flaw_states.begin(), r.local_flaw_states.end());
    grown.targets.insert(grown.targets.end(), swept.begin(), swept.end());
    p = &add_proposal(s, std::move(grown));
    ++report.proposals_made;
  }

  const auto& sc = propose(s, cluster_id, ActionKind::sculpt, Author::agent);
  ++report.proposals_made;
  const auto& r = verify_proposal(s, sc.id, Rng::derive(seed, 1000));
  if (!r.pass) return false;
  report.merged_versions.push_back(merge_proposal(s, sc.id));
  ++report.proposals_merged;
  return true;
}

}  // namespace

const char* to_string(CycleMode m) { return m == CycleMode::autonomous ? "autonomous" : "interactive"; }

// ---------------------------------------------------------------------------

void SessionConfig::validate() const {
  require(n_expert >= 10, ErrorCode::usage, "n_expert must be >= 10");
  require(holdout_frac > 0.0 && holdout_frac <= 0.5, ErrorCode::usage, "holdout_frac must lie in (0, 0.5]");
  require(n_negatives >= 1, ErrorCode::usage, "n_negatives must be >= 1");
  require(theta_high > 0.0 && theta_high <= 1.0, ErrorCode::usage, "theta_high must lie in (0, 1]");
  require(rho_cluster > 0.0 && rho_prop >= 0.0, ErrorCode::usage, "cluster radii must be positive");
  require(audit_budget >= 3, ErrorCode::usage, "audit_budget must be >= 3");
  require(verify_budget >= 1, ErrorCode::usage, "verify_budget must be >= 1");
  require(mc_samples >= 100, ErrorCode::usage, "mc_samples must be >= 100");
  require(coverage_resolution >= 1, ErrorCode::usage, "coverage_resolution must be >= 1");
  require(eps_reg >= 0.0 && theta_bad < theta_good, ErrorCode::usage, "regression tolerances are inconsistent");
  require(patch_rounds >= 1, ErrorCode::usage, "patch_rounds must be >= 1");
  require(agent_floor > 0.0 && agent_floor <= theta_bad, ErrorCode::usage, "agent_floor must lie in (0, theta_bad]");
  require(ensemble_size >= 2, ErrorCode::usage, "ensemble_size must be >= 2");
}

json SessionConfig::to_json() const {
  json j{{"world", world},
         {"seed", seed},
         {"n_expert", n_expert},
         {"holdout_frac", holdout_frac},
         {"scorer", flywheel::to_string(scorer)},
         {"n_negatives", n_negatives},
         {"negatives", flywheel::to_string(negatives)},
         {"plant", plant},
         {"theta_high", theta_high},
         {"u_gap", u_gap},
         {"rho_cluster", rho_cluster},
         {"rho_prop", rho_prop},
         {"audit_budget", audit_budget},
         {"verify_budget", verify_budget},
         {"mc_samples", mc_samples},
         {"coverage_resolution", coverage_resolution},
         {"eps_reg", eps_reg},
         {"theta_good", theta_good},
         {"theta_bad", theta_bad},
         {"patch_rounds", patch_rounds},
         {"agent_floor", agent_floor},
         {"ensemble_size", ensemble_size},
         {"epochs", epochs}};
  if (world_spec) j["world_spec"] = *world_spec;
  return j;
}

SessionConfig SessionConfig::from_json(const json& j) {
  require(j.is_object(), ErrorCode::usage, "session config must be a JSON object");
  SessionConfig c;
  // Every key is optional; unknown keys are refused so typos surface.
  static const std::vector<std::string> known{
      "world",       "world_spec",  "seed",          "n_expert",     "holdout_frac",        "scorer",
      "n_negatives", "negatives",   "plant",         "theta_high",   "u_gap",               "rho_cluster",
      "rho_prop",    "audit_budget", "verify_budget", "mc_samples",  "coverage_resolution", "eps_reg",
      "theta_good",  "theta_bad",   "patch_rounds",  "agent_floor", "ensemble_size", "epochs"};
  for (const auto& [k, v] : j.items()) {
    require(std::find(known.begin(), known.end(), k) != known.end(), ErrorCode::usage,
            "unknown session config key '" + k + "'");
  }
  try {
    c.world = j.value("world", c.world);
    if (j.contains("world_spec")) c.world_spec = j.at("world_spec").get<WorldSpec>();
    c.seed = j.value("seed", c.seed);
    c.n_expert = j.value("n_expert", c.n_expert);
    c.holdout_frac = j.value("holdout_frac", c.holdout_frac);
    if (j.contains("scorer")) c.scorer = scorer_kind_from_string(j.at("scorer").get<std::string>());
    c.n_negatives = j.value("n_negatives", c.n_negatives);
    if (j.contains("negatives")) c.negatives = negative_strategy_from_string(j.at("negatives").get<std::string>());
    if (j.contains("plant")) c.plant = j.at("plant").get<std::vector<Anchor>>();
    c.theta_high = j.value("theta_high", c.theta_high);
    c.u_gap = j.value("u_gap", c.u_gap);
    c.rho_cluster = j.value("rho_cluster", c.rho_cluster);
    c.rho_prop = j.value("rho_prop", 2.0 * c.rho_cluster);
    c.audit_budget = j.value("audit_budget", c.audit_budget);
    c.verify_budget = j.value("verify_budget", c.verify_budget);
    c.mc_samples = j.value("mc_samples", c.mc_samples);
    c.coverage_resolution = j.value("coverage_resolution", c.coverage_resolution);
    c.eps_reg = j.value("eps_reg", c.eps_reg);
    c.theta_good = j.value("theta_good", c.theta_good);
    c.theta_bad = j.value("theta_bad", c.theta_bad);
    c.patch_rounds = j.value("patch_rounds", c.patch_rounds);
    c.agent_floor = j.value("agent_floor", c.agent_floor);
    c.ensemble_size = j.value("ensemble_size", c.ensemble_size);
    c.epochs = j.value("epochs", c.epochs);
  } catch (const json::exception& e) {
    fail(ErrorCode::usage, std::string("bad session config: ") + e.what());
  }
  c.validate();
  return c;
}

json Metrics::to_json() const {
  json probes_j = json::object();
  for (const auto& [name, p] : probes) probes_j[name] = probe_json(p);
  return json{{"unsafe_mass", probe_json(unsafe_mass)},
              {"probes", probes_j},
              {"expert_fidelity", expert_fidelity},
              {"holdout_mean", holdout_mean},
              {"cumulative_drift", cumulative_drift},
              {"open_flaws", open_flaws},
              {"head", head},
              {"sfkb_version", sfkb_version}};
}

json CycleReport::to_json(bool with_timing) const {
  json j{{"cycle", cycle},
         {"status", status},
         {"flaws_found", flaws_found},
         {"candidates", candidates},
         {"carryover", carryover},
         {"flaws_resolved", flaws_resolved},
         {"labels", labels},
         {"clusters", clusters},
         {"proposals_made", proposals_made},
         {"proposals_merged", proposals_merged},
         {"merged_versions", merged_versions},
         {"before", before.to_json()},
         {"after", after.to_json()},
         {"seed", seed},
         {"alerts", alerts}};
  if (with_timing) j["wall_seconds"] = wall_seconds;
  return j;
}

// ---------------------------------------------------------------------------

const ToyWorld& Session::toyworld() const {
  require(world.has_value(), ErrorCode::precondition, "session has no world");
  return *world;
}

Judge Session::judge() const {
  const ToyWorld* w = &toyworld();
  return [w](const StateVec& s) { return !w->is_safe(s); };
}

RefitContext Session::refit_context() const {
  TrainConfig tc;
  tc.seed = config.seed;
  tc.ensemble_size = config.ensemble_size;
  tc.epochs = config.epochs;
  return RefitContext{data, neg_train, neg_holdout, tc};
}

const FlawCluster& Session::cluster(std::uint64_t id) const {
  for (const auto& c : clusters) {
    if (c.id == id) return c;
  }
  fail(ErrorCode::not_found, "unknown cluster " + std::to_string(id));
}

const RefinementProposal& Session::proposal(const std::string& id) const {
  for (const auto& p : proposals) {
    if (p.id == id) return p;
  }
  fail(ErrorCode::not_found, "unknown proposal '" + id + "'");
}

Session create_session(const SessionConfig& cfg, ConstraintSet constraints, std::string id) {
  cfg.validate();
  Session s;
  s.id = std::move(id);
  s.config = cfg;
  s.world.emplace(cfg.world_spec ? *cfg.world_spec : preset_world(cfg.world, cfg.seed));
  s.constraints = std::move(constraints);
  const auto& w = *s.world;

  s.data = w.sample_expert(cfg.n_expert, cfg.holdout_frac, cfg.seed);
  if (!s.constraints.empty()) s.data = filter_dataset(s.data, s.constraints).kept;

  NegativeParams np;
  if (cfg.negatives == NegativeStrategy::constraint_violating) {
    const ConstraintSet* cs = &s.constraints;
    np.violates = [cs](const StateVec& x) { return !violates(*cs, x).empty(); };
  }
  s.neg_train = sample_negatives(w.domain(), s.data, cfg.negatives, cfg.n_negatives,
                                 Rng::derive(cfg.seed, kNegTrainStream), np);
  s.neg_holdout = sample_negatives(w.domain(), s.data, cfg.negatives, cfg.n_negatives,
                                   Rng::derive(cfg.seed, kNegHoldoutStream), np);

  const auto tc = s.refit_context().cfg;
  ScorerModel scorer = fit(cfg.scorer, s.data, s.neg_train, s.neg_holdout, tc);
  for (const auto& a : cfg.plant) scorer = add_anchor(scorer, a);
  s.ensemble = fit_ensemble(cfg.scorer, s.data, s.neg_train, s.neg_holdout, tc);

  RewardArtifact root;
  root.scorer = std::move(scorer);
  root.mapping = MappingParams::identity();
  root.beta = BetaSchedule{};
  root.domain = w.domain();
  root.constraint_hash = s.constraints.hash();
  root.gates = s.constraints.gates();
  root.lineage = LineageInfo{std::nullopt, "root", "phase 0 fit"};
  s.store = ArtifactStore(std::move(root));
  s.sfkb = SFKB(w.domain(), cfg.coverage_resolution);
  s.reglib = RegressionLibrary::build(s.store.head_artifact(), s.data.holdout(), cfg.eps_reg, cfg.theta_good,
                                      cfg.theta_bad);
  return s;
}

std::vector<RedTeamConfig> audit_configs(const SessionConfig& cfg, std::size_t budget, std::uint64_t seed,
                                         const std::optional<Disk>& steer) {
  require(budget >= 3, ErrorCode::usage, "audit budget must be >= 3");
  const RedTeamStrategy order[3] = {RedTeamStrategy::random, RedTeamStrategy::hillclimb, RedTeamStrategy::anneal};
  std::vector<RedTeamConfig> out;
  for (std::size_t i = 0; i < 3; ++i) {
    RedTeamConfig rc;
    rc.strategy = order[i];
    rc.budget = budget / 3 + (i < budget % 3 ? 1 : 0);
    rc.seed = Rng::derive(seed, i);
    rc.theta_high = cfg.theta_high;
    rc.region = steer;
    out.push_back(rc);
  }
  return out;
}

AuditReport audit(Session& s, std::size_t budget, std::uint64_t seed, const std::optional<Disk>& steer,
                  std::optional<std::uint64_t> version) {
  const auto configs = audit_configs(s.config, budget, seed, steer);
  const auto& target = version ? s.store.at(*version) : s.store.head_artifact();
  return run_audit_phase(target, s.constraints, s.judge(), configs, s.sfkb, s.ensemble,
                         BlueTeamConfig{s.config.theta_high, s.config.u_gap}, s.reports.size());
}

std::vector<FlawCluster> triage_open(Session& s) {
  std::vector<const FlawRecord*> pending;
  for (const auto& f : s.sfkb.flaws()) {
    if (f.status == FlawStatus::open && !f.cluster && !f.label) pending.push_back(&f);
  }
  if (pending.empty()) return {};
  auto fresh = cluster_flaws(pending, s.config.rho_cluster, s.clusters.size() + 1);
  for (const auto& c : fresh) {
    for (auto id : c.members) {
      s.sfkb.set_cluster(id, c.id);
      s.sfkb.set_status(id, FlawStatus::triaged);
    }
  }
  s.clusters.insert(s.clusters.end(), fresh.begin(), fresh.end());
  return fresh;
}

std::vector<FlawCluster> triage_queue(const Session& s) {
  std::vector<FlawCluster> open;
  for (const auto& c : s.clusters) {
    if (!s.sfkb.flaw(c.representative).label) open.push_back(c);
  }
  return prioritize(std::move(open), s.sfkb, s.store.head_artifact(), s.ensemble);
}

PropagationResult label_cluster(Session& s, std::uint64_t cluster_id, Verdict verdict, Author author,
                                std::string note) {
  const auto& c = s.cluster(cluster_id);
  Label label{verdict, author, std::move(note), s.label_clock + 1};
  auto out = propagate_label(label, c, s.sfkb, s.config.rho_prop);
  s.label_clock = label.timestamp;
  return out;
}

const RefinementProposal& propose(Session& s, std::uint64_t cluster_id, ActionKind mode, Author author,
                                  const std::optional<HumanEdit>& edit) {
  auto p = propose_refinement(s.cluster(cluster_id), s.sfkb, s.store.head_artifact(), mode, author,
                              next_proposal_id(s), edit);
  return add_proposal(s, std::move(p));
}

const VerificationResult& verify_proposal(Session& s, const std::string& proposal_id, std::uint64_t seed) {
  const auto& p = s.proposal(proposal_id);
  const auto ctx = s.refit_context();
  auto candidate = apply_refinement(s.store.head_artifact(), p, &ctx);
  VerifyConfig vc{s.config.verify_budget, s.config.theta_high, seed};
  auto result = verify(candidate, p, s.reglib, s.constraints, s.judge(), vc);
  auto& slot = s.verified[proposal_id];
  slot = PendingCandidate{std::move(candidate), std::move(result)};
  return slot.result;
}

std::uint64_t merge_proposal(Session& s, const std::string& proposal_id) {
  const auto& p = s.proposal(proposal_id);
  const auto it = s.verified.find(proposal_id);
  require(it != s.verified.end(), ErrorCode::verification,
          "merge refused: proposal '" + proposal_id + "' has not been verified");
  const auto id = s.store.merge(it->second.candidate, it->second.result);
  s.reglib.snapshot(s.store.head_artifact());
  s.reglib.add_bad(p.targets);
  return id;
}

const RewardArtifact& rollback(Session& s, std::uint64_t version) {
  const auto& a = s.store.rollback(version);
  s.reglib.snapshot(a);
  return a;
}

Metrics metrics(const Session& s) {
  const auto& w = s.toyworld();
  const auto& a = s.store.head_artifact();
  const RewardFn fn = [&a](const StateVec& x) { return reward(a, x); };
  const auto mc_seed = Rng::derive(s.config.seed, kMetricsStream);
  Metrics m;
  m.unsafe_mass = to_probe(w.unsafe_reward_mass(fn, s.config.mc_samples, mc_seed));
  for (const auto& [name, box] : w.spec().probes) {
    m.probes[name] = to_probe(w.unsafe_reward_mass(fn, s.config.mc_samples, mc_seed, box));
  }
  double good = 0.0;
  for (const auto& x : s.reglib.good) good += reward(a, x);
  m.expert_fidelity = s.reglib.good.empty() ? 0.0 : good / static_cast<double>(s.reglib.good.size());
  m.holdout_mean = s.reglib.fidelity(a);
  m.cumulative_drift = s.reglib.cumulative_drift(a);
  for (const auto& f : s.sfkb.flaws()) {
    if (!f.label && (f.status == FlawStatus::open || f.status == FlawStatus::triaged)) ++m.open_flaws;
  }
  m.head = s.store.head();
  m.sfkb_version = s.sfkb.version();
  return m;
}

CycleReport run_cycle(Session& s, CycleMode mode, std::uint64_t seed, const LabelFn& label) {
  require(mode == CycleMode::autonomous || label != nullptr, ErrorCode::usage,
          "interactive cycles need a labeling callback");
  require(!s.busy, ErrorCode::conflict, "a cycle is already running on this session");
  s.busy = true;
  struct Guard {
    bool& b;
    ~Guard() { b = false; }
  } guard{s.busy};

  const auto t0 = std::chrono::steady_clock::now();
  CycleReport rep;
  rep.cycle = s.reports.size();
  rep.seed = Rng::derive(seed, rep.cycle);
  rep.before = metrics(s);
  rep.carryover = rep.before.open_flaws;

  const auto audit_rep = audit(s, s.config.audit_budget, Rng::derive(rep.seed, 1));
  rep.flaws_found = audit_rep.new_flaws.size();
  rep.candidates = audit_rep.candidates;

  const auto fresh = triage_open(s);
  rep.clusters = fresh.size();
  std::vector<std::uint64_t> confirmed;
  const auto judge = s.judge();
  for (const auto& c : triage_queue(s)) {
    const auto& rep_flaw = s.sfkb.flaw(c.representative);
    if (!rep_flaw.label) {
      std::optional<Verdict> v;
      if (mode == CycleMode::autonomous) {
        v = judge(rep_flaw.state) ? Verdict::confirmed : Verdict::benign;
      } else {
        v = label(s, c);
      }
      if (!v) {
        rep.status = "incomplete";
        break;
      }
      const auto prop = label_cluster(s, c.id, *v, Author::human,
                                      mode == CycleMode::autonomous ? "oracle stand-in" : "interactive");
      rep.flaws_resolved += prop.labeled.size();
      ++rep.labels;
    }
    if (s.sfkb.flaw(c.representative).label->verdict == Verdict::confirmed) confirmed.push_back(c.id);
  }

  for (std::size_t i = 0; i < confirmed.size(); ++i) {
    fix_cluster(s, confirmed[i], Rng::derive(rep.seed, 100 + i), rep);
  }

  rep.after = metrics(s);
  const double tol = 3.0 * std::hypot(rep.before.unsafe_mass.std_error, rep.after.unsafe_mass.std_error);
  if (rep.after.unsafe_mass.mean > rep.before.unsafe_mass.mean + tol) {
    rep.alerts.push_back("hardening regression: unsafe mass rose beyond Monte-Carlo tolerance");
  }
  if (rep.after.expert_fidelity < s.config.theta_good && !rep.merged_versions.empty()) {
    rep.alerts.push_back("expert fidelity below theta_good");
  }
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  s.reports.push_back(rep);
  return rep;
}

std::vector<CycleReport> run_until_clean(Session& s, std::size_t max_cycles, std::uint64_t seed,
                                         const LabelFn& label) {
  require(max_cycles >= 1, ErrorCode::usage, "max_cycles must be >= 1");
  std::vector<CycleReport> out;
  const CycleMode mode = label ? CycleMode::interactive : CycleMode::autonomous;
  for (std::size_t i = 0; i < max_cycles; ++i) {
    out.push_back(run_cycle(s, mode, seed, label));
    if (out.back().candidates == 0 || out.back().status != "complete") break;
  }
  return out;
}

}  // namespace flywheel
