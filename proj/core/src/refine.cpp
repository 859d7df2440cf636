#include "flywheel/refine.hpp"

#include <algorithm>
#include <cmath>

#include "flywheel/json.hpp"

namespace flywheel {

const char* to_string(ActionKind a) {
  switch (a) {
    case ActionKind::sculpt: return "sculpt";
    case ActionKind::patch_negative: return "patch_negative";
    case ActionKind::seed_positive: return "seed_positive";
  }
  return "?";
}

ActionKind action_kind_from_string(const std::string& s) {
  if (s == "sculpt") return ActionKind::sculpt;
  if (s == "patch_negative" || s == "patch") return ActionKind::patch_negative;
  if (s == "seed_positive" || s == "seed") return ActionKind::seed_positive;
  fail(ErrorCode::usage, "unknown refinement mode '" + s + "'");
}

void RefinementProposal::validate(const DomainBox& domain) const {
  require(!id.empty(), ErrorCode::usage, "proposal id must be non-empty");
  require(region.radius > 0.0, ErrorCode::usage, "proposal region radius must be > 0");
  require(scale > 0.0 && scale <= 1.0, ErrorCode::usage, "proposal kernel scale must lie in (0, 1]");
  require(region.center.size() == domain.dims() && domain.contains(region.center), ErrorCode::usage,
          "proposal region center must lie in the domain");
  for (const auto& s : states) {
    require(domain.contains(s), ErrorCode::usage, "proposal state outside the domain");
  }
  switch (action) {
    case ActionKind::sculpt:
      require(directive.has_value(), ErrorCode::usage, "sculpt proposal needs a directive");
      break;
    case ActionKind::patch_negative:
      require(weight < 0.0, ErrorCode::usage, "patch_negative weight must be negative");
      break;
    case ActionKind::seed_positive:
      require(weight > 0.0, ErrorCode::usage, "seed_positive weight must be positive");
      require(!states.empty(), ErrorCode::usage, "seed_positive needs states");
      break;
  }
}

RefinementProposal propose_refinement(const FlawCluster& cluster, const SFKB& sfkb, const RewardArtifact& artifact,
                                      ActionKind mode, Author author, std::string id,
                                      const std::optional<HumanEdit>& edit) {
  const auto& rep = sfkb.flaw(cluster.representative);
  require(rep.label && rep.label->verdict == Verdict::confirmed, ErrorCode::precondition,
          "cluster " + std::to_string(cluster.id) + " is not labeled confirmed");

  RefinementProposal p;
  p.id = std::move(id);
  p.action = mode;
  p.author = author;
  p.cluster = cluster.id;
  std::vector<double> member_l;
  for (auto fid : cluster.members) {
    const auto& f = sfkb.flaw(fid);
    p.targets.push_back(f.state);
    member_l.push_back(artifact.scorer.score(f.state));
  }
  double radius = 0.0;
  for (const auto& s : p.targets) radius = std::max(radius, distance(s, cluster.centroid));
  p.region = Disk{cluster.centroid.values, std::max(1.5 * radius, kMinTargetRadius)};

  if (author == Author::agent) {
    switch (mode) {
      case ActionKind::patch_negative:
        p.states = p.targets;
        p.weight = -1.0;
        p.scale = kAgentPatchScale;
        break;
      case ActionKind::sculpt:
        p.directive = SuppressBelow{median(member_l)};
        break;
      case ActionKind::seed_positive:
        fail(ErrorCode::usage, "agent authors do not propose seed_positive; supply states as a human edit");
    }
  } else {
    require(edit.has_value(), ErrorCode::usage, "human proposals must supply their parameters");
    p.directive = edit->directive;
    p.states = edit->states;
    p.weight = edit->weight;
    p.scale = edit->scale;
    if (edit->region) p.region = *edit->region;
  }
  p.validate(artifact.domain);
  return p;
}

RewardArtifact apply_refinement(const RewardArtifact& parent, const RefinementProposal& proposal,
                                const RefitContext* refit) {
  proposal.validate(parent.domain);
  RewardArtifact cand = parent;
  cand.version.reset();
  cand.lineage = LineageInfo{parent.version, proposal.id,
                             std::string(to_string(proposal.action)) + " by " + to_string(proposal.author)};
  switch (proposal.action) {
    case ActionKind::sculpt:
      cand.mapping = sculpt(parent.mapping, *proposal.directive);
      break;
    case ActionKind::patch_negative:
    case ActionKind::seed_positive:
      if (parent.scorer.kind() == ScorerKind::recon) {
        require(proposal.action == ActionKind::patch_negative, ErrorCode::unsupported,
                "seed_positive has no refit path for recon scorers");
        require(refit != nullptr, ErrorCode::unsupported, "recon patches need the refit context");
        auto extra = parent.scorer.recon().patch_negatives;
        extra.insert(extra.end(), proposal.states.begin(), proposal.states.end());
        cand.scorer = refit_recon(refit->experts, refit->neg_train, refit->neg_holdout, refit->cfg, extra);
      } else {
        for (const auto& s : proposal.states) {
          cand.scorer = add_anchor(cand.scorer, Anchor{StateVec(s.values), proposal.weight, proposal.scale});
        }
      }
      break;
  }
  return cand;
}

// ---------------------------------------------------------------------------

RegressionLibrary RegressionLibrary::build(const RewardArtifact& root, const std::vector<StateVec>& holdout,
                                           double eps_reg, double theta_good, double theta_bad) {
  RegressionLibrary lib;
  lib.eps_reg = eps_reg;
  lib.theta_good = theta_good;
  lib.theta_bad = theta_bad;
  lib.holdout = holdout;
  for (const auto& s : holdout) {
    const double r = reward(root, s);
    if (r >= theta_good) {
      lib.good.push_back(s);
      lib.good_baseline.push_back(r);
      lib.root_baseline.push_back(r);
    }
  }
  lib.baseline_version = root.version.value_or(0);
  return lib;
}

void RegressionLibrary::snapshot(const RewardArtifact& artifact) {
  for (std::size_t i = 0; i < good.size(); ++i) good_baseline[i] = reward(artifact, good[i]);
  baseline_version = artifact.version.value_or(baseline_version);
}

void RegressionLibrary::add_bad(const std::vector<StateVec>& states) {
  for (const auto& s : states) {
    if (std::find(good.begin(), good.end(), s) != good.end()) continue;
    if (std::find(bad.begin(), bad.end(), s) != bad.end()) continue;
    bad.push_back(s);
  }
}

double RegressionLibrary::fidelity(const RewardArtifact& artifact) const {
  if (holdout.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& s : holdout) sum += reward(artifact, s);
  return sum / static_cast<double>(holdout.size());
}

double RegressionLibrary::cumulative_drift(const RewardArtifact& artifact) const {
  double d = 0.0;
  for (std::size_t i = 0; i < good.size(); ++i) d = std::max(d, std::abs(reward(artifact, good[i]) - root_baseline[i]));
  return d;
}

json RegressionLibrary::to_json() const {
  return json{{"holdout", holdout},       {"good", good},         {"good_baseline", good_baseline},
              {"root_baseline", root_baseline}, {"bad", bad},     {"eps_reg", eps_reg},
              {"theta_good", theta_good}, {"theta_bad", theta_bad}, {"baseline_version", baseline_version}};
}

RegressionLibrary RegressionLibrary::from_json(const json& j) {
  RegressionLibrary lib;
  lib.holdout = field<std::vector<StateVec>>(j, "holdout");
  lib.good = field<std::vector<StateVec>>(j, "good");
  lib.good_baseline = field<std::vector<double>>(j, "good_baseline");
  lib.root_baseline = field<std::vector<double>>(j, "root_baseline");
  lib.bad = field<std::vector<StateVec>>(j, "bad");
  lib.eps_reg = field<double>(j, "eps_reg");
  lib.theta_good = field<double>(j, "theta_good");
  lib.theta_bad = field<double>(j, "theta_bad");
  lib.baseline_version = field<std::uint64_t>(j, "baseline_version");
  require(lib.good.size() == lib.good_baseline.size() && lib.good.size() == lib.root_baseline.size(),
          ErrorCode::data, "regression library baselines do not match the good states");
  return lib;
}

// ---------------------------------------------------------------------------

json VerificationResult::to_json() const {
  return json{{"proposal_id", proposal_id}, {"candidate_hash", candidate_hash},
              {"seed", seed},               {"budget", budget},
              {"local_flaws", local_flaws}, {"local_flaw_states", local_flaw_states},
              {"max_drift", max_drift},     {"min_good", min_good},
              {"max_bad", max_bad},         {"pass", pass}};
}

VerificationResult VerificationResult::from_json(const json& j) {
  VerificationResult r;
  r.proposal_id = field<std::string>(j, "proposal_id");
  r.candidate_hash = field<std::string>(j, "candidate_hash");
  r.seed = field<std::uint64_t>(j, "seed");
  r.budget = field<std::size_t>(j, "budget");
  r.local_flaws = field<std::size_t>(j, "local_flaws");
  r.local_flaw_states = field<std::vector<StateVec>>(j, "local_flaw_states");
  r.max_drift = field<double>(j, "max_drift");
  r.min_good = field<double>(j, "min_good");
  r.max_bad = field<double>(j, "max_bad");
  r.pass = field<bool>(j, "pass");
  return r;
}

VerificationResult verify(const RewardArtifact& candidate, const RefinementProposal& proposal,
                          const RegressionLibrary& reglib, const ConstraintSet& cset, const Judge& judge,
                          const VerifyConfig& cfg) {
  require(candidate.lineage.parent && *candidate.lineage.parent == reglib.baseline_version,
          ErrorCode::precondition, "regression baselines are not recorded against the candidate's parent");
  VerificationResult r;
  r.proposal_id = proposal.id;
  r.candidate_hash = artifact_hash(candidate);
  r.seed = cfg.seed;
  r.budget = cfg.budget;

  RedTeamConfig local;
  local.strategy = RedTeamStrategy::random;
  local.budget = cfg.budget;
  local.seed = cfg.seed;
  local.theta_high = cfg.theta_high;
  local.region = Disk{proposal.region.center, 2.0 * proposal.region.radius};
  local.gap_seeding = false;
  const SFKB scratch(candidate.domain, 1);
  const auto search = red_team_search(candidate, cset, judge, local, scratch);
  r.local_flaws = search.flaws.size();
  for (const auto& f : search.flaws) {
    const bool near = std::any_of(r.local_flaw_states.begin(), r.local_flaw_states.end(),
                                  [&](const StateVec& s) { return distance(s, f.state) < 0.01; });
    if (!near && r.local_flaw_states.size() < 256) r.local_flaw_states.push_back(f.state);
  }

  r.min_good = reglib.good.empty() ? 1.0 : std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < reglib.good.size(); ++i) {
    const double v = reward(candidate, reglib.good[i]);
    r.max_drift = std::max(r.max_drift, std::abs(v - reglib.good_baseline[i]));
    r.min_good = std::min(r.min_good, v);
  }
  for (const auto& s : reglib.bad) r.max_bad = std::max(r.max_bad, reward(candidate, s));
  for (const auto& s : proposal.targets) r.max_bad = std::max(r.max_bad, reward(candidate, s));

  r.pass = r.local_flaws == 0 && r.max_drift <= reglib.eps_reg && r.min_good >= reglib.theta_good &&
           r.max_bad <= reglib.theta_bad;
  return r;
}

// ---------------------------------------------------------------------------

ArtifactStore::ArtifactStore(RewardArtifact root) {
  root.version = 0;
  root.lineage.parent.reset();
  root.validate();
  versions_.emplace(0, StoredVersion{std::move(root), std::nullopt});
  head_ = 0;
}

const RewardArtifact& ArtifactStore::at(std::uint64_t id) const {
  const auto it = versions_.find(id);
  require(it != versions_.end(), ErrorCode::not_found, "unknown artifact version " + std::to_string(id));
  return it->second.artifact;
}

std::vector<std::uint64_t> ArtifactStore::children(std::uint64_t id) const {
  std::vector<std::uint64_t> out;
  for (const auto& [vid, v] : versions_) {
    if (v.artifact.lineage.parent && *v.artifact.lineage.parent == id) out.push_back(vid);
  }
  return out;
}

std::uint64_t ArtifactStore::merge(RewardArtifact candidate, const VerificationResult& result) {
  require(!versions_.empty(), ErrorCode::precondition, "store has no root");
  require(result.pass, ErrorCode::verification, "merge refused: verification did not pass");
  require(result.candidate_hash == artifact_hash(candidate), ErrorCode::verification,
          "merge refused: candidate does not match the verified hash");
  require(result.proposal_id == candidate.lineage.proposal_id, ErrorCode::verification,
          "merge refused: verification belongs to another proposal");
  require(candidate.lineage.parent && *candidate.lineage.parent == head_, ErrorCode::conflict,
          "merge refused: candidate parent is not the current head (stale)");
  const std::uint64_t id = versions_.rbegin()->first + 1;
  candidate.version = id;
  versions_.emplace(id, StoredVersion{std::move(candidate), result});
  head_ = id;
  return id;
}

const RewardArtifact& ArtifactStore::rollback(std::uint64_t id) {
  const auto& a = at(id);
  head_ = id;
  return a;
}

void ArtifactStore::check_invariants() const {
  require(!versions_.empty() && versions_.begin()->first == 0, ErrorCode::data, "store has no root version");
  require(versions_.count(head_) == 1, ErrorCode::data, "head points at a missing version");
  for (const auto& [id, v] : versions_) {
    require(v.artifact.version && *v.artifact.version == id, ErrorCode::data, "version id mismatch");
    if (id == 0) {
      require(!v.artifact.lineage.parent, ErrorCode::data, "root must not have a parent");
      continue;
    }
    // Parents always precede children, so single-parent edges cannot cycle.
    require(v.artifact.lineage.parent && *v.artifact.lineage.parent < id &&
                versions_.count(*v.artifact.lineage.parent) == 1,
            ErrorCode::data, "version " + std::to_string(id) + " has a broken lineage edge");
    require(v.verification && v.verification->pass &&
                v.verification->candidate_hash == artifact_hash(v.artifact),
            ErrorCode::data, "version " + std::to_string(id) + " lacks a passing verification");
  }
}

json ArtifactStore::lineage_json() const {
  json versions = json::array();
  for (const auto& [id, v] : versions_) {
    versions.push_back(json{{"id", id},
                            {"parent", v.artifact.lineage.parent ? json(*v.artifact.lineage.parent) : json(nullptr)},
                            {"proposal_id", v.artifact.lineage.proposal_id},
                            {"content_hash", artifact_hash(v.artifact)},
                            {"verification", v.verification ? v.verification->to_json() : json(nullptr)}});
  }
  return json{{"head", head_}, {"versions", versions}};
}

ArtifactStore ArtifactStore::from_parts(const json& lineage, const std::map<std::uint64_t, RewardArtifact>& artifacts) {
  ArtifactStore store;
  for (const auto& v : lineage.at("versions")) {
    const auto id = field<std::uint64_t>(v, "id");
    const auto it = artifacts.find(id);
    require(it != artifacts.end(), ErrorCode::data, "lineage lists version " + std::to_string(id) + " with no artifact");
    require(artifact_hash(it->second) == field<std::string>(v, "content_hash"), ErrorCode::data,
            "artifact v" + std::to_string(id) + " does not match its lineage hash");
    std::optional<VerificationResult> ver;
    if (!v.at("verification").is_null()) ver = VerificationResult::from_json(v.at("verification"));
    store.versions_.emplace(id, StoredVersion{it->second, ver});
  }
  store.head_ = field<std::uint64_t>(lineage, "head");
  store.check_invariants();
  return store;
}

// ---------------------------------------------------------------------------

void to_json(json& j, const Disk& d) { j = json{{"center", d.center}, {"radius", d.radius}}; }
void from_json(const json& j, Disk& d) {
  d.center = field<std::vector<double>>(j, "center");
  d.radius = field<double>(j, "radius");
}

void to_json(json& j, const RefinementProposal& p) {
  j = json{{"id", p.id},
           {"action", to_string(p.action)},
           {"directive", p.directive ? json(*p.directive) : json(nullptr)},
           {"states", p.states},
           {"weight", p.weight},
           {"scale", p.scale},
           {"region", p.region},
           {"author", to_string(p.author)},
           {"cluster", p.cluster ? json(*p.cluster) : json(nullptr)},
           {"targets", p.targets}};
}

void from_json(const json& j, RefinementProposal& p) {
  p.id = field<std::string>(j, "id");
  p.action = action_kind_from_string(field<std::string>(j, "action"));
  p.directive = j.at("directive").is_null() ? std::nullopt
                                            : std::optional<SculptDirective>(field<SculptDirective>(j, "directive"));
  p.states = field<std::vector<StateVec>>(j, "states");
  p.weight = field<double>(j, "weight");
  p.scale = j.contains("scale") ? field<double>(j, "scale") : 1.0;
  p.region = field<Disk>(j, "region");
  p.author = author_from_string(field<std::string>(j, "author"));
  p.cluster = j.at("cluster").is_null() ? std::nullopt
                                        : std::optional<std::uint64_t>(field<std::uint64_t>(j, "cluster"));
  p.targets = field<std::vector<StateVec>>(j, "targets");
}

}  // namespace flywheel
