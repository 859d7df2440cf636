#pragma once

#include <optional>
#include <string>
#include <vector>

#include "flywheel/common.hpp"
#include "flywheel/mapping.hpp"
#include "flywheel/scorer.hpp"

namespace flywheel {

/// Zeroes the reward inside `region` for states whose context matches every
/// entry of `when`. Built from context-conditioned forbidden boxes.
struct ContextGate {
  std::string constraint_id;
  Context when;
  Box region;
  bool fires(const StateVec& s) const;
  friend bool operator==(const ContextGate& a, const ContextGate& b) {
    return a.constraint_id == b.constraint_id && a.when == b.when && a.region.lo == b.region.lo &&
           a.region.hi == b.region.hi;
  }
};

struct LineageInfo {
  std::optional<std::uint64_t> parent;
  std::string proposal_id;
  std::string note;
  friend bool operator==(const LineageInfo&, const LineageInfo&) = default;
};

/// Versioned bundle: scorer, mapping, beta schedule, constraint-set hash.
/// `version` is assigned by the store on merge; candidates carry none.
struct RewardArtifact {
  ScorerModel scorer;
  MappingParams mapping;
  BetaSchedule beta;
  DomainBox domain;
  std::string constraint_hash;
  std::vector<ContextGate> gates;
  LineageInfo lineage;
  std::optional<std::uint64_t> version;

  void validate() const;
  friend bool operator==(const RewardArtifact&, const RewardArtifact&) = default;
};

/// beta_t * g(L(s)); t omitted means t = 0. Gates apply after the mapping.
double reward(const RewardArtifact& artifact, const StateVec& s, std::optional<double> t = std::nullopt);

/// Reward ignoring gates and the domain check (used by counterfactual probes
/// and heatmaps that sweep past the edges).
double ungated_reward(const RewardArtifact& artifact, const StateVec& s, double t = 0.0);

/// Content hash over the canonical JSON, excluding version and the hash
/// itself, so a candidate and its merged copy hash equally.
std::string artifact_hash(const RewardArtifact& artifact);

/// Canonical bytes: sorted keys, shortest round-trip reals, hash embedded.
std::string to_canonical_json(const RewardArtifact& artifact);
/// Parses and checks the embedded hash; throws data errors on mismatch.
RewardArtifact artifact_from_json(const std::string& text);

}  // namespace flywheel
