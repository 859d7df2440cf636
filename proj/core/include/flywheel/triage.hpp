#pragma once

#include <functional>
#include <vector>

#include "flywheel/audit.hpp"

namespace flywheel {

struct FlawCluster {
  std::uint64_t id = 0;
  std::vector<std::uint64_t> members;  // flaw ids, discovery order; members[0] is the leader
  StateVec leader;
  StateVec centroid;
  std::uint64_t representative = 0;    // member closest to the centroid
  double priority = 0.0;
};

/// Pluggable state distance; Euclidean by default.
using DistanceFn = std::function<double(const StateVec&, const StateVec&)>;

/// Greedy leader clustering in input order. Cluster ids start at `first_id`.
std::vector<FlawCluster> cluster_flaws(const std::vector<const FlawRecord*>& flaws, double rho_cluster,
                                       std::uint64_t first_id = 1, const DistanceFn& dist = nullptr);

/// priority = mean member reward * |members| * (1 + uncertainty at centroid);
/// sorted descending, ties by id. Member rewards use the current artifact.
std::vector<FlawCluster> prioritize(std::vector<FlawCluster> clusters, const SFKB& sfkb,
                                    const RewardArtifact& artifact, std::span<const ScorerModel> ensemble);

struct PropagationResult {
  std::vector<std::uint64_t> labeled;  // flaw ids, cluster members first
  std::size_t expert_actions = 1;
  double resolved_per_action() const {
    return static_cast<double>(labeled.size()) / static_cast<double>(expert_actions);
  }
};

/// Labels every member, then every unresolved (open or triaged) flaw of the
/// same violation kind within rho_prop of a labeled member. Throws conflict when the
/// representative is already labeled (state left unchanged).
PropagationResult propagate_label(const Label& label, const FlawCluster& cluster, SFKB& sfkb, double rho_prop,
                                  const DistanceFn& dist = nullptr);

}  // namespace flywheel
