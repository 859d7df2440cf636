#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flywheel/audit.hpp"
#include "flywheel/triage.hpp"

namespace flywheel {

enum class ActionKind { sculpt, patch_negative, seed_positive };
const char* to_string(ActionKind a);
ActionKind action_kind_from_string(const std::string& s);

struct RefinementProposal {
  std::string id;
  ActionKind action = ActionKind::patch_negative;
  std::optional<SculptDirective> directive;  // sculpt only
  std::vector<StateVec> states;              // anchor / seed states
  double weight = -1.0;
  double scale = 1.0;                        // anchor kernel width / model bandwidth
  Disk region;                               // target ball
  Author author = Author::agent;
  std::optional<std::uint64_t> cluster;
  /// Flaw states the proposal is meant to fix; verified as bad states.
  std::vector<StateVec> targets;

  void validate(const DomainBox& domain) const;
};

/// Parameters a human author supplies explicitly.
struct HumanEdit {
  std::optional<SculptDirective> directive;
  std::vector<StateVec> states;
  double weight = -1.0;
  double scale = 1.0;
  std::optional<Disk> region;
};

/// Smallest radius given to a target ball (singleton clusters).
inline constexpr double kMinTargetRadius = 0.05;
/// Kernel width of agent patch anchors relative to the model bandwidth.
inline constexpr double kAgentPatchScale = 0.2;

/// Agent authors auto-fill: patch_negative -> -1 anchors at member states
/// with narrow kernels, region = cluster bounding ball x1.5; sculpt -> suppress_below(median L of
/// members). Requires the cluster to be labeled confirmed.
RefinementProposal propose_refinement(const FlawCluster& cluster, const SFKB& sfkb, const RewardArtifact& artifact,
                                      ActionKind mode, Author author, std::string id,
                                      const std::optional<HumanEdit>& edit = std::nullopt);

/// Inputs for the recon refit path.
struct RefitContext {
  ExpertDataset experts;
  NegativeSet neg_train;
  NegativeSet neg_holdout;
  TrainConfig cfg;
};

/// Returns an unversioned candidate whose lineage points at the parent.
RewardArtifact apply_refinement(const RewardArtifact& parent, const RefinementProposal& proposal,
                                const RefitContext* refit = nullptr);

struct RegressionLibrary {
  std::vector<StateVec> holdout;         // every expert holdout state (fidelity)
  std::vector<StateVec> good;            // holdout states with root reward >= theta_good
  std::vector<double> good_baseline;     // rewards under `baseline_version`
  std::vector<double> root_baseline;     // rewards under the root
  std::vector<StateVec> bad;             // states of fixed, confirmed flaws
  double eps_reg = 0.05;
  double theta_good = 0.5;
  double theta_bad = 0.3;
  std::uint64_t baseline_version = 0;

  static RegressionLibrary build(const RewardArtifact& root, const std::vector<StateVec>& holdout,
                                 double eps_reg = 0.05, double theta_good = 0.5, double theta_bad = 0.3);
  /// Re-baselines good states against a newly merged version.
  void snapshot(const RewardArtifact& artifact);
  /// Adds states unless they coincide with a good state.
  void add_bad(const std::vector<StateVec>& states);
  double fidelity(const RewardArtifact& artifact) const;
  double cumulative_drift(const RewardArtifact& artifact) const;

  nlohmann::json to_json() const;
  static RegressionLibrary from_json(const nlohmann::json& j);
};

struct VerificationResult {
  std::string proposal_id;
  std::string candidate_hash;
  std::uint64_t seed = 0;
  std::size_t budget = 0;
  std::size_t local_flaws = 0;
  std::vector<StateVec> local_flaw_states;  // deduped, for agent follow-ups
  double max_drift = 0.0;
  double min_good = 1.0;
  double max_bad = 0.0;
  bool pass = false;

  nlohmann::json to_json() const;
  static VerificationResult from_json(const nlohmann::json& j);
};

struct VerifyConfig {
  std::size_t budget = 2000;
  double theta_high = 0.5;
  std::uint64_t seed = 0;
};

/// Localized red team within the proposal region x2 plus the regression
/// library. Pure given its inputs.
VerificationResult verify(const RewardArtifact& candidate, const RefinementProposal& proposal,
                          const RegressionLibrary& reglib, const ConstraintSet& cset, const Judge& judge,
                          const VerifyConfig& cfg);

struct StoredVersion {
  RewardArtifact artifact;
  std::optional<VerificationResult> verification;  // absent only for the root
};

/// Append-only version store with single-parent lineage and a head pointer.
class ArtifactStore {
 public:
  ArtifactStore() = default;
  explicit ArtifactStore(RewardArtifact root);

  std::uint64_t head() const { return head_; }
  const RewardArtifact& head_artifact() const { return at(head_); }
  const RewardArtifact& at(std::uint64_t id) const;
  const std::map<std::uint64_t, StoredVersion>& versions() const { return versions_; }
  std::vector<std::uint64_t> children(std::uint64_t id) const;
  std::uint64_t root() const { return 0; }

  /// The gate: refuses failed results (verification), hash mismatches
  /// (verification) and candidates whose parent is not the head (conflict).
  std::uint64_t merge(RewardArtifact candidate, const VerificationResult& result);
  const RewardArtifact& rollback(std::uint64_t id);

  /// Throws data errors if any invariant is broken.
  void check_invariants() const;

  nlohmann::json lineage_json() const;
  static ArtifactStore from_parts(const nlohmann::json& lineage,
                                  const std::map<std::uint64_t, RewardArtifact>& artifacts);

 private:
  std::map<std::uint64_t, StoredVersion> versions_;
  std::uint64_t head_ = 0;
};

void to_json(nlohmann::json& j, const RefinementProposal& p);
void from_json(const nlohmann::json& j, RefinementProposal& p);
void to_json(nlohmann::json& j, const Disk& d);
void from_json(const nlohmann::json& j, Disk& d);

}  // namespace flywheel
