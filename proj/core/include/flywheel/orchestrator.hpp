#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flywheel/refine.hpp"

namespace flywheel {

enum class CycleMode { autonomous, interactive };
const char* to_string(CycleMode m);

struct SessionConfig {
  std::string world = "two-ridges";
  std::optional<WorldSpec> world_spec;  // overrides the preset name
  std::uint64_t seed = 7;
  std::size_t n_expert = 200;
  double holdout_frac = 0.2;
  ScorerKind scorer = ScorerKind::rbf;
  std::size_t n_negatives = 200;
  NegativeStrategy negatives = NegativeStrategy::uniform;
  /// Extra anchors added to the root after fitting (planted flaws for tests).
  std::vector<Anchor> plant;
  double theta_high = 0.5;
  double u_gap = 0.15;
  double rho_cluster = 0.08;
  double rho_prop = 0.16;
  std::size_t audit_budget = 5000;
  std::size_t verify_budget = 2000;
  std::size_t mc_samples = 10000;
  std::size_t coverage_resolution = 32;
  double eps_reg = 0.05;
  double theta_good = 0.5;
  double theta_bad = 0.3;
  /// Agent retries that fold local red-team finds back into a patch.
  std::size_t patch_rounds = 12;
  /// Agent patches keep growing until sampled unsafe states in the
  /// verification ball score at most this.
  double agent_floor = 0.1;
  std::size_t ensemble_size = 5;
  std::size_t epochs = 1500;

  void validate() const;
  nlohmann::json to_json() const;
  static SessionConfig from_json(const nlohmann::json& j);
};

struct ProbeMass {
  double mean = 0.0;
  double std_error = 0.0;
};

struct Metrics {
  ProbeMass unsafe_mass;                     // uniform over the domain
  std::map<std::string, ProbeMass> probes;   // per named window
  double expert_fidelity = 0.0;              // mean reward over good states
  double holdout_mean = 0.0;                 // mean reward over every holdout state
  double cumulative_drift = 0.0;
  std::size_t open_flaws = 0;
  std::uint64_t head = 0;
  std::uint64_t sfkb_version = 0;

  nlohmann::json to_json() const;
};

struct CycleReport {
  std::size_t cycle = 0;
  std::string status = "complete";  // or "incomplete" (interactive label timeout)
  std::size_t flaws_found = 0;
  std::size_t candidates = 0;
  std::size_t carryover = 0;
  std::size_t flaws_resolved = 0;
  std::size_t labels = 0;
  std::size_t clusters = 0;
  std::size_t proposals_made = 0;
  std::size_t proposals_merged = 0;
  std::vector<std::uint64_t> merged_versions;
  Metrics before;
  Metrics after;
  double wall_seconds = 0.0;  // excluded from the determinism contract
  std::uint64_t seed = 0;
  std::vector<std::string> alerts;

  /// Wall-clock is omitted when `with_timing` is false.
  nlohmann::json to_json(bool with_timing = true) const;
};

struct PendingCandidate {
  RewardArtifact candidate;
  VerificationResult result;
};

/// All state of one flywheel instance. Mutated by one writer at a time.
struct Session {
  std::string id;
  SessionConfig config;
  std::optional<ToyWorld> world;
  ConstraintSet constraints;
  ExpertDataset data;
  NegativeSet neg_train;
  NegativeSet neg_holdout;
  std::vector<ScorerModel> ensemble;
  ArtifactStore store;
  SFKB sfkb;
  RegressionLibrary reglib;
  std::vector<FlawCluster> clusters;
  std::vector<RefinementProposal> proposals;
  std::map<std::string, PendingCandidate> verified;
  std::vector<CycleReport> reports;
  std::uint64_t label_clock = 0;
  bool busy = false;

  const ToyWorld& toyworld() const;
  Judge judge() const;
  RefitContext refit_context() const;
  const FlawCluster& cluster(std::uint64_t id) const;
  const RefinementProposal& proposal(const std::string& id) const;
};

/// Phase 0: constraint filter, sampling, fit, ensemble, root artifact.
Session create_session(const SessionConfig& cfg, ConstraintSet constraints = {}, std::string id = "s1");

/// Red-team configs for one audit: the budget split over random, hillclimb
/// and anneal with seeds derived from `seed`.
std::vector<RedTeamConfig> audit_configs(const SessionConfig& cfg, std::size_t budget, std::uint64_t seed,
                                         const std::optional<Disk>& steer = std::nullopt);

/// Audits the head, or `version` when given.
AuditReport audit(Session& s, std::size_t budget, std::uint64_t seed, const std::optional<Disk>& steer = std::nullopt,
                  std::optional<std::uint64_t> version = std::nullopt);
/// Moves the head and re-baselines the regression library against it.
const RewardArtifact& rollback(Session& s, std::uint64_t version);
/// Clusters every open flaw not yet in a cluster; returns the new clusters.
std::vector<FlawCluster> triage_open(Session& s);
/// Unlabeled clusters in priority order under the current head.
std::vector<FlawCluster> triage_queue(const Session& s);
PropagationResult label_cluster(Session& s, std::uint64_t cluster_id, Verdict verdict, Author author,
                                std::string note = {});
const RefinementProposal& propose(Session& s, std::uint64_t cluster_id, ActionKind mode, Author author,
                                  const std::optional<HumanEdit>& edit = std::nullopt);
/// Builds the candidate against the current head and verifies it.
const VerificationResult& verify_proposal(Session& s, const std::string& proposal_id, std::uint64_t seed);
/// Merges a verified candidate; re-snapshots baselines and records bad states.
std::uint64_t merge_proposal(Session& s, const std::string& proposal_id);

Metrics metrics(const Session& s);

/// Interactive labeling hook; nullopt means no answer (cycle incomplete).
using LabelFn = std::function<std::optional<Verdict>(const Session&, const FlawCluster&)>;

CycleReport run_cycle(Session& s, CycleMode mode, std::uint64_t seed, const LabelFn& label = nullptr);
std::vector<CycleReport> run_until_clean(Session& s, std::size_t max_cycles, std::uint64_t seed,
                                         const LabelFn& label = nullptr);

}  // namespace flywheel
