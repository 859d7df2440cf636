#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flywheel/artifact.hpp"
#include "flywheel/constraints.hpp"

namespace flywheel {

enum class ViolationKind { constraint, oracle_unsafe, coverage_gap };
enum class FlawStatus { open, triaged, resolved, benign };
enum class Verdict { confirmed, benign };
enum class Author { human, agent };
enum class RedTeamStrategy { random, hillclimb, anneal };

const char* to_string(ViolationKind v);
const char* to_string(FlawStatus s);
const char* to_string(Verdict v);
const char* to_string(Author a);
const char* to_string(RedTeamStrategy s);
ViolationKind violation_kind_from_string(const std::string& s);
FlawStatus flaw_status_from_string(const std::string& s);
Verdict verdict_from_string(const std::string& s);
Author author_from_string(const std::string& s);
RedTeamStrategy red_team_strategy_from_string(const std::string& s);

struct Label {
  Verdict verdict = Verdict::confirmed;
  Author author = Author::agent;
  std::string note;
  /// Logical clock (label sequence number) so replays stay byte-identical.
  std::uint64_t timestamp = 0;
};

struct FlawRecord {
  std::uint64_t id = 0;
  StateVec state;
  double reward_at_discovery = 0.0;
  ViolationKind violation = ViolationKind::oracle_unsafe;
  std::vector<std::string> constraint_ids;
  RedTeamStrategy strategy = RedTeamStrategy::random;
  std::uint64_t seed = 0;
  std::size_t cycle = 0;
  FlawStatus status = FlawStatus::open;
  std::optional<std::uint64_t> cluster;
  std::optional<Label> label;
};

struct GapEntry {
  std::size_t cell = 0;
  StateVec center;
  double predicted_reward = 0.0;
  double uncertainty = 0.0;
  std::size_t cycle = 0;
};

/// Uniform res^d grid of visit counts over the domain.
class CoverageGrid {
 public:
  CoverageGrid() = default;
  CoverageGrid(DomainBox domain, std::size_t resolution);

  std::size_t resolution() const { return res_; }
  std::size_t cells() const { return visits_.size(); }
  const DomainBox& domain() const { return domain_; }
  std::size_t cell_of(const StateVec& s) const;
  StateVec center(std::size_t cell) const;
  double cell_diagonal() const;
  void visit(const StateVec& s) { ++visits_[cell_of(s)]; }
  std::uint64_t visits(std::size_t cell) const { return visits_[cell]; }
  std::uint64_t total_visits() const;
  double fraction_visited() const;
  const std::vector<std::uint64_t>& counts() const { return visits_; }
  void set_counts(std::vector<std::uint64_t> counts);

 private:
  DomainBox domain_;
  std::size_t res_ = 0;
  std::vector<std::uint64_t> visits_;
};

struct RecordOutcome {
  std::uint64_t id = 0;
  bool deduped = false;
};

/// Shared flaw knowledge base. Every mutation appends one journal line; the
/// journal replays to the same state.
class SFKB {
 public:
  SFKB() = default;
  SFKB(DomainBox domain, std::size_t resolution = 32);

  const std::vector<FlawRecord>& flaws() const { return flaws_; }
  const std::vector<GapEntry>& gaps() const { return gaps_; }
  const CoverageGrid& coverage() const { return coverage_; }
  CoverageGrid& coverage() { return coverage_; }
  double dedupe_radius() const { return coverage_.cell_diagonal(); }

  const FlawRecord& flaw(std::uint64_t id) const;
  std::vector<const FlawRecord*> with_status(FlawStatus s) const;

  /// Appends, or returns the id of an open flaw of the same kind within the
  /// dedupe radius.
  RecordOutcome record_flaw(FlawRecord candidate);
  /// Appends unless an entry for the same cell already exists.
  bool add_gap(const GapEntry& gap);
  /// Forward-only transitions open -> triaged -> {resolved, benign}.
  void set_status(std::uint64_t id, FlawStatus status);
  void set_cluster(std::uint64_t id, std::uint64_t cluster);
  void set_label(std::uint64_t id, const Label& label);
  /// Journals the current coverage counts.
  void snapshot_coverage();

  std::uint64_t version() const { return journal_.size(); }
  const std::vector<std::string>& journal() const { return journal_; }
  std::string to_jsonl() const;
  static SFKB from_jsonl(const std::string& text);

 private:
  void append(const nlohmann::json& line);
  void apply(const nlohmann::json& line);

  std::vector<FlawRecord> flaws_;
  std::vector<GapEntry> gaps_;
  CoverageGrid coverage_;
  std::vector<std::string> journal_;
};

/// True when the state is unsafe (the adjudicating oracle).
using Judge = std::function<bool(const StateVec&)>;

struct RedTeamConfig {
  RedTeamStrategy strategy = RedTeamStrategy::random;
  std::size_t budget = 1000;
  double step = 0.02;
  std::size_t restarts = 10;
  std::uint64_t seed = 0;
  double theta_high = 0.5;
  /// Restricts the search to a ball (local red team / workbench steering).
  std::optional<Disk> region;
  /// Seed first from unvisited SFKB gap cells.
  bool gap_seeding = true;

  void validate() const;
};

struct SearchResult {
  std::vector<FlawRecord> flaws;   // candidates, unrecorded, in discovery order
  std::vector<StateVec> evaluated; // every state whose reward was computed
  std::size_t evaluations = 0;
  double max_unsafe_reward = 0.0;
  std::optional<std::size_t> first_flaw_eval;  // 1-based
};

/// Pure given its inputs; reads gap entries from the SFKB, never writes it.
SearchResult red_team_search(const RewardArtifact& artifact, const ConstraintSet& cset, const Judge& judge,
                             const RedTeamConfig& cfg, const SFKB& sfkb);

struct BlueTeamConfig {
  double theta_high = 0.5;
  double u_gap = 0.15;
};

/// Gap candidates over unvisited cells. Uncertainty is the spread of L over
/// the ensemble together with the artifact's own scorer.
std::vector<GapEntry> blue_team_scan(const SFKB& sfkb, const RewardArtifact& artifact,
                                     std::span<const ScorerModel> ensemble, const BlueTeamConfig& cfg,
                                     std::size_t cycle = 0);

struct AuditReport {
  std::size_t cycle = 0;
  std::vector<std::uint64_t> new_flaws;
  std::size_t deduped = 0;
  std::size_t candidates = 0;
  std::size_t evaluations = 0;
  std::size_t gaps_added = 0;
  double coverage_fraction = 0.0;
  double max_unsafe_reward = 0.0;
  std::optional<std::size_t> first_flaw_eval;
  std::vector<std::size_t> evaluations_per_config;

  nlohmann::json to_json() const;
};

/// Blue scan, then the red-team configs in order; records flaws and visits.
AuditReport run_audit_phase(const RewardArtifact& artifact, const ConstraintSet& cset, const Judge& judge,
                            std::span<const RedTeamConfig> configs, SFKB& sfkb,
                            std::span<const ScorerModel> ensemble, const BlueTeamConfig& blue = {},
                            std::size_t cycle = 0);

void to_json(nlohmann::json& j, const Label& l);
void from_json(const nlohmann::json& j, Label& l);
void to_json(nlohmann::json& j, const FlawRecord& f);
void from_json(const nlohmann::json& j, FlawRecord& f);
void to_json(nlohmann::json& j, const GapEntry& g);
void from_json(const nlohmann::json& j, GapEntry& g);

}  // namespace flywheel
