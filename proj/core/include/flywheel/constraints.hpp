#pragma once

#include <string>
#include <variant>
#include <vector>

#include "flywheel/artifact.hpp"
#include "flywheel/toyworld.hpp"

namespace flywheel {

/// States inside the (closed) box are forbidden. With a non-empty `when`,
/// the rule applies only to states whose context matches every entry and
/// additionally gates the artifact's reward to zero there.
struct ForbiddenBox {
  std::vector<double> lo;
  std::vector<double> hi;
  Context when;
};

/// Requires <normal, s> <= offset.
struct Halfspace {
  std::vector<double> normal;
  double offset = 0.0;
};

/// Model property: reward may differ by at most max_delta across values of
/// `attribute`. Never fires pointwise.
struct Counterfactual {
  std::string attribute;
  double max_delta = 0.0;
};

using ConstraintKind = std::variant<ForbiddenBox, Halfspace, Counterfactual>;

struct Constraint {
  std::string id;
  ConstraintKind kind;
  std::string description;

  void validate() const;
};

class ConstraintSet {
 public:
  ConstraintSet() = default;
  /// Validates every constraint and id uniqueness.
  explicit ConstraintSet(std::vector<Constraint> constraints);

  const std::vector<Constraint>& constraints() const { return constraints_; }
  bool empty() const { return constraints_.empty(); }
  /// Content hash of the canonical JSON document.
  std::string hash() const;

  std::string to_json() const;
  static ConstraintSet from_json(const std::string& text);

  /// Reward gates for the context-conditioned forbidden boxes.
  std::vector<ContextGate> gates() const;

 private:
  std::vector<Constraint> constraints_;
};

/// Ids of geometric constraints violated by s, in set order.
std::vector<std::string> violates(const ConstraintSet& cset, const StateVec& s);

struct Rejection {
  StateVec state;
  std::vector<std::string> constraint_ids;
};

struct FilterResult {
  ExpertDataset kept;
  std::vector<Rejection> rejected;
};

/// Throws a precondition error when nothing survives.
FilterResult filter_dataset(const ExpertDataset& data, const ConstraintSet& cset);

struct CoverageReport {
  double fraction_covered = 0.0;
  double threshold = 0.0;
  std::vector<StateVec> uncovered;
};

CoverageReport coverage_audit(const RewardArtifact& artifact, const std::vector<StateVec>& holdout,
                              double l_threshold);

struct ProbeDelta {
  std::size_t probe = 0;
  double max_delta = 0.0;
  std::string value_a;
  std::string value_b;
};

struct CheckReport {
  std::string attribute;
  double max_delta = 0.0;
  std::vector<std::string> values;
  std::vector<ProbeDelta> deltas;   // one per probe
  std::vector<std::size_t> flagged; // probes whose delta exceeds max_delta
  bool pass = true;
};

/// Known values are those carried by the probes plus any gate condition on
/// the attribute.
CheckReport counterfactual_check(const RewardArtifact& artifact, const std::vector<StateVec>& probes,
                                 const std::string& attribute, double max_delta);

struct LintReport {
  std::vector<std::string> errors;
  std::vector<std::string> warnings;
  std::size_t constraints = 0;
  bool ok() const { return errors.empty(); }
};

/// Checks a constraint document without throwing. `dims`, when nonzero, is
/// the expected state dimensionality.
LintReport lint_constraints(const std::string& text, std::size_t dims = 0);

}  // namespace flywheel
