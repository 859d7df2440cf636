#pragma once

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "flywheel/common.hpp"

namespace flywheel {

enum class MappingFamily { identity, logistic, piecewise };
const char* to_string(MappingFamily f);
MappingFamily mapping_family_from_string(const std::string& s);

struct Knot {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Knot&, const Knot&) = default;
};

/// The monotone map g from expertness L in [0,1] to reward in [0,1].
///
/// The logistic family is rescaled so that g(0) = 0 and g(1) = 1:
///   g(l) = (s(steep*(l-mid)) - s(-steep*mid)) / (s(steep*(1-mid)) - s(-steep*mid))
/// with s the standard sigmoid. `suppress_below` zeroes g on [0, a]; the
/// jump at a keeps g nondecreasing.
struct MappingParams {
  MappingFamily family = MappingFamily::identity;
  double mid = 0.5;
  double steep = 1.0;
  std::vector<Knot> knots;
  std::optional<double> suppress_below;
  std::uint64_t version = 0;

  static MappingParams identity();
  static MappingParams logistic(double mid, double steep);
  /// Validating constructor; throws monotonicity errors on bad knots.
  static MappingParams piecewise(std::vector<Knot> knots);

  /// Throws when any family invariant is broken.
  void validate() const;

  friend bool operator==(const MappingParams&, const MappingParams&) = default;
};

struct BetaSchedule {
  double beta0 = 1.0;
  double lambda = 0.0;  // exponential decay rate; 0 disables decay

  double at(double t) const;
  void validate() const;
  friend bool operator==(const BetaSchedule&, const BetaSchedule&) = default;
};

/// Evaluates g(l). Requires l in [0, 1].
double apply_mapping(const MappingParams& psi, double l);

/// Evaluation without range or invariant checks (used by validate_monotone so
/// hand-built invalid parameters can be inspected).
double evaluate_unchecked(const MappingParams& psi, double l);

/// True iff g on `grid_n` uniform points over [0,1] is nondecreasing within
/// 1e-12 slack.
bool validate_monotone(const MappingParams& psi, std::size_t grid_n);

struct SuppressBelow {
  double a = 0.0;
};
struct Sharpen {
  double mid = 0.5;
  double steep = 1.0;
};
struct SetKnots {
  std::vector<Knot> knots;
};
using SculptDirective = std::variant<SuppressBelow, Sharpen, SetKnots>;

std::string describe(const SculptDirective& d);

/// Returns an edited copy with version + 1. Rejects edits that would break
/// monotonicity or the [0,1] codomain.
MappingParams sculpt(const MappingParams& psi, const SculptDirective& directive);

/// Grid search over identity and logistic(mid, steep) maximizing the mean
/// mapped expert score minus the mean mapped negative score. Ties keep the
/// earlier candidate (identity first).
MappingParams fit_mapping(std::span<const double> expert_scores,
                          std::span<const double> negative_scores,
                          std::span<const double> mids = {},
                          std::span<const double> steeps = {});

}  // namespace flywheel
