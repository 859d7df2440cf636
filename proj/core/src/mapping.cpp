#include "flywheel/mapping.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace flywheel {

const char* to_string(MappingFamily f) {
  switch (f) {
    case MappingFamily::identity: return "identity";
    case MappingFamily::logistic: return "logistic";
    case MappingFamily::piecewise: return "piecewise";
  }
  return "?";
}

MappingFamily mapping_family_from_string(const std::string& s) {
  if (s == "identity") return MappingFamily::identity;
  if (s == "logistic") return MappingFamily::logistic;
  if (s == "piecewise") return MappingFamily::piecewise;
  fail(ErrorCode::usage, "unknown mapping family '" + s + "'");
}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void check_knots(const std::vector<Knot>& knots) {
  require(knots.size() >= 2, ErrorCode::monotonicity, "piecewise mapping needs >= 2 knots");
  require(knots.front().x == 0.0 && knots.back().x == 1.0, ErrorCode::monotonicity,
          "piecewise knots must start at x=0 and end at x=1");
  for (std::size_t i = 0; i < knots.size(); ++i) {
    require(knots[i].y >= 0.0 && knots[i].y <= 1.0, ErrorCode::monotonicity,
            "piecewise knot y must lie in [0,1]");
    if (i == 0) continue;
    require(knots[i].x > knots[i - 1].x, ErrorCode::monotonicity,
            "piecewise knots must be strictly increasing in x");
    require(knots[i].y >= knots[i - 1].y, ErrorCode::monotonicity,
            "piecewise knots must be nondecreasing in y (knot " + std::to_string(i) + ")");
  }
}

}  // namespace

MappingParams MappingParams::identity() { return MappingParams{}; }

MappingParams MappingParams::logistic(double mid, double steep) {
  MappingParams p;
  p.family = MappingFamily::logistic;
  p.mid = mid;
  p.steep = steep;
  p.validate();
  return p;
}

MappingParams MappingParams::piecewise(std::vector<Knot> knots) {
  MappingParams p;
  p.family = MappingFamily::piecewise;
  p.knots = std::move(knots);
  p.validate();
  return p;
}

void MappingParams::validate() const {
  switch (family) {
    case MappingFamily::identity: break;
    case MappingFamily::logistic:
      require(mid > 0.0 && mid < 1.0, ErrorCode::usage, "logistic mid must lie in (0,1)");
      require(steep > 0.0 && std::isfinite(steep), ErrorCode::usage, "logistic steepness must be > 0");
      break;
    case MappingFamily::piecewise: check_knots(knots); break;
  }
  if (suppress_below) {
    require(*suppress_below >= 0.0 && *suppress_below < 1.0, ErrorCode::usage,
            "suppress_below threshold must lie in [0,1)");
  }
}

double BetaSchedule::at(double t) const { return beta0 * std::exp(-lambda * t); }

void BetaSchedule::validate() const {
  require(beta0 > 0.0 && std::isfinite(beta0), ErrorCode::usage, "beta0 must be > 0");
  require(lambda >= 0.0 && std::isfinite(lambda), ErrorCode::usage, "beta decay must be >= 0");
}

double evaluate_unchecked(const MappingParams& psi, double l) {
  if (psi.suppress_below && l <= *psi.suppress_below) return 0.0;
  switch (psi.family) {
    case MappingFamily::identity: return l;
    case MappingFamily::logistic: {
      const double lo = sigmoid(-psi.steep * psi.mid);
      const double hi = sigmoid(psi.steep * (1.0 - psi.mid));
      return std::clamp((sigmoid(psi.steep * (l - psi.mid)) - lo) / (hi - lo), 0.0, 1.0);
    }
    case MappingFamily::piecewise: {
      const auto& k = psi.knots;
      if (k.empty()) return l;
      if (l <= k.front().x) return k.front().y;
      for (std::size_t i = 1; i < k.size(); ++i) {
        if (l <= k[i].x) {
          const double t = (l - k[i - 1].x) / (k[i].x - k[i - 1].x);
          return k[i - 1].y + t * (k[i].y - k[i - 1].y);
        }
      }
      return k.back().y;
    }
  }
  return l;
}

double apply_mapping(const MappingParams& psi, double l) {
  require(l >= 0.0 && l <= 1.0, ErrorCode::precondition, "mapping input must lie in [0,1]");
  return evaluate_unchecked(psi, l);
}

bool validate_monotone(const MappingParams& psi, std::size_t grid_n) {
  if (grid_n < 2) return false;
  double prev = evaluate_unchecked(psi, 0.0);
  for (std::size_t i = 1; i < grid_n; ++i) {
    const double l = static_cast<double>(i) / static_cast<double>(grid_n - 1);
    const double cur = evaluate_unchecked(psi, l);
    if (cur < prev - 1e-12) return false;
    prev = cur;
  }
  return true;
}

std::string describe(const SculptDirective& d) {
  std::ostringstream os;
  if (const auto* s = std::get_if<SuppressBelow>(&d)) {
    os << "suppress_below(" << s->a << ")";
  } else if (const auto* h = std::get_if<Sharpen>(&d)) {
    os << "sharpen(" << h->mid << ", " << h->steep << ")";
  } else {
    os << "set_knots(" << std::get<SetKnots>(d).knots.size() << " knots)";
  }
  return os.str();
}

MappingParams sculpt(const MappingParams& psi, const SculptDirective& directive) {
  MappingParams out = psi;
  if (const auto* s = std::get_if<SuppressBelow>(&directive)) {
    require(s->a >= 0.0 && s->a < 1.0, ErrorCode::usage, "suppress_below threshold must lie in [0,1)");
    out.suppress_below = std::max(s->a, psi.suppress_below.value_or(0.0));
  } else if (const auto* h = std::get_if<Sharpen>(&directive)) {
    out.family = MappingFamily::logistic;
    out.mid = h->mid;
    out.steep = h->steep;
    out.knots.clear();
  } else {
    const auto& knots = std::get<SetKnots>(directive).knots;
    check_knots(knots);
    out.family = MappingFamily::piecewise;
    out.knots = knots;
  }
  out.validate();
  require(validate_monotone(out, 1001), ErrorCode::monotonicity, "sculpt result is not monotone");
  out.version = psi.version + 1;
  return out;
}

MappingParams fit_mapping(std::span<const double> expert_scores, std::span<const double> negative_scores,
                          std::span<const double> mids, std::span<const double> steeps) {
  require(!expert_scores.empty() && !negative_scores.empty(), ErrorCode::precondition,
          "fit_mapping needs expert and negative scores");
  static constexpr double kMids[] = {0.3, 0.4, 0.5, 0.6, 0.7};
  static constexpr double kSteeps[] = {4.0, 8.0, 16.0};
  if (mids.empty()) mids = kMids;
  if (steeps.empty()) steeps = kSteeps;

  auto objective = [&](const MappingParams& p) {
    double e = 0.0;
    for (double l : expert_scores) e += apply_mapping(p, l);
    double n = 0.0;
    for (double l : negative_scores) n += apply_mapping(p, l);
    return e / static_cast<double>(expert_scores.size()) -
           n / static_cast<double>(negative_scores.size());
  };

  MappingParams best = MappingParams::identity();
  double best_value = objective(best);
  for (double mid : mids) {
    for (double steep : steeps) {
      const auto cand = MappingParams::logistic(mid, steep);
      const double v = objective(cand);
      if (v > best_value) {
        best_value = v;
        best = cand;
      }
    }
  }
  return best;
}

}  // namespace flywheel
