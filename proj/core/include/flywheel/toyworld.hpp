#pragma once

#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "flywheel/common.hpp"

namespace flywheel {

struct Disk {
  std::vector<double> center;
  double radius = 0.0;
};

struct Box {
  std::vector<double> lo;
  std::vector<double> hi;
};

/// Segment a-b thickened by radius.
struct Capsule {
  std::vector<double> a;
  std::vector<double> b;
  double radius = 0.0;
};

using Region = std::variant<Disk, Box, Capsule>;

bool region_contains(const Region& region, std::span<const double> x);
/// True when the whole region lies inside the box (exact for all three shapes).
bool region_inside(const Region& region, const DomainBox& box);
double capsule_distance(const Capsule& c, std::span<const double> x);

/// One truncated-Gaussian component of the expert generator. Samples are
/// drawn from N(mean, diag(sd^2)) and kept only inside `region`.
struct GaussianComponent {
  std::size_t region = 0;
  std::vector<double> mean;
  std::vector<double> sd;
  double weight = 1.0;
};

struct WorldSpec {
  std::string name;
  DomainBox domain;
  std::vector<Region> safe_regions;
  std::vector<GaussianComponent> generator;
  /// Named reporting windows (e.g. the "gap" between the two ridges).
  std::map<std::string, Box> probes;
  std::uint64_t seed = 0;
};

enum class Split { train, holdout };

struct ExpertDataset {
  std::vector<StateVec> states;
  std::vector<Split> split;
  std::string provenance;

  std::vector<StateVec> train() const;
  std::vector<StateVec> holdout() const;
  std::size_t size() const { return states.size(); }
};

struct MassEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t unsafe_samples = 0;
  std::size_t draws = 0;
};

using RewardFn = std::function<double(const StateVec&)>;

class ToyWorld {
 public:
  /// Validates the spec; throws usage errors on malformed bounds or regions
  /// that leave the domain.
  explicit ToyWorld(WorldSpec spec);

  const WorldSpec& spec() const { return spec_; }
  const DomainBox& domain() const { return spec_.domain; }
  std::size_t dims() const { return spec_.domain.dims(); }

  /// Ground-truth membership in the union of safe regions. Throws
  /// out_of_domain for states outside the box.
  bool is_safe(const StateVec& s) const;

  ExpertDataset sample_expert(std::size_t n, double holdout_frac,
                              std::uint64_t seed) const;

  /// Monte-Carlo mean of `reward` over uniform unsafe states. When `window`
  /// is given, draws are uniform over that box instead of the whole domain.
  MassEstimate unsafe_reward_mass(const RewardFn& reward, std::size_t n_mc,
                                  std::uint64_t seed,
                                  const std::optional<Box>& window = std::nullopt) const;

  StateVec uniform_state(Rng& rng) const;

 private:
  WorldSpec spec_;
};

ToyWorld make_world(WorldSpec spec);

/// Bundled presets: "two-ridges", "planted-bump", "unit-disk".
WorldSpec preset_world(const std::string& name, std::uint64_t seed = 7);
std::vector<std::string> preset_names();

/// Geometry of the two-ridges preset, exposed for tests and docs.
struct TwoRidgesGeometry {
  static constexpr double kBandwidth = 0.05;             // default kernel sigma
  static constexpr double kSeparation = 3 * kBandwidth;  // centreline spacing
  static constexpr double kRadius = 0.06;
  static constexpr double kX0 = 0.15;
  static constexpr double kX1 = 0.85;
  static constexpr double kMidY = 0.5;
};

}  // namespace flywheel
