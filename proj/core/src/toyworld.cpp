#include "flywheel/toyworld.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace flywheel {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::size_t region_dims(const Region& r) {
  return std::visit(overloaded{[](const Disk& d) { return d.center.size(); },
                               [](const Box& b) { return b.lo.size(); },
                               [](const Capsule& c) { return c.a.size(); }},
                    r);
}

void validate_region(const Region& region, const DomainBox& box, std::size_t index) {
  const std::string where = "safe region " + std::to_string(index);
  require(region_dims(region) == box.dims(), ErrorCode::usage,
          where + " has wrong dimensionality");
  std::visit(overloaded{
                 [&](const Disk& d) {
                   require(d.radius > 0.0, ErrorCode::usage, where + ": disk radius must be > 0");
                 },
                 [&](const Box& b) {
                   require(b.hi.size() == b.lo.size(), ErrorCode::usage, where + ": box lo/hi mismatch");
                   for (std::size_t i = 0; i < b.lo.size(); ++i) {
                     require(b.lo[i] < b.hi[i], ErrorCode::usage, where + ": box bounds not ordered");
                   }
                 },
                 [&](const Capsule& c) {
                   require(c.b.size() == c.a.size(), ErrorCode::usage,
                           where + ": capsule endpoint mismatch");
                   require(c.radius > 0.0, ErrorCode::usage, where + ": capsule radius must be > 0");
                 }},
             region);
  require(region_inside(region, box), ErrorCode::usage, where + " lies outside the domain box");
}

}  // namespace

double capsule_distance(const Capsule& c, std::span<const double> x) {
  const std::size_t d = c.a.size();
  double ab2 = 0.0;
  double t = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double ab = c.b[i] - c.a[i];
    ab2 += ab * ab;
    t += (x[i] - c.a[i]) * ab;
  }
  t = ab2 > 0.0 ? std::clamp(t / ab2, 0.0, 1.0) : 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double p = c.a[i] + t * (c.b[i] - c.a[i]);
    acc += (x[i] - p) * (x[i] - p);
  }
  return std::sqrt(acc);
}

bool region_contains(const Region& region, std::span<const double> x) {
  return std::visit(
      overloaded{[&](const Disk& d) {
                   return squared_distance(d.center, x) <= d.radius * d.radius;
                 },
                 [&](const Box& b) {
                   for (std::size_t i = 0; i < b.lo.size(); ++i) {
                     if (x[i] < b.lo[i] || x[i] > b.hi[i]) return false;
                   }
                   return true;
                 },
                 [&](const Capsule& c) { return capsule_distance(c, x) <= c.radius; }},
      region);
}

bool region_inside(const Region& region, const DomainBox& box) {
  auto ball_inside = [&](std::span<const double> c, double r) {
    for (std::size_t i = 0; i < box.dims(); ++i) {
      if (c[i] - r < box.lo[i] || c[i] + r > box.hi[i]) return false;
    }
    return true;
  };
  return std::visit(overloaded{[&](const Disk& d) { return ball_inside(d.center, d.radius); },
                               [&](const Box& b) {
                                 return box.contains(b.lo) && box.contains(b.hi);
                               },
                               [&](const Capsule& c) {
                                 return ball_inside(c.a, c.radius) && ball_inside(c.b, c.radius);
                               }},
                    region);
}

std::vector<StateVec> ExpertDataset::train() const {
  std::vector<StateVec> out;
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (split[i] == Split::train) out.push_back(states[i]);
  }
  return out;
}

std::vector<StateVec> ExpertDataset::holdout() const {
  std::vector<StateVec> out;
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (split[i] == Split::holdout) out.push_back(states[i]);
  }
  return out;
}

ToyWorld::ToyWorld(WorldSpec spec) : spec_(std::move(spec)) {
  spec_.domain.validate();
  require(!spec_.safe_regions.empty(), ErrorCode::usage, "world needs at least one safe region");
  for (std::size_t i = 0; i < spec_.safe_regions.size(); ++i) {
    validate_region(spec_.safe_regions[i], spec_.domain, i);
  }
  for (std::size_t i = 0; i < spec_.generator.size(); ++i) {
    const auto& g = spec_.generator[i];
    const std::string where = "generator component " + std::to_string(i);
    require(g.region < spec_.safe_regions.size(), ErrorCode::usage, where + " names an unknown region");
    require(g.mean.size() == dims() && g.sd.size() == dims(), ErrorCode::usage,
            where + " has wrong dimensionality");
    require(region_contains(spec_.safe_regions[g.region], g.mean), ErrorCode::usage,
            where + " mean lies outside its region");
    require(g.weight > 0.0, ErrorCode::usage, where + " weight must be > 0");
    for (double s : g.sd) require(s > 0.0, ErrorCode::usage, where + " sd must be > 0");
  }
  for (const auto& [name, probe] : spec_.probes) {
    require(probe.lo.size() == dims() && probe.hi.size() == dims(), ErrorCode::usage,
            "probe '" + name + "' has wrong dimensionality");
  }
}

ToyWorld make_world(WorldSpec spec) { return ToyWorld(std::move(spec)); }

bool ToyWorld::is_safe(const StateVec& s) const {
  require(spec_.domain.contains(s), ErrorCode::out_of_domain, "state outside the domain box");
  for (const auto& r : spec_.safe_regions) {
    if (region_contains(r, s.values)) return true;
  }
  return false;
}

StateVec ToyWorld::uniform_state(Rng& rng) const {
  std::vector<double> v(dims());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = rng.uniform(spec_.domain.lo[i], spec_.domain.hi[i]);
  return StateVec(std::move(v));
}

ExpertDataset ToyWorld::sample_expert(std::size_t n, double holdout_frac, std::uint64_t seed) const {
  require(n >= 10, ErrorCode::precondition, "sample_expert needs n >= 10");
  require(holdout_frac > 0.0 && holdout_frac <= 0.5, ErrorCode::precondition,
          "holdout_frac must lie in (0, 0.5]");

  // Without an explicit generator, fall back to one unit-weight component per
  // region centred on a representative point.
  std::vector<GaussianComponent> comps = spec_.generator;
  if (comps.empty()) {
    for (std::size_t r = 0; r < spec_.safe_regions.size(); ++r) {
      GaussianComponent g;
      g.region = r;
      std::visit(overloaded{[&](const Disk& d) {
                              g.mean = d.center;
                              g.sd.assign(dims(), d.radius / 2);
                            },
                            [&](const Box& b) {
                              g.mean.resize(dims());
                              g.sd.resize(dims());
                              for (std::size_t i = 0; i < dims(); ++i) {
                                g.mean[i] = 0.5 * (b.lo[i] + b.hi[i]);
                                g.sd[i] = 0.25 * (b.hi[i] - b.lo[i]);
                              }
                            },
                            [&](const Capsule& c) {
                              g.mean.resize(dims());
                              for (std::size_t i = 0; i < dims(); ++i) g.mean[i] = 0.5 * (c.a[i] + c.b[i]);
                              g.sd.assign(dims(), std::max(c.radius, 0.5 * distance(c.a, c.b)) / 2);
                            }},
                 spec_.safe_regions[r]);
      comps.push_back(std::move(g));
    }
  }
  double total_weight = 0.0;
  for (const auto& c : comps) total_weight += c.weight;

  Rng rng(seed);
  ExpertDataset out;
  out.states.reserve(n);
  const std::size_t max_attempts = 1000 * n;
  std::size_t attempts = 0;
  std::vector<double> x(dims());
  while (out.states.size() < n) {
    require(attempts++ < max_attempts, ErrorCode::exhausted,
            "expert rejection sampling exceeded 1000*n attempts (degenerate region)");
    double pick = rng.uniform() * total_weight;
    std::size_t ci = 0;
    while (ci + 1 < comps.size() && pick >= comps[ci].weight) {
      pick -= comps[ci].weight;
      ++ci;
    }
    const auto& c = comps[ci];
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = c.mean[i] + c.sd[i] * rng.normal();
    if (!spec_.domain.contains(x)) continue;
    if (!region_contains(spec_.safe_regions[c.region], x)) continue;
    out.states.emplace_back(x);
  }

  const auto n_holdout = static_cast<std::size_t>(std::llround(holdout_frac * static_cast<double>(n)));
  out.split.assign(n, Split::train);
  for (std::size_t i = n - n_holdout; i < n; ++i) out.split[i] = Split::holdout;

  std::ostringstream prov;
  prov << "world=" << spec_.name << " n=" << n << " holdout_frac=" << holdout_frac << " seed=" << seed;
  out.provenance = prov.str();
  return out;
}

MassEstimate ToyWorld::unsafe_reward_mass(const RewardFn& reward, std::size_t n_mc, std::uint64_t seed,
                                          const std::optional<Box>& window) const {
  require(n_mc >= 1000, ErrorCode::precondition, "unsafe_reward_mass needs n_mc >= 1000");
  Rng rng(seed);
  const DomainBox box = window ? DomainBox{window->lo, window->hi} : spec_.domain;
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t count = 0;
  std::vector<double> x(dims());
  for (std::size_t k = 0; k < n_mc; ++k) {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(box.lo[i], box.hi[i]);
    StateVec s(x);
    if (is_safe(s)) continue;
    const double r = reward(s);
    sum += r;
    sum_sq += r * r;
    ++count;
  }
  require(count > 0, ErrorCode::exhausted, "no unsafe state found in the Monte-Carlo draws");
  MassEstimate est;
  est.draws = n_mc;
  est.unsafe_samples = count;
  est.mean = sum / static_cast<double>(count);
  if (count > 1) {
    const double var = std::max(0.0, (sum_sq - sum * est.mean) / static_cast<double>(count - 1));
    est.std_error = std::sqrt(var / static_cast<double>(count));
  }
  return est;
}

std::vector<std::string> preset_names() { return {"two-ridges", "planted-bump", "unit-disk"}; }

WorldSpec preset_world(const std::string& name, std::uint64_t seed) {
  WorldSpec spec;
  spec.name = name;
  spec.seed = seed;
  spec.domain = DomainBox::unit(2);
  if (name == "two-ridges") {
    using G = TwoRidgesGeometry;
    const double ys[2] = {G::kMidY - G::kSeparation / 2, G::kMidY + G::kSeparation / 2};
    for (std::size_t r = 0; r < 2; ++r) {
      spec.safe_regions.emplace_back(Capsule{{G::kX0, ys[r]}, {G::kX1, ys[r]}, G::kRadius});
      for (double cx = 0.2; cx < 0.81; cx += 0.1) {
        spec.generator.push_back(GaussianComponent{r, {cx, ys[r]}, {0.05, 0.012}, 1.0});
      }
    }
    // Unsafe band between the ridges, where smooth scorers bridge the modes.
    const double gap_half = G::kSeparation / 2 - G::kRadius;
    spec.probes["gap"] = Box{{G::kX0, G::kMidY - gap_half}, {G::kX1, G::kMidY + gap_half}};
  } else if (name == "planted-bump") {
    spec.safe_regions.emplace_back(Disk{{0.3, 0.3}, 0.15});
    spec.generator.push_back(GaussianComponent{0, {0.3, 0.3}, {0.06, 0.06}, 1.0});
    spec.probes["bump"] = Box{{0.65, 0.6}, {0.85, 0.8}};
  } else if (name == "unit-disk") {
    spec.safe_regions.emplace_back(Disk{{0.5, 0.5}, 0.2});
  } else {
    fail(ErrorCode::usage, "unknown world preset '" + name + "'");
  }
  return spec;
}

}  // namespace flywheel
