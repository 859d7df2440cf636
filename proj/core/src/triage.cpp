#include "flywheel/triage.hpp"

#include <algorithm>
#include <set>

namespace flywheel {

namespace {

double euclid(const StateVec& a, const StateVec& b) { return distance(a, b); }

}  // namespace

std::vector<FlawCluster> cluster_flaws(const std::vector<const FlawRecord*>& flaws, double rho_cluster,
                                       std::uint64_t first_id, const DistanceFn& dist) {
  require(rho_cluster > 0.0, ErrorCode::precondition, "rho_cluster must be > 0");
  const DistanceFn& d = dist ? dist : DistanceFn(euclid);
  std::vector<FlawCluster> clusters;
  std::vector<std::vector<const FlawRecord*>> members;
  for (const auto* f : flaws) {
    bool placed = false;
    for (std::size_t c = 0; c < clusters.size(); ++c) {
      if (d(clusters[c].leader, f->state) <= rho_cluster) {
        clusters[c].members.push_back(f->id);
        members[c].push_back(f);
        placed = true;
        break;
      }
    }
    if (!placed) {
      FlawCluster c;
      c.id = first_id + clusters.size();
      c.leader = f->state;
      c.members.push_back(f->id);
      clusters.push_back(std::move(c));
      members.push_back({f});
    }
  }
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    const std::size_t dims = clusters[c].leader.dims();
    std::vector<double> centroid(dims, 0.0);
    for (const auto* f : members[c]) {
      for (std::size_t i = 0; i < dims; ++i) centroid[i] += f->state[i];
    }
    for (double& v : centroid) v /= static_cast<double>(members[c].size());
    clusters[c].centroid = StateVec(centroid);
    double best = std::numeric_limits<double>::infinity();
    for (const auto* f : members[c]) {
      const double dc = d(f->state, clusters[c].centroid);
      if (dc < best) {
        best = dc;
        clusters[c].representative = f->id;
      }
    }
  }
  return clusters;
}

std::vector<FlawCluster> prioritize(std::vector<FlawCluster> clusters, const SFKB& sfkb,
                                    const RewardArtifact& artifact, std::span<const ScorerModel> ensemble) {
  for (auto& c : clusters) {
    double mean = 0.0;
    for (auto id : c.members) mean += reward(artifact, sfkb.flaw(id).state);
    mean /= static_cast<double>(c.members.size());
    const double u = ensemble.size() >= 2 ? uncertainty(ensemble, c.centroid) : 0.0;
    c.priority = mean * static_cast<double>(c.members.size()) * (1.0 + u);
  }
  std::stable_sort(clusters.begin(), clusters.end(), [](const FlawCluster& a, const FlawCluster& b) {
    if (a.priority != b.priority) return a.priority > b.priority;
    return a.id < b.id;
  });
  return clusters;
}

PropagationResult propagate_label(const Label& label, const FlawCluster& cluster, SFKB& sfkb, double rho_prop,
                                  const DistanceFn& dist) {
  require(rho_prop >= 0.0, ErrorCode::precondition, "rho_prop must be >= 0");
  require(!sfkb.flaw(cluster.representative).label, ErrorCode::conflict,
          "cluster " + std::to_string(cluster.id) + " representative is already labeled");
  const DistanceFn& d = dist ? dist : DistanceFn(euclid);
  const FlawStatus target = label.verdict == Verdict::confirmed ? FlawStatus::resolved : FlawStatus::benign;

  PropagationResult out;
  std::set<std::uint64_t> done;
  auto apply = [&](std::uint64_t id) {
    sfkb.set_label(id, label);
    if (sfkb.flaw(id).status != target) sfkb.set_status(id, target);
    done.insert(id);
    out.labeled.push_back(id);
  };

  // Representative first, so a conflict leaves the SFKB untouched.
  apply(cluster.representative);
  for (auto id : cluster.members) {
    if (done.count(id) || sfkb.flaw(id).label) continue;
    apply(id);
  }
  const std::vector<std::uint64_t> seeds = out.labeled;
  for (const auto& f : sfkb.flaws()) {
    const bool unresolved = f.status == FlawStatus::open || f.status == FlawStatus::triaged;
    if (!unresolved || f.label || done.count(f.id)) continue;
    for (auto sid : seeds) {
      const auto& s = sfkb.flaw(sid);
      if (s.violation == f.violation && d(s.state, f.state) <= rho_prop) {
        apply(f.id);
        break;
      }
    }
  }
  return out;
}

}  // namespace flywheel
