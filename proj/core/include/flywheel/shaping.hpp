#pragma once

#include <functional>
#include <string>
#include <vector>

#include "flywheel/artifact.hpp"

namespace flywheel {

/// Finite deterministic MDP. States and actions are dense indices.
struct GridMDP {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::vector<std::size_t> next;   // n_states * n_actions
  std::vector<double> base_reward; // n_states * n_actions
  double gamma = 0.95;
  std::vector<bool> terminal;      // n_states
  /// Optional embedding of each state into the artifact domain.
  std::vector<StateVec> coords;

  std::size_t to(std::size_t s, std::size_t a) const { return next[s * n_actions + a]; }
  double r(std::size_t s, std::size_t a) const { return base_reward[s * n_actions + a]; }
  void validate() const;
};

/// width x height grid, actions {up, right, down, left} (fixed order), step
/// cost -0.04, +1 on entering the goal, goal terminal. Cell (x, y) is
/// embedded at the cell center of the unit square.
GridMDP make_gridworld(std::size_t width, std::size_t height, std::size_t goal, double gamma);

GridMDP gridmdp_from_json(const std::string& text);
std::string gridmdp_to_json(const GridMDP& mdp);

/// Phi_t(s) = reward under version t. Steps past the end reuse the last one.
class PotentialSeq {
 public:
  explicit PotentialSeq(std::vector<std::function<double(const StateVec&)>> phis);
  static PotentialSeq from_artifacts(std::vector<RewardArtifact> versions);

  double operator()(std::size_t t, const StateVec& s) const;
  std::size_t size() const { return phis_.size(); }

 private:
  std::vector<std::function<double(const StateVec&)>> phis_;
};

/// gamma * Phi_{t+1}(s') - Phi_t(s).
double shaping_bonus(const PotentialSeq& seq, std::size_t t, const StateVec& s, const StateVec& s_next,
                     double gamma);

/// sum_t gamma^t F_t(s_t, s_{t+1}).
double shaped_return_delta(const std::vector<StateVec>& trajectory, const PotentialSeq& seq, double gamma);

struct PolicyResult {
  std::vector<std::size_t> action;  // greedy action per state
  std::vector<double> value;
  std::size_t sweeps = 0;
};

/// Value iteration to residual < 1e-10 (max 1e5 sweeps). With `phi`, the
/// reward becomes r + gamma*phi(s') - phi(s), phi(terminal) = 0. Greedy ties
/// go to the lowest action index (within 1e-9).
PolicyResult optimal_policy(const GridMDP& mdp, const std::function<double(std::size_t)>& phi = nullptr);

/// -kappa when reward < theta_safe, else 0.
double hard_penalty(const RewardArtifact& artifact, const StateVec& s, double theta_safe, double kappa);

/// CSV rows: t, state coords, phi_t(s_t), bonus.
std::string shaped_trace_csv(const std::vector<StateVec>& trajectory, const PotentialSeq& seq, double gamma);

}  // namespace flywheel
