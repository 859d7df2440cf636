#include "flywheel/shaping.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "flywheel/json.hpp"

namespace flywheel {

void GridMDP::validate() const {
  require(n_states >= 1 && n_actions >= 1, ErrorCode::usage, "MDP needs at least one state and action");
  require(next.size() == n_states * n_actions && base_reward.size() == n_states * n_actions,
          ErrorCode::usage, "MDP transition/reward tables have the wrong size");
  require(terminal.size() == n_states, ErrorCode::usage, "MDP terminal mask has the wrong size");
  require(gamma > 0.0 && gamma <= 1.0, ErrorCode::usage, "gamma must lie in (0, 1]");
  for (std::size_t t : next) require(t < n_states, ErrorCode::usage, "MDP transition leaves the state set");
  require(coords.empty() || coords.size() == n_states, ErrorCode::usage, "MDP coords have the wrong size");
}

GridMDP make_gridworld(std::size_t width, std::size_t height, std::size_t goal, double gamma) {
  require(width >= 1 && height >= 1 && goal < width * height, ErrorCode::usage, "bad gridworld shape");
  GridMDP m;
  m.n_states = width * height;
  m.n_actions = 4;
  m.gamma = gamma;
  m.terminal.assign(m.n_states, false);
  m.terminal[goal] = true;
  static constexpr int dx[4] = {0, 1, 0, -1};
  static constexpr int dy[4] = {1, 0, -1, 0};
  for (std::size_t s = 0; s < m.n_states; ++s) {
    const auto x = static_cast<int>(s % width);
    const auto y = static_cast<int>(s / width);
    m.coords.emplace_back(std::vector<double>{(x + 0.5) / static_cast<double>(width),
                                              (y + 0.5) / static_cast<double>(height)});
    for (std::size_t a = 0; a < 4; ++a) {
      int nx = std::clamp(x + dx[a], 0, static_cast<int>(width) - 1);
      int ny = std::clamp(y + dy[a], 0, static_cast<int>(height) - 1);
      std::size_t t = static_cast<std::size_t>(ny) * width + static_cast<std::size_t>(nx);
      if (m.terminal[s]) t = s;
      m.next.push_back(t);
      m.base_reward.push_back(m.terminal[s] ? 0.0 : (t == goal ? 1.0 : -0.04));
    }
  }
  return m;
}

GridMDP gridmdp_from_json(const std::string& text) {
  const json j = parse_json(text, "MDP spec");
  GridMDP m;
  if (j.contains("gridworld")) {
    const json& g = j.at("gridworld");
    m = make_gridworld(field<std::size_t>(g, "width"), field<std::size_t>(g, "height"),
                       field<std::size_t>(g, "goal"), field<double>(j, "gamma"));
  } else {
    m.n_states = field<std::size_t>(j, "n_states");
    m.n_actions = field<std::size_t>(j, "n_actions");
    m.next = field<std::vector<std::size_t>>(j, "next");
    m.base_reward = field<std::vector<double>>(j, "base_reward");
    m.gamma = field<double>(j, "gamma");
    m.terminal = field<std::vector<bool>>(j, "terminal");
    if (j.contains("coords")) m.coords = field<std::vector<StateVec>>(j, "coords");
  }
  m.validate();
  return m;
}

std::string gridmdp_to_json(const GridMDP& mdp) {
  json j{{"n_states", mdp.n_states}, {"n_actions", mdp.n_actions}, {"next", mdp.next},
         {"base_reward", mdp.base_reward}, {"gamma", mdp.gamma}, {"terminal", mdp.terminal},
         {"coords", mdp.coords}};
  return j.dump(1);
}

PotentialSeq::PotentialSeq(std::vector<std::function<double(const StateVec&)>> phis)
    : phis_(std::move(phis)) {
  require(!phis_.empty(), ErrorCode::precondition, "potential sequence is empty");
}

PotentialSeq PotentialSeq::from_artifacts(std::vector<RewardArtifact> versions) {
  std::vector<std::function<double(const StateVec&)>> phis;
  for (auto& v : versions) {
    phis.emplace_back([a = std::move(v)](const StateVec& s) { return reward(a, s); });
  }
  return PotentialSeq(std::move(phis));
}

double PotentialSeq::operator()(std::size_t t, const StateVec& s) const {
  return phis_[std::min(t, phis_.size() - 1)](s);
}

double shaping_bonus(const PotentialSeq& seq, std::size_t t, const StateVec& s, const StateVec& s_next,
                     double gamma) {
  return gamma * seq(t + 1, s_next) - seq(t, s);
}

double shaped_return_delta(const std::vector<StateVec>& trajectory, const PotentialSeq& seq, double gamma) {
  require(trajectory.size() >= 2, ErrorCode::precondition, "trajectory needs T >= 1");
  double total = 0.0;
  double discount = 1.0;
  for (std::size_t t = 0; t + 1 < trajectory.size(); ++t) {
    total += discount * shaping_bonus(seq, t, trajectory[t], trajectory[t + 1], gamma);
    discount *= gamma;
  }
  return total;
}

PolicyResult optimal_policy(const GridMDP& mdp, const std::function<double(std::size_t)>& phi) {
  mdp.validate();
  const bool any_terminal = std::find(mdp.terminal.begin(), mdp.terminal.end(), true) != mdp.terminal.end();
  require(mdp.gamma < 1.0 || any_terminal, ErrorCode::precondition,
          "value iteration does not converge at gamma = 1 without terminal states");

  auto potential = [&](std::size_t s) { return phi && !mdp.terminal[s] ? phi(s) : 0.0; };
  const std::size_t S = mdp.n_states;
  const std::size_t A = mdp.n_actions;
  std::vector<double> shaped(S * A);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 0; a < A; ++a) {
      const std::size_t t = mdp.to(s, a);
      shaped[s * A + a] = mdp.r(s, a) + (phi ? mdp.gamma * potential(t) - potential(s) : 0.0);
    }
  }

  PolicyResult out;
  out.value.assign(S, 0.0);
  constexpr std::size_t kMaxSweeps = 100000;
  double residual = 0.0;
  for (out.sweeps = 0; out.sweeps < kMaxSweeps;) {
    ++out.sweeps;
    residual = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
      if (mdp.terminal[s]) continue;
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < A; ++a) {
        best = std::max(best, shaped[s * A + a] + mdp.gamma * out.value[mdp.to(s, a)]);
      }
      residual = std::max(residual, std::abs(best - out.value[s]));
      out.value[s] = best;
    }
    if (residual < 1e-10) break;
  }
  require(residual < 1e-10, ErrorCode::precondition, "value iteration did not converge");

  out.action.assign(S, 0);
  for (std::size_t s = 0; s < S; ++s) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < A; ++a) {
      const double q = shaped[s * A + a] + mdp.gamma * out.value[mdp.to(s, a)];
      if (q > best + 1e-9) {
        best = q;
        out.action[s] = a;
      }
    }
  }
  return out;
}

double hard_penalty(const RewardArtifact& artifact, const StateVec& s, double theta_safe, double kappa) {
  require(kappa > 0.0, ErrorCode::precondition, "kappa must be > 0");
  require(theta_safe >= 0.0 && theta_safe <= 1.0, ErrorCode::precondition, "theta_safe must lie in [0,1]");
  return reward(artifact, s) < theta_safe ? -kappa : 0.0;
}

std::string shaped_trace_csv(const std::vector<StateVec>& trajectory, const PotentialSeq& seq, double gamma) {
  require(!trajectory.empty(), ErrorCode::precondition, "empty trajectory");
  std::ostringstream os;
  os.precision(17);
  os << "t";
  for (std::size_t i = 0; i < trajectory.front().dims(); ++i) os << ",x" << i;
  os << ",phi,bonus\n";
  for (std::size_t t = 0; t < trajectory.size(); ++t) {
    os << t;
    for (double v : trajectory[t].values) os << ',' << v;
    os << ',' << seq(t, trajectory[t]) << ',';
    if (t + 1 < trajectory.size()) os << shaping_bonus(seq, t, trajectory[t], trajectory[t + 1], gamma);
    os << '\n';
  }
  return os.str();
}

}  // namespace flywheel
