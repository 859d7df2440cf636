#include "flywheel/audit.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "flywheel/json.hpp"

namespace flywheel {

const char* to_string(ViolationKind v) {
  switch (v) {
    case ViolationKind::constraint: return "constraint";
    case ViolationKind::oracle_unsafe: return "oracle_unsafe";
    case ViolationKind::coverage_gap: return "coverage_gap";
  }
  return "?";
}
const char* to_string(FlawStatus s) {
  switch (s) {
    case FlawStatus::open: return "open";
    case FlawStatus::triaged: return "triaged";
    case FlawStatus::resolved: return "resolved";
    case FlawStatus::benign: return "benign";
  }
  return "?";
}
const char* to_string(Verdict v) { return v == Verdict::confirmed ? "confirmed" : "benign"; }
const char* to_string(Author a) { return a == Author::human ? "human" : "agent"; }
const char* to_string(RedTeamStrategy s) {
  switch (s) {
    case RedTeamStrategy::random: return "random";
    case RedTeamStrategy::hillclimb: return "hillclimb";
    case RedTeamStrategy::anneal: return "anneal";
  }
  return "?";
}

ViolationKind violation_kind_from_string(const std::string& s) {
  if (s == "constraint") return ViolationKind::constraint;
  if (s == "oracle_unsafe") return ViolationKind::oracle_unsafe;
  if (s == "coverage_gap") return ViolationKind::coverage_gap;
  fail(ErrorCode::usage, "unknown violation kind '" + s + "'");
}
FlawStatus flaw_status_from_string(const std::string& s) {
  if (s == "open") return FlawStatus::open;
  if (s == "triaged") return FlawStatus::triaged;
  if (s == "resolved") return FlawStatus::resolved;
  if (s == "benign") return FlawStatus::benign;
  fail(ErrorCode::usage, "unknown flaw status '" + s + "'");
}
Verdict verdict_from_string(const std::string& s) {
  if (s == "confirmed") return Verdict::confirmed;
  if (s == "benign") return Verdict::benign;
  fail(ErrorCode::usage, "unknown verdict '" + s + "'");
}
Author author_from_string(const std::string& s) {
  if (s == "human") return Author::human;
  if (s == "agent") return Author::agent;
  fail(ErrorCode::usage, "unknown author '" + s + "'");
}
RedTeamStrategy red_team_strategy_from_string(const std::string& s) {
  if (s == "random") return RedTeamStrategy::random;
  if (s == "hillclimb") return RedTeamStrategy::hillclimb;
  if (s == "anneal") return RedTeamStrategy::anneal;
  fail(ErrorCode::usage, "unknown red-team strategy '" + s + "'");
}

// ---------------------------------------------------------------------------
// JSON

void to_json(json& j, const Label& l) {
  j = json{{"verdict", to_string(l.verdict)}, {"author", to_string(l.author)}, {"note", l.note},
           {"timestamp", l.timestamp}};
}
void from_json(const json& j, Label& l) {
  l.verdict = verdict_from_string(field<std::string>(j, "verdict"));
  l.author = author_from_string(field<std::string>(j, "author"));
  l.note = field<std::string>(j, "note");
  l.timestamp = field<std::uint64_t>(j, "timestamp");
}

void to_json(json& j, const FlawRecord& f) {
  j = json{{"id", f.id},
           {"state", f.state},
           {"reward_at_discovery", f.reward_at_discovery},
           {"violation", to_string(f.violation)},
           {"constraint_ids", f.constraint_ids},
           {"strategy", to_string(f.strategy)},
           {"seed", f.seed},
           {"cycle", f.cycle},
           {"status", to_string(f.status)},
           {"cluster", f.cluster ? json(*f.cluster) : json(nullptr)},
           {"label", f.label ? json(*f.label) : json(nullptr)}};
}
void from_json(const json& j, FlawRecord& f) {
  f.id = field<std::uint64_t>(j, "id");
  f.state = field<StateVec>(j, "state");
  f.reward_at_discovery = field<double>(j, "reward_at_discovery");
  f.violation = violation_kind_from_string(field<std::string>(j, "violation"));
  f.constraint_ids = field<std::vector<std::string>>(j, "constraint_ids");
  f.strategy = red_team_strategy_from_string(field<std::string>(j, "strategy"));
  f.seed = field<std::uint64_t>(j, "seed");
  f.cycle = field<std::size_t>(j, "cycle");
  f.status = flaw_status_from_string(field<std::string>(j, "status"));
  f.cluster = j.at("cluster").is_null() ? std::nullopt
                                        : std::optional<std::uint64_t>(field<std::uint64_t>(j, "cluster"));
  f.label = j.at("label").is_null() ? std::nullopt : std::optional<Label>(field<Label>(j, "label"));
}

void to_json(json& j, const GapEntry& g) {
  j = json{{"cell", g.cell}, {"center", g.center}, {"predicted_reward", g.predicted_reward},
           {"uncertainty", g.uncertainty}, {"cycle", g.cycle}};
}
void from_json(const json& j, GapEntry& g) {
  g.cell = field<std::size_t>(j, "cell");
  g.center = field<StateVec>(j, "center");
  g.predicted_reward = field<double>(j, "predicted_reward");
  g.uncertainty = field<double>(j, "uncertainty");
  g.cycle = field<std::size_t>(j, "cycle");
}

// ---------------------------------------------------------------------------
// Coverage grid

CoverageGrid::CoverageGrid(DomainBox domain, std::size_t resolution)
    : domain_(std::move(domain)), res_(resolution) {
  domain_.validate();
  require(resolution >= 1, ErrorCode::usage, "coverage resolution must be >= 1");
  require(domain_.dims() <= 3, ErrorCode::usage, "coverage grid supports d <= 3");
  std::size_t n = 1;
  for (std::size_t i = 0; i < domain_.dims(); ++i) n *= res_;
  visits_.assign(n, 0);
}

std::size_t CoverageGrid::cell_of(const StateVec& s) const {
  std::size_t cell = 0;
  std::size_t stride = 1;
  for (std::size_t i = 0; i < domain_.dims(); ++i) {
    const double u = (s[i] - domain_.lo[i]) / (domain_.hi[i] - domain_.lo[i]);
    const auto idx = static_cast<std::size_t>(std::clamp(u * static_cast<double>(res_), 0.0,
                                                         static_cast<double>(res_ - 1)));
    cell += idx * stride;
    stride *= res_;
  }
  return cell;
}

StateVec CoverageGrid::center(std::size_t cell) const {
  std::vector<double> x(domain_.dims());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t idx = cell % res_;
    cell /= res_;
    x[i] = domain_.lo[i] + (static_cast<double>(idx) + 0.5) * (domain_.hi[i] - domain_.lo[i]) /
                               static_cast<double>(res_);
  }
  return StateVec(std::move(x));
}

double CoverageGrid::cell_diagonal() const { return domain_.diagonal() / static_cast<double>(res_); }

std::uint64_t CoverageGrid::total_visits() const {
  std::uint64_t t = 0;
  for (auto v : visits_) t += v;
  return t;
}

double CoverageGrid::fraction_visited() const {
  if (visits_.empty()) return 0.0;
  const auto n = std::count_if(visits_.begin(), visits_.end(), [](auto v) { return v > 0; });
  return static_cast<double>(n) / static_cast<double>(visits_.size());
}

void CoverageGrid::set_counts(std::vector<std::uint64_t> counts) {
  require(counts.size() == visits_.size(), ErrorCode::data, "coverage snapshot has the wrong size");
  visits_ = std::move(counts);
}

// ---------------------------------------------------------------------------
// SFKB

SFKB::SFKB(DomainBox domain, std::size_t resolution) {
  append(json{{"type", "init"}, {"domain", domain}, {"resolution", resolution}});
}

void SFKB::append(const json& line) {
  apply(line);
  journal_.push_back(line.dump());
}

namespace {

int status_rank(FlawStatus s) {
  switch (s) {
    case FlawStatus::open: return 0;
    case FlawStatus::triaged: return 1;
    default: return 2;
  }
}

}  // namespace

void SFKB::apply(const json& line) {
  const auto type = field<std::string>(line, "type");
  if (type == "init") {
    coverage_ = CoverageGrid(field<DomainBox>(line, "domain"), field<std::size_t>(line, "resolution"));
  } else if (type == "flaw") {
    auto f = field<FlawRecord>(line, "flaw");
    require(f.id == flaws_.size() + 1, ErrorCode::data, "SFKB flaw ids out of sequence");
    flaws_.push_back(std::move(f));
  } else if (type == "gap") {
    gaps_.push_back(field<GapEntry>(line, "gap"));
  } else if (type == "status") {
    const auto id = field<std::uint64_t>(line, "id");
    require(id >= 1 && id <= flaws_.size(), ErrorCode::not_found, "unknown flaw id " + std::to_string(id));
    flaws_[id - 1].status = flaw_status_from_string(field<std::string>(line, "status"));
  } else if (type == "cluster") {
    const auto id = field<std::uint64_t>(line, "id");
    require(id >= 1 && id <= flaws_.size(), ErrorCode::not_found, "unknown flaw id " + std::to_string(id));
    flaws_[id - 1].cluster = field<std::uint64_t>(line, "cluster");
  } else if (type == "label") {
    const auto id = field<std::uint64_t>(line, "id");
    require(id >= 1 && id <= flaws_.size(), ErrorCode::not_found, "unknown flaw id " + std::to_string(id));
    flaws_[id - 1].label = field<Label>(line, "label");
  } else if (type == "coverage") {
    coverage_.set_counts(field<std::vector<std::uint64_t>>(line, "counts"));
  } else {
    fail(ErrorCode::data, "unknown SFKB entry type '" + type + "'");
  }
}

const FlawRecord& SFKB::flaw(std::uint64_t id) const {
  require(id >= 1 && id <= flaws_.size(), ErrorCode::not_found, "unknown flaw id " + std::to_string(id));
  return flaws_[id - 1];
}

std::vector<const FlawRecord*> SFKB::with_status(FlawStatus s) const {
  std::vector<const FlawRecord*> out;
  for (const auto& f : flaws_) {
    if (f.status == s) out.push_back(&f);
  }
  return out;
}

RecordOutcome SFKB::record_flaw(FlawRecord candidate) {
  require(!candidate.state.values.empty() && candidate.state.dims() == coverage_.domain().dims(),
          ErrorCode::usage, "malformed flaw record: state dimensionality");
  require(std::isfinite(candidate.reward_at_discovery), ErrorCode::usage, "malformed flaw record: reward");
  require(candidate.violation != ViolationKind::constraint || !candidate.constraint_ids.empty(),
          ErrorCode::usage, "malformed flaw record: constraint flaw without ids");
  const double rho = dedupe_radius();
  for (const auto& f : flaws_) {
    if (f.status == FlawStatus::open && f.violation == candidate.violation &&
        distance(f.state, candidate.state) <= rho) {
      return {f.id, true};
    }
  }
  candidate.id = flaws_.size() + 1;
  candidate.status = FlawStatus::open;
  candidate.cluster.reset();
  candidate.label.reset();
  append(json{{"type", "flaw"}, {"flaw", candidate}});
  return {candidate.id, false};
}

bool SFKB::add_gap(const GapEntry& gap) {
  for (const auto& g : gaps_) {
    if (g.cell == gap.cell) return false;
  }
  append(json{{"type", "gap"}, {"gap", gap}});
  return true;
}

void SFKB::set_status(std::uint64_t id, FlawStatus status) {
  const auto& f = flaw(id);
  require(status_rank(status) > status_rank(f.status), ErrorCode::conflict,
          std::string("flaw ") + std::to_string(id) + " cannot move from " + to_string(f.status) + " to " +
              to_string(status));
  append(json{{"type", "status"}, {"id", id}, {"status", to_string(status)}});
}

void SFKB::set_cluster(std::uint64_t id, std::uint64_t cluster) {
  flaw(id);
  append(json{{"type", "cluster"}, {"id", id}, {"cluster", cluster}});
}

void SFKB::set_label(std::uint64_t id, const Label& label) {
  require(!flaw(id).label, ErrorCode::conflict, "flaw " + std::to_string(id) + " is already labeled");
  append(json{{"type", "label"}, {"id", id}, {"label", label}});
}

void SFKB::snapshot_coverage() { append(json{{"type", "coverage"}, {"counts", coverage_.counts()}}); }

std::string SFKB::to_jsonl() const {
  std::string out;
  for (const auto& l : journal_) {
    out += l;
    out += '\n';
  }
  return out;
}

SFKB SFKB::from_jsonl(const std::string& text) {
  SFKB kb;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const json j = parse_json(line, "SFKB line " + std::to_string(n));
    require(n > 1 || field<std::string>(j, "type") == "init", ErrorCode::data,
            "SFKB journal must start with an init entry");
    kb.apply(j);
    kb.journal_.push_back(j.dump());
  }
  require(!kb.journal_.empty(), ErrorCode::data, "empty SFKB journal");
  return kb;
}

// ---------------------------------------------------------------------------
// Red team

void RedTeamConfig::validate() const {
  require(budget >= 1, ErrorCode::usage, "red-team budget must be >= 1");
  require(theta_high > 0.0 && theta_high < 1.0, ErrorCode::usage, "theta_high must lie in (0,1)");
  require(step > 0.0, ErrorCode::usage, "red-team step must be > 0");
  require(restarts >= 1, ErrorCode::usage, "red-team restarts must be >= 1");
  if (region) require(region->radius > 0.0, ErrorCode::usage, "search region radius must be > 0");
}

namespace {

class Searcher {
 public:
  Searcher(const RewardArtifact& artifact, const ConstraintSet& cset, const Judge& judge,
           const RedTeamConfig& cfg, const SFKB& sfkb)
      : artifact_(artifact), cset_(cset), judge_(judge), cfg_(cfg), rng_(cfg.seed) {
    const auto& domain = artifact.domain;
    if (cfg.region) {
      require(domain.contains(cfg.region->center), ErrorCode::usage, "search region center outside the domain");
    }
    if (!cfg.gap_seeding) return;
    std::vector<const GapEntry*> open;
    for (const auto& g : sfkb.gaps()) {
      if (sfkb.coverage().visits(g.cell) != 0) continue;
      if (cfg.region && distance(g.center.values, cfg.region->center) > cfg.region->radius) continue;
      open.push_back(&g);
    }
    std::stable_sort(open.begin(), open.end(), [](const GapEntry* a, const GapEntry* b) {
      if (a->uncertainty != b->uncertainty) return a->uncertainty > b->uncertainty;
      if (a->predicted_reward != b->predicted_reward) return a->predicted_reward > b->predicted_reward;
      return a->cell < b->cell;
    });
    for (const auto* g : open) seeds_.push_back(g->center);
  }

  bool exhausted() const { return out.evaluations >= cfg_.budget; }

  StateVec draw() {
    if (next_seed_ < seeds_.size()) return seeds_[next_seed_++];
    return uniform();
  }

  StateVec uniform() {
    const auto& dom = artifact_.domain;
    const std::size_t d = dom.dims();
    std::vector<double> x(d);
    if (!cfg_.region) {
      for (std::size_t i = 0; i < d; ++i) x[i] = rng_.uniform(dom.lo[i], dom.hi[i]);
      return StateVec(std::move(x));
    }
    const auto& ball = *cfg_.region;
    for (std::size_t attempt = 0; attempt < 100000; ++attempt) {
      for (std::size_t i = 0; i < d; ++i) {
        const double lo = std::max(dom.lo[i], ball.center[i] - ball.radius);
        const double hi = std::min(dom.hi[i], ball.center[i] + ball.radius);
        x[i] = rng_.uniform(lo, hi);
      }
      if (distance(x, ball.center) <= ball.radius) return StateVec(x);
    }
    return StateVec(ball.center);
  }

  /// Keeps a proposal inside the domain and the search ball.
  StateVec project(std::vector<double> x) const {
    x = artifact_.domain.clamp(std::move(x));
    if (cfg_.region) {
      const auto& ball = *cfg_.region;
      const double dist = distance(x, ball.center);
      if (dist > ball.radius) {
        for (std::size_t i = 0; i < x.size(); ++i) {
          x[i] = ball.center[i] + (x[i] - ball.center[i]) * ball.radius / dist;
        }
        x = artifact_.domain.clamp(std::move(x));
      }
    }
    return StateVec(std::move(x));
  }

  /// Objective: reward on unsafe states, 0 on safe ones.
  double evaluate(const StateVec& s) {
    ++out.evaluations;
    out.evaluated.push_back(s);
    const double r = reward(artifact_, s);
    auto ids = violates(cset_, s);
    const bool unsafe = !ids.empty() || judge_(s);
    if (!unsafe) return 0.0;
    out.max_unsafe_reward = std::max(out.max_unsafe_reward, r);
    if (r >= cfg_.theta_high) {
      FlawRecord f;
      f.state = s;
      f.reward_at_discovery = r;
      f.violation = ids.empty() ? ViolationKind::oracle_unsafe : ViolationKind::constraint;
      f.constraint_ids = std::move(ids);
      f.strategy = cfg_.strategy;
      f.seed = cfg_.seed;
      out.flaws.push_back(std::move(f));
      if (!out.first_flaw_eval) out.first_flaw_eval = out.evaluations;
    }
    return r;
  }

  void run_random() {
    while (!exhausted()) evaluate(draw());
  }

  void run_local(bool anneal) {
    const std::size_t restarts = std::min(cfg_.restarts, cfg_.budget);
    const std::size_t d = artifact_.domain.dims();
    for (std::size_t r = 0; r < restarts && !exhausted(); ++r) {
      const std::size_t per = cfg_.budget / restarts + (r + 1 == restarts ? cfg_.budget % restarts : 0);
      const std::size_t stop = out.evaluations + per;
      StateVec x = draw();
      double fx = evaluate(x);
      constexpr double t0 = 0.1;
      constexpr double t1 = 1e-3;
      for (std::size_t k = 1; out.evaluations < stop; ++k) {
        std::vector<double> y = x.values;
        if (anneal) {
          for (std::size_t i = 0; i < d; ++i) y[i] += cfg_.step * rng_.normal();
        } else {
          const std::size_t i = rng_.index(d);
          y[i] += (rng_.uniform() < 0.5 ? -1.0 : 1.0) * cfg_.step;
        }
        StateVec cand = project(std::move(y));
        const double fy = evaluate(cand);
        bool accept = fy >= fx;
        if (anneal && !accept) {
          const double temp = t0 * std::pow(t1 / t0, static_cast<double>(k) / static_cast<double>(per));
          accept = rng_.uniform() < std::exp((fy - fx) / temp);
        }
        if (accept) {
          x = std::move(cand);
          fx = fy;
        }
      }
    }
  }

  SearchResult out;

 private:
  const RewardArtifact& artifact_;
  const ConstraintSet& cset_;
  const Judge& judge_;
  const RedTeamConfig& cfg_;
  Rng rng_;
  std::vector<StateVec> seeds_;
  std::size_t next_seed_ = 0;
};

}  // namespace

SearchResult red_team_search(const RewardArtifact& artifact, const ConstraintSet& cset, const Judge& judge,
                             const RedTeamConfig& cfg, const SFKB& sfkb) {
  cfg.validate();
  Searcher s(artifact, cset, judge, cfg, sfkb);
  switch (cfg.strategy) {
    case RedTeamStrategy::random: s.run_random(); break;
    case RedTeamStrategy::hillclimb: s.run_local(false); break;
    case RedTeamStrategy::anneal: s.run_local(true); break;
  }
  return std::move(s.out);
}

// ---------------------------------------------------------------------------
// Blue team

std::vector<GapEntry> blue_team_scan(const SFKB& sfkb, const RewardArtifact& artifact,
                                     std::span<const ScorerModel> ensemble, const BlueTeamConfig& cfg,
                                     std::size_t cycle) {
  const auto& grid = sfkb.coverage();
  require(grid.cells() > 0, ErrorCode::precondition, "coverage map not initialized");
  std::vector<GapEntry> out;
  std::vector<double> ls;
  for (std::size_t cell = 0; cell < grid.cells(); ++cell) {
    if (grid.visits(cell) != 0) continue;
    const StateVec c = grid.center(cell);
    const double r = reward(artifact, c);
    double u = 0.0;
    if (!ensemble.empty()) {
      ls.clear();
      for (const auto& m : ensemble) ls.push_back(m.score(c));
      ls.push_back(artifact.scorer.score(c));
      double mean = 0.0;
      for (double l : ls) mean += l;
      mean /= static_cast<double>(ls.size());
      double var = 0.0;
      for (double l : ls) var += (l - mean) * (l - mean);
      u = std::sqrt(var / static_cast<double>(ls.size()));
    }
    if (r >= cfg.theta_high / 2 || u >= cfg.u_gap) out.push_back(GapEntry{cell, c, r, u, cycle});
  }
  return out;
}

// ---------------------------------------------------------------------------

json AuditReport::to_json() const {
  return json{{"cycle", cycle},
              {"new_flaws", new_flaws},
              {"deduped", deduped},
              {"candidates", candidates},
              {"evaluations", evaluations},
              {"gaps_added", gaps_added},
              {"coverage_fraction", coverage_fraction},
              {"max_unsafe_reward", max_unsafe_reward},
              {"first_flaw_eval", first_flaw_eval ? json(*first_flaw_eval) : json(nullptr)},
              {"evaluations_per_config", evaluations_per_config}};
}

AuditReport run_audit_phase(const RewardArtifact& artifact, const ConstraintSet& cset, const Judge& judge,
                            std::span<const RedTeamConfig> configs, SFKB& sfkb,
                            std::span<const ScorerModel> ensemble, const BlueTeamConfig& blue,
                            std::size_t cycle) {
  require(!configs.empty(), ErrorCode::precondition, "audit needs at least one red-team config");
  AuditReport report;
  report.cycle = cycle;
  for (const auto& g : blue_team_scan(sfkb, artifact, ensemble, blue, cycle)) {
    if (sfkb.add_gap(g)) ++report.gaps_added;
  }

  // Searches are independent: all read the same SFKB snapshot.
  std::vector<SearchResult> results;
  results.reserve(configs.size());
  for (const auto& cfg : configs) results.push_back(red_team_search(artifact, cset, judge, cfg, sfkb));

  std::size_t offset = 0;
  for (std::size_t k = 0; k < results.size(); ++k) {
    auto& res = results[k];
    for (const auto& s : res.evaluated) sfkb.coverage().visit(s);
    for (auto& f : res.flaws) {
      // Self-check before anything reaches the knowledge base.
      const double r = reward(artifact, f.state);
      const bool unsafe = !violates(cset, f.state).empty() || judge(f.state);
      require(r >= configs[k].theta_high && unsafe, ErrorCode::precondition,
              "red team emitted a record that fails its own predicate");
      f.cycle = cycle;
      ++report.candidates;
      const auto outcome = sfkb.record_flaw(f);
      if (outcome.deduped) {
        ++report.deduped;
      } else {
        report.new_flaws.push_back(outcome.id);
      }
    }
    if (res.first_flaw_eval && !report.first_flaw_eval) report.first_flaw_eval = offset + *res.first_flaw_eval;
    offset += res.evaluations;
    report.evaluations += res.evaluations;
    report.evaluations_per_config.push_back(res.evaluations);
    report.max_unsafe_reward = std::max(report.max_unsafe_reward, res.max_unsafe_reward);
  }
  sfkb.snapshot_coverage();
  report.coverage_fraction = sfkb.coverage().fraction_visited();
  return report;
}

}  // namespace flywheel
