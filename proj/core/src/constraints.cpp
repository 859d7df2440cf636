#include "flywheel/constraints.hpp"

#include <algorithm>
#include <set>

#include "flywheel/json.hpp"

namespace flywheel {

void Constraint::validate() const {
  require(!id.empty(), ErrorCode::usage, "constraint id must be non-empty");
  if (const auto* b = std::get_if<ForbiddenBox>(&kind)) {
    require(!b->lo.empty() && b->lo.size() == b->hi.size(), ErrorCode::usage,
            "constraint '" + id + "': box bounds must have equal, non-zero length");
    for (std::size_t i = 0; i < b->lo.size(); ++i) {
      require(b->lo[i] <= b->hi[i], ErrorCode::usage, "constraint '" + id + "': box bounds out of order");
    }
  } else if (const auto* h = std::get_if<Halfspace>(&kind)) {
    const bool nonzero = std::any_of(h->normal.begin(), h->normal.end(), [](double v) { return v != 0.0; });
    require(nonzero, ErrorCode::usage, "constraint '" + id + "': halfspace normal must be non-zero");
  } else {
    const auto& c = std::get<Counterfactual>(kind);
    require(!c.attribute.empty(), ErrorCode::usage, "constraint '" + id + "': counterfactual needs an attribute");
    require(c.max_delta >= 0.0 && c.max_delta <= 1.0, ErrorCode::usage,
            "constraint '" + id + "': max_delta must lie in [0,1]");
  }
}

namespace {

json constraint_json(const Constraint& c) {
  json j{{"id", c.id}, {"description", c.description}};
  if (const auto* b = std::get_if<ForbiddenBox>(&c.kind)) {
    j["kind"] = "forbidden_box";
    j["lo"] = b->lo;
    j["hi"] = b->hi;
    if (!b->when.empty()) j["when"] = b->when;
  } else if (const auto* h = std::get_if<Halfspace>(&c.kind)) {
    j["kind"] = "halfspace";
    j["normal"] = h->normal;
    j["offset"] = h->offset;
  } else {
    const auto& cf = std::get<Counterfactual>(c.kind);
    j["kind"] = "counterfactual";
    j["attribute"] = cf.attribute;
    j["max_delta"] = cf.max_delta;
  }
  return j;
}

Constraint constraint_from(const json& j) {
  Constraint c;
  c.id = field<std::string>(j, "id");
  c.description = j.contains("description") ? field<std::string>(j, "description") : "";
  const auto kind = field<std::string>(j, "kind");
  if (kind == "forbidden_box") {
    ForbiddenBox b{field<std::vector<double>>(j, "lo"), field<std::vector<double>>(j, "hi"), {}};
    if (j.contains("when")) b.when = field<Context>(j, "when");
    c.kind = std::move(b);
  } else if (kind == "halfspace") {
    c.kind = Halfspace{field<std::vector<double>>(j, "normal"), field<double>(j, "offset")};
  } else if (kind == "counterfactual") {
    c.kind = Counterfactual{field<std::string>(j, "attribute"), field<double>(j, "max_delta")};
  } else {
    fail(ErrorCode::data, "constraint '" + c.id + "': unknown kind '" + kind + "'");
  }
  return c;
}

bool in_box(const ForbiddenBox& b, const StateVec& s) {
  if (s.dims() != b.lo.size()) return false;
  for (std::size_t i = 0; i < b.lo.size(); ++i) {
    if (s[i] < b.lo[i] || s[i] > b.hi[i]) return false;
  }
  return true;
}

bool context_matches(const Context& when, const StateVec& s) {
  for (const auto& [k, v] : when) {
    const auto it = s.context.find(k);
    if (it == s.context.end() || it->second != v) return false;
  }
  return true;
}

}  // namespace

ConstraintSet::ConstraintSet(std::vector<Constraint> constraints) : constraints_(std::move(constraints)) {
  std::set<std::string> ids;
  for (const auto& c : constraints_) {
    c.validate();
    require(ids.insert(c.id).second, ErrorCode::usage, "duplicate constraint id '" + c.id + "'");
  }
}

std::string ConstraintSet::to_json() const {
  json arr = json::array();
  for (const auto& c : constraints_) arr.push_back(constraint_json(c));
  return json{{"constraints", arr}}.dump(1);
}

std::string ConstraintSet::hash() const {
  json arr = json::array();
  for (const auto& c : constraints_) arr.push_back(constraint_json(c));
  return content_hash(arr.dump());
}

ConstraintSet ConstraintSet::from_json(const std::string& text) {
  const json j = parse_json(text, "constraint file");
  require(j.is_object() && j.contains("constraints") && j.at("constraints").is_array(), ErrorCode::data,
          "constraint file needs a 'constraints' array");
  std::vector<Constraint> cs;
  for (const auto& item : j.at("constraints")) cs.push_back(constraint_from(item));
  try {
    return ConstraintSet(std::move(cs));
  } catch (const Error& e) {
    fail(ErrorCode::data, e.what());
  }
}

std::vector<ContextGate> ConstraintSet::gates() const {
  std::vector<ContextGate> out;
  for (const auto& c : constraints_) {
    const auto* b = std::get_if<ForbiddenBox>(&c.kind);
    if (b && !b->when.empty()) out.push_back(ContextGate{c.id, b->when, Box{b->lo, b->hi}});
  }
  return out;
}

std::vector<std::string> violates(const ConstraintSet& cset, const StateVec& s) {
  std::vector<std::string> ids;
  for (const auto& c : cset.constraints()) {
    if (const auto* b = std::get_if<ForbiddenBox>(&c.kind)) {
      if (in_box(*b, s) && context_matches(b->when, s)) ids.push_back(c.id);
    } else if (const auto* h = std::get_if<Halfspace>(&c.kind)) {
      double dot = 0.0;
      for (std::size_t i = 0; i < std::min(h->normal.size(), s.dims()); ++i) dot += h->normal[i] * s[i];
      if (dot > h->offset) ids.push_back(c.id);
    }
  }
  return ids;
}

FilterResult filter_dataset(const ExpertDataset& data, const ConstraintSet& cset) {
  FilterResult out;
  out.kept.provenance = data.provenance;
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto ids = violates(cset, data.states[i]);
    if (ids.empty()) {
      out.kept.states.push_back(data.states[i]);
      out.kept.split.push_back(data.split[i]);
    } else {
      out.rejected.push_back(Rejection{data.states[i], std::move(ids)});
    }
  }
  require(!out.kept.states.empty(), ErrorCode::precondition,
          "constraint filter rejected every expert state; cannot seed an artifact");
  if (!out.rejected.empty()) {
    out.kept.provenance += " | filtered: " + std::to_string(out.rejected.size()) + " rejected";
  }
  return out;
}

CoverageReport coverage_audit(const RewardArtifact& artifact, const std::vector<StateVec>& holdout,
                              double l_threshold) {
  require(!holdout.empty(), ErrorCode::precondition, "coverage audit needs a non-empty holdout");
  require(l_threshold > 0.0 && l_threshold < 1.0, ErrorCode::precondition,
          "coverage threshold must lie in (0,1)");
  CoverageReport r;
  r.threshold = l_threshold;
  for (const auto& s : holdout) {
    if (artifact.scorer.score(s) < l_threshold) r.uncovered.push_back(s);
  }
  r.fraction_covered = 1.0 - static_cast<double>(r.uncovered.size()) / static_cast<double>(holdout.size());
  return r;
}

CheckReport counterfactual_check(const RewardArtifact& artifact, const std::vector<StateVec>& probes,
                                 const std::string& attribute, double max_delta) {
  CheckReport r;
  r.attribute = attribute;
  r.max_delta = max_delta;
  std::set<std::string> values;
  for (const auto& p : probes) {
    const auto it = p.context.find(attribute);
    require(it != p.context.end(), ErrorCode::precondition,
            "counterfactual probe is missing attribute '" + attribute + "'");
    values.insert(it->second);
  }
  for (const auto& g : artifact.gates) {
    const auto it = g.when.find(attribute);
    if (it != g.when.end()) values.insert(it->second);
  }
  require(values.size() >= 2, ErrorCode::precondition,
          "attribute '" + attribute + "' needs at least two known values");
  r.values.assign(values.begin(), values.end());

  for (std::size_t i = 0; i < probes.size(); ++i) {
    std::vector<double> rewards;
    for (const auto& v : r.values) {
      StateVec s = probes[i];
      s.context[attribute] = v;
      rewards.push_back(reward(artifact, s));
    }
    ProbeDelta d{i, 0.0, r.values[0], r.values[0]};
    for (std::size_t a = 0; a < rewards.size(); ++a) {
      for (std::size_t b = a + 1; b < rewards.size(); ++b) {
        const double delta = std::abs(rewards[a] - rewards[b]);
        if (delta > d.max_delta) d = ProbeDelta{i, delta, r.values[a], r.values[b]};
      }
    }
    if (d.max_delta > max_delta) r.flagged.push_back(i);
    r.deltas.push_back(std::move(d));
  }
  r.pass = r.flagged.empty();
  return r;
}

LintReport lint_constraints(const std::string& text, std::size_t dims) {
  LintReport r;
  json j;
  try {
    j = json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    r.errors.push_back(std::string("not valid JSON: ") + e.what());
    return r;
  }
  if (!j.is_object() || !j.contains("constraints") || !j.at("constraints").is_array()) {
    r.errors.push_back("document must be an object with a 'constraints' array");
    return r;
  }
  std::set<std::string> ids;
  for (std::size_t i = 0; i < j.at("constraints").size(); ++i) {
    const std::string where = "constraints[" + std::to_string(i) + "]";
    try {
      const Constraint c = constraint_from(j.at("constraints")[i]);
      c.validate();
      if (!ids.insert(c.id).second) r.errors.push_back(where + ": duplicate id '" + c.id + "'");
      if (dims != 0) {
        std::size_t n = 0;
        if (const auto* b = std::get_if<ForbiddenBox>(&c.kind)) n = b->lo.size();
        if (const auto* h = std::get_if<Halfspace>(&c.kind)) n = h->normal.size();
        if (n != 0 && n != dims) {
          r.errors.push_back(where + ": expects " + std::to_string(n) + " dims, world has " + std::to_string(dims));
        }
      }
      if (c.description.empty()) r.warnings.push_back(where + ": no description");
      ++r.constraints;
    } catch (const Error& e) {
      r.errors.push_back(where + ": " + e.what());
    }
  }
  return r;
}

}  // namespace flywheel
