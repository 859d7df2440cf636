#include "flywheel/json.hpp"

namespace flywheel {

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::data, "malformed " + what + ": " + e.what());
  }
}

// A state without context serializes as a bare array.
void to_json(json& j, const StateVec& s) {
  if (s.context.empty()) {
    j = s.values;
  } else {
    j = json{{"values", s.values}, {"context", s.context}};
  }
}

void from_json(const json& j, StateVec& s) {
  if (j.is_array()) {
    s.values = j.get<std::vector<double>>();
    s.context.clear();
    return;
  }
  s.values = field<std::vector<double>>(j, "values");
  s.context = j.contains("context") ? field<Context>(j, "context") : Context{};
}

void to_json(json& j, const DomainBox& b) { j = json{{"lo", b.lo}, {"hi", b.hi}}; }
void from_json(const json& j, DomainBox& b) {
  b.lo = field<std::vector<double>>(j, "lo");
  b.hi = field<std::vector<double>>(j, "hi");
}

void to_json(json& j, const Box& b) { j = json{{"lo", b.lo}, {"hi", b.hi}}; }
void from_json(const json& j, Box& b) {
  b.lo = field<std::vector<double>>(j, "lo");
  b.hi = field<std::vector<double>>(j, "hi");
}

void to_json(json& j, const Region& r) {
  if (const auto* d = std::get_if<Disk>(&r)) {
    j = json{{"shape", "disk"}, {"center", d->center}, {"radius", d->radius}};
  } else if (const auto* b = std::get_if<Box>(&r)) {
    j = json{{"shape", "box"}, {"lo", b->lo}, {"hi", b->hi}};
  } else {
    const auto& c = std::get<Capsule>(r);
    j = json{{"shape", "capsule"}, {"a", c.a}, {"b", c.b}, {"radius", c.radius}};
  }
}

void from_json(const json& j, Region& r) {
  const auto shape = field<std::string>(j, "shape");
  if (shape == "disk") {
    r = Disk{field<std::vector<double>>(j, "center"), field<double>(j, "radius")};
  } else if (shape == "box") {
    r = Box{field<std::vector<double>>(j, "lo"), field<std::vector<double>>(j, "hi")};
  } else if (shape == "capsule") {
    r = Capsule{field<std::vector<double>>(j, "a"), field<std::vector<double>>(j, "b"),
                field<double>(j, "radius")};
  } else {
    fail(ErrorCode::data, "unknown region shape '" + shape + "'");
  }
}

void to_json(json& j, const GaussianComponent& g) {
  j = json{{"region", g.region}, {"mean", g.mean}, {"sd", g.sd}, {"weight", g.weight}};
}
void from_json(const json& j, GaussianComponent& g) {
  g.region = field<std::size_t>(j, "region");
  g.mean = field<std::vector<double>>(j, "mean");
  g.sd = field<std::vector<double>>(j, "sd");
  g.weight = field<double>(j, "weight");
}

void to_json(json& j, const WorldSpec& w) {
  j = json{{"name", w.name},
           {"domain", w.domain},
           {"safe_regions", w.safe_regions},
           {"generator", w.generator},
           {"probes", w.probes},
           {"seed", w.seed}};
}

void from_json(const json& j, WorldSpec& w) {
  w.name = field<std::string>(j, "name");
  w.domain = field<DomainBox>(j, "domain");
  w.safe_regions = field<std::vector<Region>>(j, "safe_regions");
  w.generator = field<std::vector<GaussianComponent>>(j, "generator");
  w.probes = j.contains("probes") ? field<std::map<std::string, Box>>(j, "probes")
                                  : std::map<std::string, Box>{};
  w.seed = j.contains("seed") ? field<std::uint64_t>(j, "seed") : 0;
}

void to_json(json& j, const Anchor& a) {
  j = json{{"state", a.state}, {"weight", a.weight}};
  if (a.scale != 1.0) j["scale"] = a.scale;
}
void from_json(const json& j, Anchor& a) {
  a.state = field<StateVec>(j, "state");
  a.weight = field<double>(j, "weight");
  a.scale = j.contains("scale") ? field<double>(j, "scale") : 1.0;
}

namespace {

json layer_json(const DenseLayer& l) {
  return json{{"in", l.in}, {"out", l.out}, {"weights", l.weights}, {"bias", l.bias}};
}

DenseLayer layer_from(const json& j) {
  DenseLayer l;
  l.in = field<std::size_t>(j, "in");
  l.out = field<std::size_t>(j, "out");
  l.weights = field<std::vector<double>>(j, "weights");
  l.bias = field<std::vector<double>>(j, "bias");
  return l;
}

}  // namespace

void to_json(json& j, const ScorerModel& m) {
  json params;
  if (const auto* k = std::get_if<KnnParams>(&m.params())) {
    params = json{{"k", k->k}, {"sigma", k->sigma}, {"anchors", k->anchors}};
  } else if (const auto* r = std::get_if<RbfParams>(&m.params())) {
    params = json{{"bandwidth", r->bandwidth}, {"anchors", r->anchors}};
  } else {
    const auto& p = m.recon();
    json layers = json::array();
    for (const auto& l : p.layers) layers.push_back(layer_json(l));
    params = json{{"widths", p.widths},
                  {"layers", layers},
                  {"input_box", p.input_box},
                  {"tau", p.tau},
                  {"patch_negatives", p.patch_negatives}};
  }
  j = json{{"kind", to_string(m.kind())},
           {"calibration", {{"lo", m.calibration().lo}, {"hi", m.calibration().hi}}},
           {"w_max", m.w_max()},
           {"params", params}};
}

void from_json(const json& j, ScorerModel& m) {
  ScorerKind kind;
  try {
    kind = scorer_kind_from_string(field<std::string>(j, "kind"));
  } catch (const Error& e) {
    fail(ErrorCode::data, e.what());
  }
  const json& cal = j.at("calibration");
  Calibration c{field<double>(cal, "lo"), field<double>(cal, "hi")};
  const json& p = j.at("params");
  ScorerModel::Params params;
  switch (kind) {
    case ScorerKind::knn:
      params = KnnParams{field<std::size_t>(p, "k"), field<double>(p, "sigma"),
                         field<std::vector<Anchor>>(p, "anchors")};
      break;
    case ScorerKind::rbf:
      params = RbfParams{field<std::vector<double>>(p, "bandwidth"), field<std::vector<Anchor>>(p, "anchors")};
      break;
    case ScorerKind::recon: {
      ReconParams r;
      r.widths = field<std::vector<std::size_t>>(p, "widths");
      for (const auto& l : p.at("layers")) r.layers.push_back(layer_from(l));
      r.input_box = field<DomainBox>(p, "input_box");
      r.tau = field<double>(p, "tau");
      r.patch_negatives = field<std::vector<StateVec>>(p, "patch_negatives");
      params = std::move(r);
      break;
    }
  }
  try {
    m = ScorerModel(std::move(params), c, field<double>(j, "w_max"));
  } catch (const Error& e) {
    fail(ErrorCode::data, std::string("invalid scorer: ") + e.what());
  }
}

void to_json(json& j, const Knot& k) { j = json::array({k.x, k.y}); }
void from_json(const json& j, Knot& k) {
  if (!j.is_array() || j.size() != 2) fail(ErrorCode::data, "knot must be an [x, y] pair");
  k.x = j[0].get<double>();
  k.y = j[1].get<double>();
}

void to_json(json& j, const MappingParams& p) {
  j = json{{"family", to_string(p.family)}, {"version", p.version}};
  if (p.family == MappingFamily::logistic) {
    j["mid"] = p.mid;
    j["steep"] = p.steep;
  }
  if (p.family == MappingFamily::piecewise) j["knots"] = p.knots;
  j["suppress_below"] = p.suppress_below ? json(*p.suppress_below) : json(nullptr);
}

void from_json(const json& j, MappingParams& p) {
  p = MappingParams{};
  try {
    p.family = mapping_family_from_string(field<std::string>(j, "family"));
  } catch (const Error& e) {
    fail(ErrorCode::data, e.what());
  }
  p.version = field<std::uint64_t>(j, "version");
  if (p.family == MappingFamily::logistic) {
    p.mid = field<double>(j, "mid");
    p.steep = field<double>(j, "steep");
  }
  if (p.family == MappingFamily::piecewise) p.knots = field<std::vector<Knot>>(j, "knots");
  if (j.contains("suppress_below") && !j.at("suppress_below").is_null()) {
    p.suppress_below = field<double>(j, "suppress_below");
  }
  try {
    p.validate();
  } catch (const Error& e) {
    fail(ErrorCode::data, std::string("invalid mapping: ") + e.what());
  }
}

void to_json(json& j, const BetaSchedule& b) { j = json{{"beta0", b.beta0}, {"lambda", b.lambda}}; }
void from_json(const json& j, BetaSchedule& b) {
  b.beta0 = field<double>(j, "beta0");
  b.lambda = field<double>(j, "lambda");
}

void to_json(json& j, const SculptDirective& d) {
  if (const auto* s = std::get_if<SuppressBelow>(&d)) {
    j = json{{"op", "suppress_below"}, {"a", s->a}};
  } else if (const auto* h = std::get_if<Sharpen>(&d)) {
    j = json{{"op", "sharpen"}, {"mid", h->mid}, {"steep", h->steep}};
  } else {
    j = json{{"op", "set_knots"}, {"knots", std::get<SetKnots>(d).knots}};
  }
}

void from_json(const json& j, SculptDirective& d) {
  const auto op = field<std::string>(j, "op");
  if (op == "suppress_below") {
    d = SuppressBelow{field<double>(j, "a")};
  } else if (op == "sharpen") {
    d = Sharpen{field<double>(j, "mid"), field<double>(j, "steep")};
  } else if (op == "set_knots") {
    d = SetKnots{field<std::vector<Knot>>(j, "knots")};
  } else {
    fail(ErrorCode::usage, "unknown sculpt op '" + op + "'");
  }
}

void to_json(json& j, const ContextGate& g) {
  j = json{{"constraint_id", g.constraint_id}, {"when", g.when}, {"region", g.region}};
}
void from_json(const json& j, ContextGate& g) {
  g.constraint_id = field<std::string>(j, "constraint_id");
  g.when = field<Context>(j, "when");
  g.region = field<Box>(j, "region");
}

void to_json(json& j, const LineageInfo& l) {
  j = json{{"parent", l.parent ? json(*l.parent) : json(nullptr)},
           {"proposal_id", l.proposal_id},
           {"note", l.note}};
}
void from_json(const json& j, LineageInfo& l) {
  l.parent = j.at("parent").is_null() ? std::nullopt
                                      : std::optional<std::uint64_t>(field<std::uint64_t>(j, "parent"));
  l.proposal_id = field<std::string>(j, "proposal_id");
  l.note = field<std::string>(j, "note");
}

void to_json(json& j, const RewardArtifact& a) {
  j = json{{"scorer", a.scorer},
           {"mapping", a.mapping},
           {"beta", a.beta},
           {"domain", a.domain},
           {"constraint_hash", a.constraint_hash},
           {"gates", a.gates},
           {"lineage", a.lineage},
           {"version", a.version ? json(*a.version) : json(nullptr)}};
}

void from_json(const json& j, RewardArtifact& a) {
  a.scorer = field<ScorerModel>(j, "scorer");
  a.mapping = field<MappingParams>(j, "mapping");
  a.beta = field<BetaSchedule>(j, "beta");
  a.domain = field<DomainBox>(j, "domain");
  a.constraint_hash = field<std::string>(j, "constraint_hash");
  a.gates = field<std::vector<ContextGate>>(j, "gates");
  a.lineage = field<LineageInfo>(j, "lineage");
  a.version = j.at("version").is_null() ? std::nullopt
                                        : std::optional<std::uint64_t>(field<std::uint64_t>(j, "version"));
}

}  // namespace flywheel
