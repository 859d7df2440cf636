#include "flywheel/interface.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "flywheel/json.hpp"

namespace flywheel {

namespace fs = std::filesystem;

namespace {

std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& tok, std::size_t line) {
  double v = 0.0;
  const auto* end = tok.data() + tok.size();
  const auto res = std::from_chars(tok.data(), end, v);
  require(res.ec == std::errc() && res.ptr == end, ErrorCode::data,
          "line " + std::to_string(line) + ": '" + tok + "' is not a number");
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

struct CsvLayout {
  std::vector<std::size_t> value_cols;
  std::vector<std::pair<std::size_t, std::string>> ctx_cols;
  std::optional<std::size_t> split_col;
};

CsvLayout parse_header(const std::string& header) {
  CsvLayout l;
  const auto cols = split_csv(header);
  std::size_t expect = 0;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    const auto& c = cols[i];
    if (c == "x" + std::to_string(expect)) {
      l.value_cols.push_back(i);
      ++expect;
    } else if (c.rfind("ctx_", 0) == 0 && c.size() > 4) {
      l.ctx_cols.emplace_back(i, c.substr(4));
    } else if (c == "split") {
      l.split_col = i;
    } else {
      fail(ErrorCode::data, "unexpected CSV column '" + c + "'");
    }
  }
  require(!l.value_cols.empty(), ErrorCode::data, "CSV header has no x0 column");
  return l;
}

std::vector<std::string> ctx_keys(const std::vector<StateVec>& states) {
  std::vector<std::string> keys;
  for (const auto& s : states) {
    for (const auto& [k, v] : s.context) {
      if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
    }
  }
  std::sort(keys.begin(), keys.end());
  return keys;
}

std::string csv_header(const std::vector<StateVec>& states, const std::vector<std::string>& keys, bool with_split) {
  const std::size_t d = states.empty() ? 0 : states.front().dims();
  std::string h;
  for (std::size_t i = 0; i < d; ++i) h += (i ? ",x" : "x") + std::to_string(i);
  for (const auto& k : keys) h += ",ctx_" + k;
  if (with_split) h += ",split";
  return h;
}

std::string csv_row(const StateVec& s, const std::vector<std::string>& keys) {
  std::string row;
  for (std::size_t i = 0; i < s.dims(); ++i) {
    if (i) row += ',';
    row += fmt_double(s[i]);
  }
  for (const auto& k : keys) {
    row += ',';
    const auto it = s.context.find(k);
    if (it != s.context.end()) {
      require(it->second.find(',') == std::string::npos, ErrorCode::usage, "context tokens may not contain commas");
      row += it->second;
    }
  }
  return row;
}

std::pair<std::vector<StateVec>, std::vector<Split>> parse_rows(const std::string& text, bool need_split) {
  std::istringstream in(text);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::data, "empty CSV");
  const auto layout = parse_header(line);
  require(!need_split || layout.split_col.has_value(), ErrorCode::data, "dataset CSV needs a split column");
  std::vector<StateVec> states;
  std::vector<Split> splits;
  std::size_t n = 1;
  const std::size_t ncols = layout.value_cols.size() + layout.ctx_cols.size() + (layout.split_col ? 1 : 0);
  while (std::getline(in, line)) {
    ++n;
    if (line.empty() || line == "\r") continue;
    const auto cols = split_csv(line);
    require(cols.size() == ncols, ErrorCode::data, "line " + std::to_string(n) + ": wrong column count");
    StateVec s;
    for (auto c : layout.value_cols) s.values.push_back(parse_double(cols[c], n));
    for (const auto& [c, name] : layout.ctx_cols) {
      if (!cols[c].empty()) s.context[name] = cols[c];
    }
    if (layout.split_col) {
      const auto& t = cols[*layout.split_col];
      require(t == "train" || t == "holdout", ErrorCode::data, "line " + std::to_string(n) + ": bad split '" + t + "'");
      splits.push_back(t == "train" ? Split::train : Split::holdout);
    }
    states.push_back(std::move(s));
  }
  return {std::move(states), std::move(splits)};
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  require(in.good(), ErrorCode::data, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& content) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(out.good(), ErrorCode::data, "cannot write " + p.string());
    out << content;
  }
  fs::rename(tmp, p);
}

json negset_json(const NegativeSet& n) {
  return json{{"strategy", to_string(n.strategy)}, {"states", n.states}, {"sources", n.sources}};
}

NegativeSet negset_from(const json& j) {
  NegativeSet n;
  n.strategy = negative_strategy_from_string(field<std::string>(j, "strategy"));
  n.states = field<std::vector<StateVec>>(j, "states");
  n.sources = field<std::vector<std::size_t>>(j, "sources");
  return n;
}

ProbeMass probe_from(const json& j) { return ProbeMass{field<double>(j, "mean"), field<double>(j, "std_error")}; }

Metrics metrics_from(const json& j) {
  Metrics m;
  m.unsafe_mass = probe_from(j.at("unsafe_mass"));
  for (const auto& [k, v] : j.at("probes").items()) m.probes[k] = probe_from(v);
  m.expert_fidelity = field<double>(j, "expert_fidelity");
  m.holdout_mean = field<double>(j, "holdout_mean");
  m.cumulative_drift = field<double>(j, "cumulative_drift");
  m.open_flaws = field<std::size_t>(j, "open_flaws");
  m.head = field<std::uint64_t>(j, "head");
  m.sfkb_version = field<std::uint64_t>(j, "sfkb_version");
  return m;
}

CycleReport report_from(const json& j) {
  CycleReport r;
  r.cycle = field<std::size_t>(j, "cycle");
  r.status = field<std::string>(j, "status");
  r.flaws_found = field<std::size_t>(j, "flaws_found");
  r.candidates = field<std::size_t>(j, "candidates");
  r.carryover = field<std::size_t>(j, "carryover");
  r.flaws_resolved = field<std::size_t>(j, "flaws_resolved");
  r.labels = field<std::size_t>(j, "labels");
  r.clusters = field<std::size_t>(j, "clusters");
  r.proposals_made = field<std::size_t>(j, "proposals_made");
  r.proposals_merged = field<std::size_t>(j, "proposals_merged");
  r.merged_versions = field<std::vector<std::uint64_t>>(j, "merged_versions");
  r.before = metrics_from(j.at("before"));
  r.after = metrics_from(j.at("after"));
  r.wall_seconds = j.value("wall_seconds", 0.0);
  r.seed = field<std::uint64_t>(j, "seed");
  r.alerts = field<std::vector<std::string>>(j, "alerts");
  return r;
}

FlawCluster cluster_from(const json& j) {
  FlawCluster c;
  c.id = field<std::uint64_t>(j, "id");
  c.members = field<std::vector<std::uint64_t>>(j, "members");
  c.leader = field<StateVec>(j, "leader");
  c.centroid = field<StateVec>(j, "centroid");
  c.representative = field<std::uint64_t>(j, "representative");
  c.priority = field<double>(j, "priority");
  return c;
}

const std::string& need(const std::map<std::string, std::string>& files, const std::string& name) {
  const auto it = files.find(name);
  require(it != files.end(), ErrorCode::data, "session is missing " + name);
  return it->second;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string dataset_to_csv(const ExpertDataset& data) {
  const auto keys = ctx_keys(data.states);
  std::string out = csv_header(data.states, keys, true) + "\n";
  for (std::size_t i = 0; i < data.states.size(); ++i) {
    out += csv_row(data.states[i], keys);
    out += data.split[i] == Split::train ? ",train\n" : ",holdout\n";
  }
  return out;
}

ExpertDataset dataset_from_csv(const std::string& text, const std::string& provenance) {
  auto [states, splits] = parse_rows(text, true);
  ExpertDataset d;
  d.states = std::move(states);
  d.split = std::move(splits);
  d.provenance = provenance;
  return d;
}

std::string states_to_csv(const std::vector<StateVec>& states) {
  const auto keys = ctx_keys(states);
  std::string out = csv_header(states, keys, false) + "\n";
  for (const auto& s : states) out += csv_row(s, keys) + "\n";
  return out;
}

std::vector<StateVec> states_from_csv(const std::string& text) { return parse_rows(text, false).first; }

// ---------------------------------------------------------------------------

json Heatmap::to_json() const {
  json j{{"resolution", resolution}, {"x_axis", x_axis}, {"y_axis", y_axis}, {"x", x},
         {"y", y},                   {"values", values}, {"min", min},       {"max", max}};
  if (slice) j["slice"] = json{{"axis", slice->axis}, {"value", slice->value}};
  return j;
}

std::string Heatmap::to_csv() const {
  std::string out = "row,col,x,y,reward\n";
  for (std::size_t r = 0; r < resolution; ++r) {
    for (std::size_t c = 0; c < resolution; ++c) {
      out += std::to_string(r) + "," + std::to_string(c) + "," + fmt_double(x[c]) + "," + fmt_double(y[r]) + "," +
             fmt_double(values[r * resolution + c]) + "\n";
    }
  }
  return out;
}

Heatmap heatmap(const RewardArtifact& artifact, std::size_t resolution, const std::optional<Slice>& slice) {
  const auto& box = artifact.domain;
  const std::size_t d = box.dims();
  require(resolution >= 1 && resolution <= 1024, ErrorCode::usage, "heatmap resolution must lie in [1, 1024]");
  require(d == 2 || d == 3, ErrorCode::usage, "heatmaps need a 2-D or 3-D domain");
  Heatmap h;
  h.resolution = resolution;
  std::vector<double> base = box.center();
  if (d == 3) {
    require(slice.has_value(), ErrorCode::usage, "3-D heatmaps need a slice (axis and value)");
    require(slice->axis < 3, ErrorCode::usage, "slice axis must be 0, 1 or 2");
    require(slice->value >= box.lo[slice->axis] && slice->value <= box.hi[slice->axis], ErrorCode::out_of_domain,
            "slice value outside the domain");
    std::vector<std::size_t> free;
    for (std::size_t a = 0; a < 3; ++a) {
      if (a != slice->axis) free.push_back(a);
    }
    h.x_axis = free[0];
    h.y_axis = free[1];
    base[slice->axis] = slice->value;
    h.slice = slice;
  }
  auto centers = [&](std::size_t axis) {
    std::vector<double> c(resolution);
    for (std::size_t i = 0; i < resolution; ++i) {
      c[i] = box.lo[axis] + (static_cast<double>(i) + 0.5) / static_cast<double>(resolution) * (box.hi[axis] - box.lo[axis]);
    }
    return c;
  };
  h.x = centers(h.x_axis);
  h.y = centers(h.y_axis);
  h.values.resize(resolution * resolution);
  for (std::size_t r = 0; r < resolution; ++r) {
    for (std::size_t c = 0; c < resolution; ++c) {
      auto p = base;
      p[h.x_axis] = h.x[c];
      p[h.y_axis] = h.y[r];
      h.values[r * resolution + c] = reward(artifact, StateVec(std::move(p)));
    }
  }
  const auto [lo, hi] = std::minmax_element(h.values.begin(), h.values.end());
  h.min = *lo;
  h.max = *hi;
  return h;
}

// ---------------------------------------------------------------------------

json cluster_json(const FlawCluster& c, const SFKB& sfkb) {
  json j{{"id", c.id},
         {"members", c.members},
         {"leader", c.leader},
         {"centroid", c.centroid},
         {"representative", c.representative},
         {"priority", c.priority}};
  const auto& rep = sfkb.flaw(c.representative);
  j["representative_state"] = rep.state;
  j["label"] = rep.label ? json(*rep.label) : json(nullptr);
  return j;
}

std::map<std::string, std::string> session_files(const Session& s) {
  std::map<std::string, std::string> f;
  f["config.json"] = s.config.to_json().dump(1) + "\n";
  f["session.json"] = json{{"id", s.id}, {"label_clock", s.label_clock}}.dump(1) + "\n";
  f["world.json"] = json(s.toyworld().spec()).dump(1) + "\n";
  f["constraints.json"] = s.constraints.to_json() + "\n";
  f["data.csv"] = dataset_to_csv(s.data);
  f["negatives.json"] = json{{"train", negset_json(s.neg_train)}, {"holdout", negset_json(s.neg_holdout)}}.dump() + "\n";
  f["ensemble.json"] = json(s.ensemble).dump() + "\n";
  for (const auto& [id, v] : s.store.versions()) {
    f["artifacts/artifact_v" + std::to_string(id) + ".json"] = to_canonical_json(v.artifact);
  }
  f["lineage.json"] = s.store.lineage_json().dump(1) + "\n";
  f["sfkb.jsonl"] = s.sfkb.to_jsonl();
  f["reglib.json"] = s.reglib.to_json().dump() + "\n";
  json clusters = json::array();
  for (const auto& c : s.clusters) clusters.push_back(cluster_json(c, s.sfkb));
  f["clusters.json"] = clusters.dump(1) + "\n";
  json verified = json::object();
  for (const auto& [pid, pc] : s.verified) {
    verified[pid] = json{{"candidate", pc.candidate}, {"result", pc.result.to_json()}};
  }
  f["refinements.json"] = json{{"proposals", s.proposals}, {"verified", verified}}.dump(1) + "\n";
  for (const auto& r : s.reports) f["reports/cycle_" + std::to_string(r.cycle) + ".json"] = r.to_json().dump(1) + "\n";
  return f;
}

Session session_from_files(const std::map<std::string, std::string>& files) {
  Session s;
  s.config = SessionConfig::from_json(parse_json(need(files, "config.json"), "config.json"));
  const auto meta = parse_json(need(files, "session.json"), "session.json");
  s.id = field<std::string>(meta, "id");
  s.label_clock = field<std::uint64_t>(meta, "label_clock");
  s.world.emplace(as<WorldSpec>(parse_json(need(files, "world.json"), "world.json"), "world.json"));
  s.constraints = ConstraintSet::from_json(need(files, "constraints.json"));
  s.data = dataset_from_csv(need(files, "data.csv"), "data.csv");
  const auto neg = parse_json(need(files, "negatives.json"), "negatives.json");
  s.neg_train = negset_from(neg.at("train"));
  s.neg_holdout = negset_from(neg.at("holdout"));
  s.ensemble = as<std::vector<ScorerModel>>(parse_json(need(files, "ensemble.json"), "ensemble.json"), "ensemble.json");

  const auto lineage = parse_json(need(files, "lineage.json"), "lineage.json");
  std::map<std::uint64_t, RewardArtifact> artifacts;
  require(lineage.contains("versions") && lineage.at("versions").is_array(), ErrorCode::data,
          "lineage.json has no versions list");
  for (const auto& v : lineage.at("versions")) {
    const auto id = field<std::uint64_t>(v, "id");
    const auto name = "artifacts/artifact_v" + std::to_string(id) + ".json";
    try {
      artifacts.emplace(id, artifact_from_json(need(files, name)));
    } catch (const std::exception& e) {
      throw Error(ErrorCode::data, name + ": " + e.what());
    }
  }
  s.store = ArtifactStore::from_parts(lineage, artifacts);

  s.sfkb = SFKB::from_jsonl(need(files, "sfkb.jsonl"));
  s.reglib = RegressionLibrary::from_json(parse_json(need(files, "reglib.json"), "reglib.json"));
  for (const auto& c : parse_json(need(files, "clusters.json"), "clusters.json")) s.clusters.push_back(cluster_from(c));
  const auto refs = parse_json(need(files, "refinements.json"), "refinements.json");
  s.proposals = field<std::vector<RefinementProposal>>(refs, "proposals");
  for (const auto& [pid, v] : refs.at("verified").items()) {
    s.verified[pid] = PendingCandidate{field<RewardArtifact>(v, "candidate"), VerificationResult::from_json(v.at("result"))};
  }
  for (std::size_t i = 0;; ++i) {
    const auto it = files.find("reports/cycle_" + std::to_string(i) + ".json");
    if (it == files.end()) break;
    s.reports.push_back(report_from(parse_json(it->second, it->first)));
  }
  return s;
}

void save_session(const Session& s, const fs::path& dir) {
  for (const auto& [name, content] : session_files(s)) {
    const fs::path p = dir / name;
    // Versioned artifacts are immutable once written.
    if (name.rfind("artifacts/", 0) == 0 && fs::exists(p)) continue;
    write_file(p, content);
  }
}

Session load_session(const fs::path& dir) {
  require(fs::is_directory(dir), ErrorCode::data, dir.string() + " is not a session directory");
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir).generic_string();
    if (rel.size() > 4 && rel.substr(rel.size() - 4) == ".tmp") continue;
    files[rel] = read_file(e.path());
  }
  try {
    return session_from_files(files);
  } catch (const Error& e) {
    fail(e.code(), dir.string() + ": " + e.what());
  }
}

std::string export_session(const Session& s) {
  require(!s.busy, ErrorCode::conflict, "cannot export while a cycle is running");
  json files = json::object();
  for (const auto& [name, content] : session_files(s)) files[name] = content;
  return json{{"format", "flywheel-archive"}, {"format_version", 1}, {"files", files}}.dump() + "\n";
}

Session import_session(const std::string& archive) {
  const auto j = parse_json(archive, "archive");
  require(j.value("format", "") == "flywheel-archive", ErrorCode::data, "not a flywheel archive");
  std::map<std::string, std::string> files;
  for (const auto& [name, content] : j.at("files").items()) {
    require(content.is_string(), ErrorCode::data, "archive entry " + name + " is not text");
    require(name.find("..") == std::string::npos && !name.empty() && name.front() != '/', ErrorCode::data,
            "archive entry has an unsafe path: " + name);
    files[name] = content.get<std::string>();
  }
  require(files.count("lineage.json") == 1, ErrorCode::data, "archive is missing lineage.json");
  return session_from_files(files);
}

// ---------------------------------------------------------------------------

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::verification:
    case ErrorCode::conflict:
      return 2;
    case ErrorCode::data:
    case ErrorCode::fit_failure:
    case ErrorCode::exhausted:
      return 3;
    default:
      return 1;
  }
}

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::usage:
    case ErrorCode::out_of_domain:
    case ErrorCode::monotonicity:
      return 400;
    case ErrorCode::not_found:
      return 404;
    case ErrorCode::verification:
    case ErrorCode::conflict:
      return 409;
    case ErrorCode::precondition:
    case ErrorCode::unsupported:
      return 422;
    default:
      return 500;
  }
}

}  // namespace flywheel
