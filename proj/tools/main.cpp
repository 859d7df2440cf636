// flywheel: command-line driver for a session directory.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "flywheel/json.hpp"
#include "flywheel/server.hpp"

namespace fw = flywheel;
namespace fs = std::filesystem;
using fw::json;

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fw::fail(fw::ErrorCode::data, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.empty() || p == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(p, std::ios::binary);
  if (!out) fw::fail(fw::ErrorCode::usage, "cannot write " + p.string());
  out << text;
}

void print(const json& j) { std::cout << j.dump(2) << "\n"; }

std::vector<double> parse_list(const std::string& s, const char* what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(tok, &pos));
      if (pos != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      fw::fail(fw::ErrorCode::usage, std::string("bad ") + what + " '" + s + "'");
    }
  }
  return out;
}

// "x,y,...,r": center coordinates followed by radius.
fw::Disk parse_disk(const std::string& s) {
  auto v = parse_list(s, "region");
  if (v.size() < 2) fw::fail(fw::ErrorCode::usage, "region needs center coordinates and a radius");
  fw::Disk d;
  d.radius = v.back();
  v.pop_back();
  d.center = std::move(v);
  return d;
}

std::string describe_state(const fw::StateVec& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.values.size(); ++i) os << (i ? ", " : "") << s.values[i];
  os << ")";
  return os.str();
}

// Reads c / b / skip from stdin; nullopt on skip or end of input.
std::optional<fw::Verdict> prompt_verdict(const fw::Session& s, const fw::FlawCluster& c) {
  const auto& rep = s.sfkb.flaw(c.representative);
  std::cout << "cluster c" << c.id << "  members=" << c.members.size() << "  priority=" << c.priority
            << "\n  representative " << describe_state(rep.state) << "  reward=" << rep.reward_at_discovery << "\n";
  for (;;) {
    std::cout << "  [c]onfirm / [b]enign / [s]kip > " << std::flush;
    std::string line;
    if (!std::getline(std::cin, line)) return std::nullopt;
    if (line == "c" || line == "confirm") return fw::Verdict::confirmed;
    if (line == "b" || line == "benign") return fw::Verdict::benign;
    if (line == "s" || line == "skip" || line.empty()) return std::nullopt;
  }
}

struct Globals {
  std::string session = "session";
};

fw::Session open(const Globals& g) { return fw::load_session(g.session); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reward-artifact flywheel: audit, triage, refine and verify a learned reward"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("-s,--session", g.session, "Session directory")->capture_default_str();

  // init
  auto* init = app.add_subcommand("init", "Create a session: sample, fit, write artifact v0");
  std::string init_world = "two-ridges", init_config, init_constraints;
  std::uint64_t init_seed = 0;
  init->add_option("--world", init_world, "Preset world")->capture_default_str();
  init->add_option("--seed", init_seed, "Session seed")->required();
  init->add_option("--config", init_config, "Session config JSON (overrides --world)")->check(CLI::ExistingFile);
  init->add_option("--constraints", init_constraints, "Constraint document")->check(CLI::ExistingFile);

  // audit
  auto* aud = app.add_subcommand("audit", "Run blue and red team against an artifact");
  std::optional<std::uint64_t> aud_artifact;
  std::size_t aud_budget = 0;
  std::uint64_t aud_seed = 0;
  std::string aud_region;
  aud->add_option("--artifact", aud_artifact, "Artifact version (default: head)");
  aud->add_option("--budget", aud_budget, "Evaluation budget (default: config)");
  aud->add_option("--seed", aud_seed, "Audit seed")->required();
  aud->add_option("--region", aud_region, "Steer region x,y[,z],radius");

  // triage
  auto* tri = app.add_subcommand("triage", "Show or label the cluster queue");
  bool tri_interactive = false;
  tri->add_flag("--interactive", tri_interactive, "Prompt for a verdict per cluster");

  // label (non-interactive)
  auto* lab = app.add_subcommand("label", "Label one cluster");
  std::uint64_t lab_cluster = 0;
  std::string lab_verdict, lab_note;
  lab->add_option("--cluster", lab_cluster, "Cluster id")->required();
  lab->add_option("--verdict", lab_verdict, "confirmed | benign")->required();
  lab->add_option("--note", lab_note, "Free-text note");

  // refine
  auto* ref = app.add_subcommand("refine", "Propose a refinement for a confirmed cluster");
  std::uint64_t ref_cluster = 0;
  std::string ref_mode = "patch", ref_states, ref_region;
  std::optional<double> ref_suppress;
  std::string ref_sharpen;
  double ref_weight = -1.0, ref_scale = 1.0;
  bool ref_human = false;
  ref->add_option("--cluster", ref_cluster, "Cluster id")->required();
  ref->add_option("--mode", ref_mode, "patch | sculpt | seed")->capture_default_str();
  ref->add_flag("--human", ref_human, "Author the edit by hand instead of the agent");
  ref->add_option("--suppress-below", ref_suppress, "Sculpt: zero the mapping below this score");
  ref->add_option("--sharpen", ref_sharpen, "Sculpt: mid,steep");
  ref->add_option("--states", ref_states, "Patch/seed: CSV of anchor states")->check(CLI::ExistingFile);
  ref->add_option("--weight", ref_weight, "Patch/seed anchor weight")->capture_default_str();
  ref->add_option("--scale", ref_scale, "Anchor kernel scale in (0,1]")->capture_default_str();
  ref->add_option("--region", ref_region, "Target region x,y[,z],radius");

  // verify / merge / rollback
  auto* ver = app.add_subcommand("verify", "Build and verify a proposal's candidate");
  std::string ver_pid;
  std::uint64_t ver_seed = 0;
  ver->add_option("--proposal", ver_pid, "Proposal id (p<N>)")->required();
  ver->add_option("--seed", ver_seed, "Local red-team seed")->required();

  auto* mer = app.add_subcommand("merge", "Merge a verified proposal");
  std::string mer_pid;
  mer->add_option("--proposal", mer_pid, "Proposal id (p<N>)")->required();

  auto* rb = app.add_subcommand("rollback", "Move the head to an earlier version");
  std::uint64_t rb_version = 0;
  rb->add_option("--version", rb_version, "Target version")->required();

  // cycle
  auto* cyc = app.add_subcommand("cycle", "Run flywheel cycles until a clean audit");
  bool cyc_auto = false;
  std::size_t cyc_max = 3;
  std::uint64_t cyc_seed = 0;
  cyc->add_flag("--auto", cyc_auto, "Label with the oracle instead of prompting");
  cyc->add_option("--max", cyc_max, "Maximum cycles")->capture_default_str();
  cyc->add_option("--seed", cyc_seed, "Cycle seed")->required();

  auto* met = app.add_subcommand("metrics", "Print hardening metrics for the head");

  auto* lin = app.add_subcommand("lineage", "Print the version graph");

  // heatmap
  auto* hm = app.add_subcommand("heatmap", "Reward grid over the domain");
  std::optional<std::uint64_t> hm_version;
  std::size_t hm_res = 64;
  std::optional<std::size_t> hm_axis;
  std::optional<double> hm_value;
  std::string hm_format = "csv", hm_out;
  hm->add_option("--artifact", hm_version, "Artifact version (default: head)");
  hm->add_option("--res", hm_res, "Grid resolution")->capture_default_str();
  hm->add_option("--axis", hm_axis, "Fixed axis for a 3-D slice");
  hm->add_option("--value", hm_value, "Slice value on the fixed axis");
  hm->add_option("--format", hm_format, "csv | json")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
  hm->add_option("-o,--output", hm_out, "Output file (default: stdout)");

  // export / import
  auto* ex = app.add_subcommand("export", "Write the session as one archive");
  std::string ex_out;
  ex->add_option("-o,--output", ex_out, "Archive path (default: stdout)");

  auto* im = app.add_subcommand("import", "Unpack an archive into the session directory");
  std::string im_archive;
  im->add_option("archive", im_archive, "Archive path")->required()->check(CLI::ExistingFile);

  // constraints lint
  auto* con = app.add_subcommand("constraints", "Constraint document tools");
  con->require_subcommand(1);
  auto* lint = con->add_subcommand("lint", "Validate a constraint document");
  std::string lint_file;
  std::size_t lint_dims = 0;
  lint->add_option("file", lint_file, "Constraint JSON")->required()->check(CLI::ExistingFile);
  lint->add_option("--dims", lint_dims, "Expected state dimensionality");

  // serve
  auto* srv = app.add_subcommand("serve", "Serve the workbench HTTP API");
  std::string srv_root = "sessions", srv_host = "127.0.0.1";
  int srv_port = 8080;
  srv->add_option("--root", srv_root, "Session root directory")->capture_default_str();
  srv->add_option("--host", srv_host, "Bind address")->capture_default_str();
  srv->add_option("--port", srv_port, "Port")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*init) {
      if (fs::exists(fs::path(g.session) / "lineage.json"))
        fw::fail(fw::ErrorCode::usage, g.session + " already holds a session");
      json cfg_j = init_config.empty() ? json::object() : fw::parse_json(read_text(init_config), init_config);
      if (init_config.empty()) cfg_j["world"] = init_world;
      cfg_j["seed"] = init_seed;
      const auto cfg = fw::SessionConfig::from_json(cfg_j);
      fw::ConstraintSet cset;
      if (!init_constraints.empty()) cset = fw::ConstraintSet::from_json(read_text(init_constraints));
      auto s = fw::create_session(cfg, std::move(cset), fs::path(g.session).filename().string());
      fw::save_session(s, g.session);
      print(json{{"session", g.session}, {"head", s.store.head()}, {"metrics", fw::metrics(s).to_json()}});
    } else if (*aud) {
      auto s = open(g);
      std::optional<fw::Disk> steer;
      if (!aud_region.empty()) steer = parse_disk(aud_region);
      const auto rep = fw::audit(s, aud_budget ? aud_budget : s.config.audit_budget, aud_seed, steer, aud_artifact);
      const auto fresh = fw::triage_open(s);
      fw::save_session(s, g.session);
      json j = rep.to_json();
      j["new_clusters"] = fresh.size();
      print(j);
    } else if (*tri) {
      auto s = open(g);
      if (!tri_interactive) {
        json list = json::array();
        for (const auto& c : fw::triage_queue(s)) list.push_back(fw::cluster_json(c, s.sfkb));
        print(list);
      } else {
        std::size_t labeled = 0;
        for (const auto& c : fw::triage_queue(s)) {
          const auto v = prompt_verdict(s, c);
          if (!v) continue;
          const auto res = fw::label_cluster(s, c.id, *v, fw::Author::human);
          std::cout << "  -> " << res.labeled.size() << " flaws labeled\n";
          ++labeled;
          fw::save_session(s, g.session);
        }
        std::cout << labeled << " clusters labeled\n";
      }
    } else if (*lab) {
      auto s = open(g);
      const auto res = fw::label_cluster(s, lab_cluster, fw::verdict_from_string(lab_verdict), fw::Author::human, lab_note);
      fw::save_session(s, g.session);
      print(json{{"labeled", res.labeled}, {"expert_actions", res.expert_actions}});
    } else if (*ref) {
      auto s = open(g);
      const auto mode = fw::action_kind_from_string(ref_mode);
      std::optional<fw::HumanEdit> edit;
      if (ref_human) {
        fw::HumanEdit e;
        if (ref_suppress) e.directive = fw::SuppressBelow{*ref_suppress};
        if (!ref_sharpen.empty()) {
          const auto v = parse_list(ref_sharpen, "sharpen");
          if (v.size() != 2) fw::fail(fw::ErrorCode::usage, "--sharpen takes mid,steep");
          e.directive = fw::Sharpen{v[0], v[1]};
        }
        if (!ref_states.empty()) e.states = fw::states_from_csv(read_text(ref_states));
        e.weight = ref_weight;
        e.scale = ref_scale;
        if (!ref_region.empty()) e.region = parse_disk(ref_region);
        edit = std::move(e);
      }
      const auto& p = fw::propose(s, ref_cluster, mode, ref_human ? fw::Author::human : fw::Author::agent, edit);
      const json out = p;
      fw::save_session(s, g.session);
      print(out);
    } else if (*ver) {
      auto s = open(g);
      const auto r = fw::verify_proposal(s, ver_pid, ver_seed);
      fw::save_session(s, g.session);
      print(r.to_json());
      if (!r.pass) return 2;
    } else if (*mer) {
      auto s = open(g);
      const auto v = fw::merge_proposal(s, mer_pid);
      fw::save_session(s, g.session);
      print(json{{"merged", v}});
    } else if (*rb) {
      auto s = open(g);
      fw::rollback(s, rb_version);
      fw::save_session(s, g.session);
      print(json{{"head", s.store.head()}});
    } else if (*cyc) {
      auto s = open(g);
      const fw::LabelFn label = cyc_auto ? fw::LabelFn{} : fw::LabelFn{prompt_verdict};
      const auto reps = fw::run_until_clean(s, cyc_max, cyc_seed, label);
      fw::save_session(s, g.session);
      for (const auto& r : reps) {
        std::cout << "cycle " << r.cycle << ": " << r.status << ", " << r.candidates << " candidates, "
                  << r.flaws_found << " new flaws, " << r.proposals_merged << "/" << r.proposals_made
                  << " merged, unsafe mass " << r.before.unsafe_mass.mean << " -> " << r.after.unsafe_mass.mean
                  << ", fidelity " << r.after.expert_fidelity << "\n";
        for (const auto& a : r.alerts) std::cout << "  alert: " << a << "\n";
      }
      if (!reps.empty() && reps.back().candidates == 0) std::cout << "clean audit\n";
    } else if (*met) {
      print(fw::metrics(open(g)).to_json());
    } else if (*lin) {
      print(open(g).store.lineage_json());
    } else if (*hm) {
      const auto s = open(g);
      std::optional<fw::Slice> slice;
      if (hm_axis || hm_value) {
        if (!hm_axis || !hm_value) fw::fail(fw::ErrorCode::usage, "a slice needs both --axis and --value");
        slice = fw::Slice{*hm_axis, *hm_value};
      }
      const auto h = fw::heatmap(hm_version ? s.store.at(*hm_version) : s.store.head_artifact(), hm_res, slice);
      write_text(hm_out, hm_format == "csv" ? h.to_csv() : h.to_json().dump() + "\n");
    } else if (*ex) {
      write_text(ex_out, fw::export_session(open(g)));
    } else if (*im) {
      if (fs::exists(fs::path(g.session) / "lineage.json"))
        fw::fail(fw::ErrorCode::usage, g.session + " already holds a session");
      const auto s = fw::import_session(read_text(im_archive));
      fw::save_session(s, g.session);
      print(json{{"session", g.session}, {"head", s.store.head()}});
    } else if (*lint) {
      const auto rep = fw::lint_constraints(read_text(lint_file), lint_dims);
      for (const auto& e : rep.errors) std::cout << lint_file << ": error: " << e << "\n";
      for (const auto& w : rep.warnings) std::cout << lint_file << ": warning: " << w << "\n";
      std::cout << rep.constraints << " constraints, " << rep.errors.size() << " errors, " << rep.warnings.size()
                << " warnings\n";
      if (!rep.ok()) return 3;
    } else if (*srv) {
      fw::HttpServer server(srv_root);
      std::cout << "serving " << server.service().session_count() << " sessions from " << srv_root << " on "
                << srv_host << ":" << srv_port << std::endl;
      server.run(srv_host, srv_port);
    }
  } catch (const fw::Error& e) {
    std::cerr << "flywheel: " << fw::to_string(e.code()) << ": " << e.what() << "\n";
    return fw::exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "flywheel: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
