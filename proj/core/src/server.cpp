#include "flywheel/server.hpp"

#include <httplib.h>

#include <sstream>

#include "flywheel/json.hpp"

namespace flywheel {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : path) {
    if (c == '/') {
      if (!cur.empty()) parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) parts.push_back(cur);
  return parts;
}

HttpResponse ok(const json& j, int status = 200) { return HttpResponse{status, j.dump() + "\n", "application/json"}; }

HttpResponse error_response(int status, const std::string& code, const std::string& msg) {
  return ok(json{{"error", code}, {"message", msg}}, status);
}

std::uint64_t parse_u64(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(s, &pos);
    if (pos == s.size()) return v;
  } catch (const std::exception&) {
  }
  fail(ErrorCode::usage, "bad " + what + " '" + s + "'");
}

// "s1.c3" -> ("s1", 3); "s1.p4" -> ("s1", "p4").
std::pair<std::string, std::string> split_handle(const std::string& handle, char kind) {
  const auto dot = handle.find('.');
  require(dot != std::string::npos && dot + 1 < handle.size() && handle[dot + 1] == kind, ErrorCode::not_found,
          "malformed handle '" + handle + "'");
  return {handle.substr(0, dot), handle.substr(dot + 1)};
}

template <typename T>
T body_field(const json& body, const char* key) {
  require(body.contains(key), ErrorCode::usage, std::string("request body needs '") + key + "'");
  try {
    return body.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorCode::usage, std::string("bad '") + key + "': " + e.what());
  }
}

json stamp(const Session& s) { return json{{"version", s.store.head()}, {"sfkb_version", s.sfkb.version()}}; }

json with_stamp(json j, const Session& s) {
  j["stamp"] = stamp(s);
  return j;
}

json proposal_json(const Session& s, const RefinementProposal& p) {
  json j = p;
  j["handle"] = s.id + "." + p.id;
  const auto it = s.verified.find(p.id);
  j["verification"] = it == s.verified.end() ? json(nullptr) : it->second.result.to_json();
  return j;
}

json cluster_view(const Session& s, const FlawCluster& c) {
  json j = cluster_json(c, s.sfkb);
  j["handle"] = s.id + ".c" + std::to_string(c.id);
  return j;
}

}  // namespace

Service::Service(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_);
  for (const auto& e : fs::directory_iterator(root_)) {
    if (!e.is_directory()) continue;
    auto slot = std::make_shared<Slot>();
    slot->session = load_session(e.path());
    slot->dir = e.path();
    const auto& id = slot->session.id;
    require(e.path().filename() == id, ErrorCode::data, e.path().string() + ": directory name does not match session id");
    if (id.size() > 1 && id[0] == 's') {
      try {
        next_id_ = std::max<std::uint64_t>(next_id_, std::stoull(id.substr(1)) + 1);
      } catch (const std::exception&) {
      }
    }
    sessions_.emplace(id, std::move(slot));
  }
}

std::size_t Service::session_count() const {
  std::lock_guard lk(registry_mu_);
  return sessions_.size();
}

std::shared_ptr<Service::Slot> Service::slot(const std::string& id) const {
  std::lock_guard lk(registry_mu_);
  const auto it = sessions_.find(id);
  require(it != sessions_.end(), ErrorCode::not_found, "unknown session '" + id + "'");
  return it->second;
}

HttpResponse Service::handle(const std::string& method, const std::string& path, const Query& query,
                             const std::string& body) {
  try {
    return route(method, path, query, body);
  } catch (const Error& e) {
    return error_response(http_status(e.code()), to_string(e.code()), e.what());
  } catch (const std::exception& e) {
    return error_response(500, "internal", e.what());
  }
}

HttpResponse Service::route(const std::string& method, const std::string& path, const Query& query,
                            const std::string& body_text) {
  const auto parts = split_path(path);
  json body = json::object();
  if (!body_text.empty()) {
    try {
      body = json::parse(body_text);
    } catch (const json::exception& e) {
      fail(ErrorCode::usage, std::string("request body is not JSON: ") + e.what());
    }
    require(body.is_object(), ErrorCode::usage, "request body must be a JSON object");
  }
  auto q = [&](const char* key) -> std::optional<std::string> {
    const auto it = query.find(key);
    return it == query.end() ? std::nullopt : std::optional<std::string>(it->second);
  };
  const bool get = method == "GET";
  const bool post = method == "POST";
  const std::size_t n = parts.size();

  if (n == 1 && parts[0] == "sessions") {
    if (get) {
      json list = json::array();
      std::vector<std::shared_ptr<Slot>> slots;
      {
        std::lock_guard lk(registry_mu_);
        for (const auto& [id, sl] : sessions_) slots.push_back(sl);
      }
      for (const auto& sl : slots) {
        std::shared_lock rl(sl->mu);
        list.push_back(json{{"id", sl->session.id}, {"world", sl->session.toyworld().spec().name}, {"stamp", stamp(sl->session)}});
      }
      return ok(list);
    }
    if (post) {
      require(body.contains("seed"), ErrorCode::usage, "POST /sessions needs an explicit seed");
      json cfg_j = body;
      ConstraintSet cset;
      if (cfg_j.contains("constraints")) {
        cset = ConstraintSet::from_json(cfg_j.at("constraints").dump());
        cfg_j.erase("constraints");
      }
      const auto cfg = SessionConfig::from_json(cfg_j);
      std::string id;
      {
        std::lock_guard lk(registry_mu_);
        id = "s" + std::to_string(next_id_++);
      }
      auto sl = std::make_shared<Slot>();
      sl->session = create_session(cfg, std::move(cset), id);
      sl->dir = root_ / id;
      save_session(sl->session, sl->dir);
      json out{{"id", id}, {"artifact", json::parse(to_canonical_json(sl->session.store.head_artifact()))}};
      out = with_stamp(std::move(out), sl->session);
      {
        std::lock_guard lk(registry_mu_);
        sessions_.emplace(id, std::move(sl));
      }
      return ok(out, 201);
    }
  }

  if (n >= 2 && parts[0] == "sessions") {
    const auto sl = slot(parts[1]);
    Session& s = sl->session;
    const std::string verb = n >= 3 ? parts[2] : "";

    if (get) {
      std::shared_lock rl(sl->mu);
      if (n == 2) {
        return ok(json{{"id", s.id}, {"config", s.config.to_json()}, {"stamp", stamp(s)}, {"cycles", s.reports.size()}});
      }
      if (n == 3 && verb == "metrics") return ok(with_stamp(metrics(s).to_json(), s));
      if (n == 3 && verb == "flaws") {
        const auto status = q("status");
        std::optional<FlawStatus> want;
        if (status) want = flaw_status_from_string(*status);
        json list = json::array();
        for (const auto& f : s.sfkb.flaws()) {
          if (!want || f.status == *want) list.push_back(f);
        }
        return ok(list);
      }
      if (n == 3 && verb == "gaps") return ok(json(s.sfkb.gaps()));
      if (n == 3 && verb == "clusters") {
        json list = json::array();
        for (const auto& c : triage_queue(s)) list.push_back(cluster_view(s, c));
        // Labeled clusters follow the open queue, in id order.
        for (const auto& c : s.clusters) {
          if (s.sfkb.flaw(c.representative).label) list.push_back(cluster_view(s, c));
        }
        return ok(list);
      }
      if (n == 3 && verb == "proposals") {
        json list = json::array();
        for (const auto& p : s.proposals) list.push_back(proposal_json(s, p));
        return ok(list);
      }
      if (n == 3 && verb == "lineage") return ok(with_stamp(s.store.lineage_json(), s));
      if (n == 3 && verb == "reports") {
        json list = json::array();
        for (const auto& r : s.reports) list.push_back(r.to_json());
        return ok(list);
      }
      if (n == 3 && verb == "heatmap") {
        const auto v = q("v") ? parse_u64(*q("v"), "version") : s.store.head();
        const auto res = q("res") ? parse_u64(*q("res"), "resolution") : 64;
        std::optional<Slice> sl_opt;
        if (q("axis") || q("value")) {
          require(q("axis") && q("value"), ErrorCode::usage, "a slice needs both axis and value");
          Slice sc;
          sc.axis = parse_u64(*q("axis"), "axis");
          try {
            sc.value = std::stod(*q("value"));
          } catch (const std::exception&) {
            fail(ErrorCode::usage, "bad slice value");
          }
          sl_opt = sc;
        }
        const auto h = heatmap(s.store.at(v), res, sl_opt);
        if (q("format") && *q("format") == "csv") return HttpResponse{200, h.to_csv(), "text/csv"};
        json j = h.to_json();
        j["artifact_version"] = v;
        return ok(j);
      }
      if (n == 3 && verb == "export") return HttpResponse{200, export_session(s), "application/json"};
    }

    if (post) {
      std::unique_lock wl(sl->mu);
      HttpResponse out;
      if (n == 3 && verb == "audit") {
        std::optional<Disk> steer;
        if (body.contains("region") && !body.at("region").is_null()) steer = body_field<Disk>(body, "region");
        std::optional<std::uint64_t> version;
        if (body.contains("artifact") && !body.at("artifact").is_null()) version = body_field<std::uint64_t>(body, "artifact");
        const auto rep = audit(s, body.value("budget", s.config.audit_budget), body_field<std::uint64_t>(body, "seed"),
                               steer, version);
        json clusters = json::array();
        for (const auto& c : triage_open(s)) clusters.push_back(cluster_view(s, c));
        out = ok(with_stamp(json{{"report", rep.to_json()}, {"new_clusters", clusters}}, s));
      } else if (n == 3 && verb == "rollback") {
        rollback(s, body_field<std::uint64_t>(body, "version"));
        out = ok(with_stamp(s.store.lineage_json(), s));
      } else if (n == 3 && verb == "cycle") {
        const auto reps = run_until_clean(s, body.value("max_cycles", std::size_t{1}), body_field<std::uint64_t>(body, "seed"));
        json list = json::array();
        for (const auto& r : reps) list.push_back(r.to_json());
        out = ok(with_stamp(json{{"reports", list}}, s));
      } else {
        return error_response(404, "not_found", "no route for " + method + " " + path);
      }
      save_session(s, sl->dir);
      return out;
    }
  }

  if (n == 3 && parts[0] == "clusters" && post) {
    const auto [sid, local] = split_handle(parts[1], 'c');
    const auto cid = parse_u64(local.substr(1), "cluster id");
    const auto sl = slot(sid);
    std::unique_lock wl(sl->mu);
    Session& s = sl->session;
    HttpResponse out;
    if (parts[2] == "label") {
      const auto verdict = verdict_from_string(body_field<std::string>(body, "verdict"));
      const auto author = author_from_string(body.value("author", std::string("human")));
      const auto res = label_cluster(s, cid, verdict, author, body.value("note", std::string()));
      out = ok(with_stamp(json{{"labeled", res.labeled},
                               {"resolved", res.labeled.size()},
                               {"expert_actions", res.expert_actions},
                               {"resolved_per_action", res.resolved_per_action()}},
                          s));
    } else if (parts[2] == "propose") {
      const auto mode = action_kind_from_string(body_field<std::string>(body, "mode"));
      const auto author = author_from_string(body.value("author", std::string("agent")));
      std::optional<HumanEdit> edit;
      if (author == Author::human) {
        HumanEdit e;
        if (body.contains("directive")) e.directive = body_field<SculptDirective>(body, "directive");
        if (body.contains("states")) e.states = body_field<std::vector<StateVec>>(body, "states");
        e.weight = body.value("weight", mode == ActionKind::seed_positive ? 1.0 : -1.0);
        e.scale = body.value("scale", 1.0);
        if (body.contains("region")) e.region = body_field<Disk>(body, "region");
        edit = std::move(e);
      }
      out = ok(with_stamp(proposal_json(s, propose(s, cid, mode, author, edit)), s), 201);
    } else {
      return error_response(404, "not_found", "no route for " + method + " " + path);
    }
    save_session(s, sl->dir);
    return out;
  }

  if (n >= 2 && parts[0] == "refinements") {
    const auto [sid, pid] = split_handle(parts[1], 'p');
    const auto sl = slot(sid);
    Session& s = sl->session;
    if (get && n == 2) {
      std::shared_lock rl(sl->mu);
      return ok(proposal_json(s, s.proposal(pid)));
    }
    if (post && n == 3) {
      std::unique_lock wl(sl->mu);
      HttpResponse out;
      if (parts[2] == "verify") {
        const auto& r = verify_proposal(s, pid, body_field<std::uint64_t>(body, "seed"));
        out = ok(with_stamp(r.to_json(), s));
      } else if (parts[2] == "merge") {
        const auto v = merge_proposal(s, pid);
        out = ok(with_stamp(json{{"merged", v}}, s));
      } else {
        return error_response(404, "not_found", "no route for " + method + " " + path);
      }
      save_session(s, sl->dir);
      return out;
    }
  }

  return error_response(404, "not_found", "no route for " + method + " " + path);
}

// ---------------------------------------------------------------------------

struct HttpServer::Impl {
  httplib::Server http;
};

HttpServer::HttpServer(fs::path root)
    : service_(std::make_unique<Service>(std::move(root))), impl_(std::make_unique<Impl>()) {
  // SO_REUSEADDR only: the library default adds SO_REUSEPORT, which lets a
  // second server silently share a busy port.
  impl_->http.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    Query query;
    for (const auto& [k, v] : req.params) query[k] = v;
    const auto out = service_->handle(req.method, req.path, query, req.body);
    res.status = out.status;
    res.set_content(out.body, out.content_type);
  };
  impl_->http.Get(R"(/.*)", handler);
  impl_->http.Post(R"(/.*)", handler);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->http.bind_to_any_port(host);
    require(bound > 0, ErrorCode::usage, "could not bind any port on " + host);
  } else {
    require(impl_->http.bind_to_port(host, port), ErrorCode::usage, "port " + std::to_string(port) + " is busy");
  }
  thread_ = std::thread([this] { impl_->http.listen_after_bind(); });
  impl_->http.wait_until_ready();
  return bound;
}

void HttpServer::run(const std::string& host, int port) {
  require(impl_->http.bind_to_port(host, port), ErrorCode::usage, "port " + std::to_string(port) + " is busy");
  impl_->http.listen_after_bind();
}

void HttpServer::stop() {
  if (impl_) impl_->http.stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace flywheel
