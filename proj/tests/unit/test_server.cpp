#include "doctest.h"

#include <httplib.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include "flywheel/json.hpp"
#include "flywheel/server.hpp"

using namespace flywheel;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("flywheel_srv_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

json body_of(const httplib::Result& r) {
  REQUIRE(r);
  return json::parse(r->body);
}

httplib::Result post(httplib::Client& c, const std::string& path, const json& body) {
  return c.Post(path, body.dump(), "application/json");
}

}  // namespace

TEST_CASE("service routing without a transport") {
  const auto root = scratch("svc");
  Service svc(root);
  auto r = svc.handle("GET", "/sessions", {}, "");
  CHECK(r.status == 200);
  CHECK(json::parse(r.body) == json::array());

  CHECK(svc.handle("GET", "/nope", {}, "").status == 404);
  CHECK(svc.handle("GET", "/sessions/s9/metrics", {}, "").status == 404);
  CHECK(svc.handle("POST", "/sessions", {}, "{not json").status == 400);
  CHECK(svc.handle("POST", "/sessions", {}, "{}").status == 400);  // seed is required

  r = svc.handle("POST", "/sessions", {}, R"({"seed": 7})");
  REQUIRE(r.status == 201);
  const auto j = json::parse(r.body);
  CHECK(j.at("id") == "s1");
  CHECK(j.at("stamp").at("version") == 0);
  CHECK(svc.session_count() == 1);
  CHECK(fs::exists(root / "s1" / "lineage.json"));

  r = svc.handle("GET", "/sessions/s1/heatmap", {{"res", "8"}, {"format", "csv"}}, "");
  CHECK(r.status == 200);
  CHECK(r.content_type == "text/csv");
  CHECK(svc.handle("GET", "/sessions/s1/heatmap", {{"res", "x"}}, "").status == 400);
  CHECK(svc.handle("POST", "/clusters/garbage/label", {}, "{}").status == 404);
  CHECK(svc.handle("GET", "/refinements/s1.p99", {}, "").status == 404);
  CHECK(svc.handle("POST", "/sessions/s1/rollback", {}, R"({"version": 5})").status == 404);

  // A restarted service reloads the session from disk.
  const auto before = svc.handle("GET", "/sessions/s1/metrics", {}, "").body;
  Service again(root);
  CHECK(again.session_count() == 1);
  CHECK(again.handle("GET", "/sessions/s1/metrics", {}, "").body == before);
  r = again.handle("POST", "/sessions", {}, R"({"seed": 3})");
  CHECK(json::parse(r.body).at("id") == "s2");

  // Corrupt session directories are refused at startup.
  {
    std::ofstream out(root / "s1" / "lineage.json");
    out << "{\"versions\": 12";
  }
  try {
    Service broken(root);
    FAIL("expected data error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::data);
  }
  fs::remove_all(root);
}

TEST_CASE("live http workflow") {
  const auto root = scratch("http");
  HttpServer server(root);
  const int port = server.start("127.0.0.1", 0);
  REQUIRE(port > 0);
  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(60, 0);

  auto r = cli.Get("/sessions");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(body_of(r) == json::array());

  r = post(cli, "/sessions", {{"seed", 7}});
  REQUIRE(r);
  CHECK(r->status == 201);
  const std::string sid = body_of(r).at("id");

  r = cli.Get("/sessions/" + sid + "/metrics");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(body_of(r).contains("expert_fidelity"));

  r = post(cli, "/sessions/" + sid + "/audit", {{"seed", 11}});
  REQUIRE(r);
  REQUIRE(r->status == 200);
  const auto clusters = body_of(r).at("new_clusters");
  REQUIRE(!clusters.empty());
  CHECK(body_of(cli.Get("/sessions/" + sid + "/flaws?status=triaged")).size() > 0);
  CHECK(body_of(cli.Get("/sessions/" + sid + "/clusters")).size() == clusters.size());
  CHECK(cli.Get("/sessions/" + sid + "/gaps")->status == 200);

  // Hand-driven step on the top cluster: label, propose, merge before and after verification.
  const std::string top = clusters[0].at("handle");
  r = post(cli, "/clusters/" + top + "/label", {{"verdict", "confirmed"}, {"note", "unsafe"}});
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(body_of(r).at("resolved").get<std::size_t>() >= 1);
  r = post(cli, "/clusters/" + top + "/label", {{"verdict", "benign"}});
  CHECK(r->status == 409);  // relabeling
  r = post(cli, "/clusters/" + top + "/propose", {{"mode", "patch_negative"}});
  REQUIRE(r);
  REQUIRE(r->status == 201);
  const std::string ph = body_of(r).at("handle");
  CHECK(body_of(cli.Get("/refinements/" + ph)).at("verification").is_null());
  r = post(cli, "/refinements/" + ph + "/merge", json::object());
  CHECK(r->status == 409);
  CHECK(body_of(r).at("error") == "verification");
  r = post(cli, "/refinements/" + ph + "/verify", {{"seed", 100}});
  REQUIRE(r);
  CHECK(r->status == 200);
  const bool passed = body_of(r).at("pass");
  CHECK(body_of(cli.Get("/refinements/" + ph)).at("verification").at("pass") == passed);
  if (!passed) {
    r = post(cli, "/refinements/" + ph + "/merge", json::object());
    CHECK(r->status == 409);
  }
  CHECK(cli.Get("/sessions/" + sid + "/proposals")->status == 200);

  // An autonomous cycle, then roll back to the root so the first merged
  // candidate is fresh again.
  r = post(cli, "/sessions/" + sid + "/cycle", {{"seed", 21}});
  REQUIRE(r);
  REQUIRE(r->status == 200);
  CHECK(body_of(r).at("reports").size() == 1);
  const auto lineage = body_of(cli.Get("/sessions/" + sid + "/lineage"));
  std::string first;
  for (const auto& v : lineage.at("versions")) {
    if (v.at("parent") == 0 && v.at("verification").is_object()) first = sid + "." + v.at("proposal_id").get<std::string>();
  }
  REQUIRE(!first.empty());
  const auto head_before = lineage.at("head").get<std::uint64_t>();
  r = post(cli, "/sessions/" + sid + "/rollback", {{"version", 0}});
  CHECK(r->status == 200);
  CHECK(body_of(r).at("stamp").at("version") == 0);

  // Two clients race to merge the same verified candidate: exactly one wins.
  int statuses[2] = {0, 0};
  std::thread t[2];
  for (int i = 0; i < 2; ++i) {
    t[i] = std::thread([&, i] {
      httplib::Client c("127.0.0.1", port);
      c.set_read_timeout(60, 0);
      const auto res = c.Post("/refinements/" + first + "/merge", "{}", "application/json");
      statuses[i] = res ? res->status : -1;
    });
  }
  for (auto& th : t) th.join();
  std::sort(std::begin(statuses), std::end(statuses));
  CHECK(statuses[0] == 200);
  CHECK(statuses[1] == 409);
  CHECK(body_of(cli.Get("/sessions/" + sid + "/lineage")).at("head") == head_before + 1);

  r = cli.Get("/sessions/" + sid + "/heatmap?res=16&v=1");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(body_of(r).at("values").size() == 256);
  CHECK(body_of(r).at("artifact_version") == 1);

  CHECK(body_of(cli.Get("/sessions/" + sid + "/reports")).size() >= 1);

  r = cli.Get("/sessions/" + sid + "/export");
  REQUIRE(r);
  CHECK(r->status == 200);
  const auto imported = import_session(r->body);
  auto served = body_of(cli.Get("/sessions/" + sid + "/metrics"));
  served.erase("stamp");
  CHECK(metrics(imported).to_json() == served);

  // The port is now taken.
  HttpServer second(scratch("http2"));
  try {
    second.start("127.0.0.1", port);
    FAIL("expected usage error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::usage);
  }

  server.stop();
  fs::remove_all(root);
  fs::remove_all(scratch("http2"));
}
