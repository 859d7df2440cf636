#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "flywheel/interface.hpp"
#include "flywheel/json.hpp"

using namespace flywheel;
namespace fs = std::filesystem;

namespace {

RewardArtifact single_anchor(std::vector<double> at, double weight = 1.0, std::size_t dims = 2) {
  RewardArtifact a;
  std::vector<double> bw(dims, 0.05);
  a.scorer = ScorerModel(RbfParams{bw, {Anchor{StateVec(std::move(at)), weight}}}, Calibration{0.0, 1.0});
  a.domain = DomainBox::unit(dims);
  return a;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("flywheel_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

const Session& cycled() {
  static const Session s = [] {
    auto x = create_session(SessionConfig{});
    run_cycle(x, CycleMode::autonomous, 7);
    return x;
  }();
  return s;
}

}  // namespace

TEST_CASE("dataset csv round trip") {
  auto d = make_world(preset_world("two-ridges", 7)).sample_expert(50, 0.2, 1);
  d.states[0].context = {{"time", "night"}};
  const auto csv = dataset_to_csv(d);
  CHECK(csv.rfind("x0,x1,ctx_time,split\n", 0) == 0);
  const auto back = dataset_from_csv(csv);
  CHECK(back.states == d.states);
  CHECK(back.split == d.split);
  CHECK(dataset_to_csv(back) == csv);
  CHECK_THROWS_AS(dataset_from_csv("x0,x1,split\n0.1,zz,train\n"), Error);
  CHECK_THROWS_AS(dataset_from_csv("x0,x1,split\n0.1,0.2,maybe\n"), Error);

  const std::vector<StateVec> st{StateVec({0.1, 0.2}), StateVec({0.3, 0.4})};
  CHECK(states_from_csv(states_to_csv(st)) == st);
}

TEST_CASE("heatmap") {
  const auto zero = heatmap(single_anchor({0.5, 0.5}, 0.0), 16);
  CHECK(zero.values.size() == 256);
  for (double v : zero.values) CHECK(v == 0.0);
  CHECK(zero.max == 0.0);

  const auto hm = heatmap(single_anchor({0.31, 0.77}), 20);
  const auto it = std::max_element(hm.values.begin(), hm.values.end());
  const auto idx = static_cast<std::size_t>(it - hm.values.begin());
  const auto row = idx / 20, col = idx % 20;
  // Oracle: the cell whose center is nearest the anchor.
  std::size_t best_r = 0, best_c = 0;
  double best = 1e9;
  for (std::size_t r = 0; r < 20; ++r)
    for (std::size_t c = 0; c < 20; ++c) {
      const double d = std::hypot(hm.x[c] - 0.31, hm.y[r] - 0.77);
      if (d < best) best = d, best_r = r, best_c = c;
    }
  CHECK(row == best_r);
  CHECK(col == best_c);
  CHECK(hm.max == *it);

  const auto one = heatmap(single_anchor({0.5, 0.5}), 1);
  REQUIRE(one.values.size() == 1);
  CHECK(one.x[0] == 0.5);
  CHECK(one.y[0] == 0.5);

  const auto csv = hm.to_csv();
  CHECK(csv.rfind("row,col,x,y,reward\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 401);
  CHECK(hm.to_json().at("values").size() == 400);

  const auto cube = single_anchor({0.5, 0.5, 0.5}, 1.0, 3);
  try {
    (void)heatmap(cube, 8);
    FAIL("expected usage error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::usage);
  }
  // Odd resolution puts a cell center exactly on the anchor.
  const auto sl = heatmap(cube, 9, Slice{2, 0.5});
  CHECK(sl.slice);
  CHECK(sl.max == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(heatmap(cube, 9, Slice{2, 0.9}).max < 1e-6);
  CHECK_THROWS_AS(heatmap(single_anchor({0.5, 0.5}), 0), Error);
}

TEST_CASE("session directory round trip") {
  const auto& s = cycled();
  const auto dir = scratch("save");
  save_session(s, dir);
  for (const char* f : {"config.json", "world.json", "constraints.json", "data.csv", "sfkb.jsonl", "lineage.json",
                        "artifacts/artifact_v0.json", "reports/cycle_0.json", "reglib.json", "refinements.json"})
    CHECK(fs::exists(dir / f));
  const auto back = load_session(dir);
  CHECK(session_files(back) == session_files(s));
  CHECK(metrics(back).to_json().dump() == metrics(s).to_json().dump());

  // Artifact files re-serialize byte-identically.
  for (const auto& e : fs::directory_iterator(dir / "artifacts")) {
    std::ifstream in(e.path());
    const std::string text((std::istreambuf_iterator<char>(in)), {});
    CHECK(to_canonical_json(artifact_from_json(text)) == text);
  }

  // Corruption is refused with the file named.
  {
    std::ofstream out(dir / "artifacts" / "artifact_v0.json");
    out << "{}";
  }
  try {
    (void)load_session(dir);
    FAIL("expected data error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::data);
    CHECK(std::string(e.what()).find("artifact_v0.json") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("export and import") {
  const auto& s = cycled();
  const auto archive = export_session(s);
  const auto back = import_session(archive);
  CHECK(metrics(back).to_json().dump() == metrics(s).to_json().dump());
  CHECK(export_session(back) == archive);

  auto busy = s;
  busy.busy = true;
  try {
    (void)export_session(busy);
    FAIL("expected conflict");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::conflict);
  }

  auto j = json::parse(archive);
  j["files"].erase("lineage.json");
  try {
    (void)import_session(j.dump());
    FAIL("expected data error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::data);
    CHECK(std::string(e.what()).find("lineage.json") != std::string::npos);
  }
  auto evil = json::parse(archive);
  evil["files"]["../escape.txt"] = "x";
  CHECK_THROWS_AS(import_session(evil.dump()), Error);
  CHECK_THROWS_AS(import_session("not an archive"), Error);
}

TEST_CASE("error mapping at the process boundary") {
  CHECK(exit_code(ErrorCode::usage) == 1);
  CHECK(exit_code(ErrorCode::verification) == 2);
  CHECK(exit_code(ErrorCode::conflict) == 2);
  CHECK(exit_code(ErrorCode::data) == 3);
  CHECK(http_status(ErrorCode::not_found) == 404);
  CHECK(http_status(ErrorCode::verification) == 409);
  CHECK(http_status(ErrorCode::conflict) == 409);
  CHECK(http_status(ErrorCode::usage) == 400);
}
