#pragma once

// JSON conversions for persisted types. Keys are emitted sorted (nlohmann's
// default object map) and doubles in shortest round-trip form, so dump()
// output is canonical.

#include <nlohmann/json.hpp>

#include "flywheel/artifact.hpp"
#include "flywheel/common.hpp"
#include "flywheel/mapping.hpp"
#include "flywheel/scorer.hpp"
#include "flywheel/toyworld.hpp"

namespace flywheel {

using json = nlohmann::json;

void to_json(json& j, const StateVec& s);
void from_json(const json& j, StateVec& s);
void to_json(json& j, const DomainBox& b);
void from_json(const json& j, DomainBox& b);
void to_json(json& j, const Box& b);
void from_json(const json& j, Box& b);
void to_json(json& j, const Region& r);
void from_json(const json& j, Region& r);
void to_json(json& j, const GaussianComponent& g);
void from_json(const json& j, GaussianComponent& g);
void to_json(json& j, const WorldSpec& w);
void from_json(const json& j, WorldSpec& w);

void to_json(json& j, const Anchor& a);
void from_json(const json& j, Anchor& a);
void to_json(json& j, const ScorerModel& m);
void from_json(const json& j, ScorerModel& m);

void to_json(json& j, const Knot& k);
void from_json(const json& j, Knot& k);
void to_json(json& j, const MappingParams& p);
void from_json(const json& j, MappingParams& p);
void to_json(json& j, const BetaSchedule& b);
void from_json(const json& j, BetaSchedule& b);
void to_json(json& j, const SculptDirective& d);
void from_json(const json& j, SculptDirective& d);

void to_json(json& j, const ContextGate& g);
void from_json(const json& j, ContextGate& g);
void to_json(json& j, const LineageInfo& l);
void from_json(const json& j, LineageInfo& l);
void to_json(json& j, const RewardArtifact& a);
void from_json(const json& j, RewardArtifact& a);

/// Parse with data-error reporting instead of nlohmann exceptions.
json parse_json(const std::string& text, const std::string& what);

/// Reads a required field, rethrowing type errors as data errors.
template <typename T>
T field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) fail(ErrorCode::data, std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::data, std::string("bad field '") + key + "': " + e.what());
  }
}

/// Converts a whole document, rethrowing type errors as data errors.
template <typename T>
T as(const json& j, const std::string& what) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::data, "bad " + what + ": " + e.what());
  }
}

}  // namespace flywheel
