#include "flywheel/artifact.hpp"

#include "flywheel/json.hpp"

namespace flywheel {

void RewardArtifact::validate() const {
  scorer.validate();
  mapping.validate();
  beta.validate();
  domain.validate();
  for (const auto& g : gates) {
    require(!g.when.empty(), ErrorCode::usage, "context gate needs a context condition");
  }
}

bool ContextGate::fires(const StateVec& s) const {
  for (const auto& [attr, value] : when) {
    const auto it = s.context.find(attr);
    if (it == s.context.end() || it->second != value) return false;
  }
  return region_contains(region, s.values);
}

double ungated_reward(const RewardArtifact& artifact, const StateVec& s, double t) {
  return artifact.beta.at(t) * apply_mapping(artifact.mapping, artifact.scorer.score(s));
}

double reward(const RewardArtifact& artifact, const StateVec& s, std::optional<double> t) {
  require(artifact.domain.contains(s), ErrorCode::out_of_domain, "state outside the artifact domain");
  for (const auto& g : artifact.gates) {
    if (g.fires(s)) return 0.0;
  }
  return ungated_reward(artifact, s, t.value_or(0.0));
}

std::string artifact_hash(const RewardArtifact& artifact) {
  json j = artifact;
  j.erase("version");
  return content_hash(j.dump());
}

std::string to_canonical_json(const RewardArtifact& artifact) {
  json j = artifact;
  j["content_hash"] = artifact_hash(artifact);
  return j.dump(1);
}

RewardArtifact artifact_from_json(const std::string& text) {
  const json j = parse_json(text, "artifact");
  auto a = j.get<RewardArtifact>();
  const auto stored = field<std::string>(j, "content_hash");
  require(stored == artifact_hash(a), ErrorCode::data, "artifact content hash mismatch");
  return a;
}

}  // namespace flywheel
