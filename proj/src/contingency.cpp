#include "gridshed/contingency.hpp"

#include "gridshed/errors.hpp"
#include "gridshed/util.hpp"

namespace gridshed {

using nlohmann::json;

std::string to_string(ContingencyKind kind) {
  switch (kind) {
    case ContingencyKind::LineTrip: return "line_trip";
    case ContingencyKind::LoadStep: return "load_step";
    case ContingencyKind::ThreePhaseFault: return "three_phase_fault";
  }
  return "load_step";
}

ContingencyKind contingency_kind_from_string(const std::string& name) {
  if (name == "line_trip") return ContingencyKind::LineTrip;
  if (name == "load_step") return ContingencyKind::LoadStep;
  if (name == "three_phase_fault") return ContingencyKind::ThreePhaseFault;
  throw InvalidInput("unknown contingency kind '" + name + "'");
}

void Contingency::validate() const {
  if (t_apply < 0.0) throw InvalidInput("contingency t_apply must be non-negative");
  if (kind == ContingencyKind::ThreePhaseFault && !(fault_duration > 0.0))
    throw InvalidInput("fault_duration must be positive for a three-phase fault");
  if (location < 0) throw InvalidInput("contingency location must be non-negative");
}

void to_json(json& j, const Contingency& c) {
  j = {{"id", c.id},
       {"kind", to_string(c.kind)},
       {"location", c.location},
       {"magnitude", c.magnitude},
       {"t_apply", c.t_apply}};
  if (c.kind == ContingencyKind::LoadStep) j["relative"] = c.relative;
  if (c.kind == ContingencyKind::ThreePhaseFault) j["fault_duration"] = c.fault_duration;
}

void from_json(const json& j, Contingency& c) {
  c = Contingency{};
  c.id = j.value("id", 0);
  c.kind = contingency_kind_from_string(j.at("kind").get<std::string>());
  c.location = j.at("location").get<int>();
  c.magnitude = j.value("magnitude", 0.0);
  c.relative = j.value("relative", false);
  c.t_apply = j.value("t_apply", 0.0);
  c.fault_duration = j.value("fault_duration", 0.083);
  c.validate();
}

std::vector<Contingency> load_contingencies(const std::filesystem::path& path) {
  const json j = json::parse(read_file(path));
  if (!j.is_array()) throw InvalidInput("contingency file must hold a JSON list");
  std::vector<Contingency> out;
  for (size_t i = 0; i < j.size(); ++i) {
    Contingency c = j[i].get<Contingency>();
    if (!j[i].contains("id")) c.id = static_cast<int>(i);
    out.push_back(c);
  }
  return out;
}

void save_contingencies(const std::vector<Contingency>& set,
                        const std::filesystem::path& path) {
  write_file(path, json(set).dump(2) + "\n");
}

std::filesystem::path bundled_contingencies(const std::string& name) {
  return std::filesystem::path(GRIDSHED_DATA_DIR) / "contingencies" / (name + ".json");
}

}  // namespace gridshed
