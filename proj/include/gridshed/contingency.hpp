#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace gridshed {

enum class ContingencyKind { LineTrip, LoadStep, ThreePhaseFault };

std::string to_string(ContingencyKind kind);
ContingencyKind contingency_kind_from_string(const std::string& name);

/// A discrete disturbance. `location` is a line index for line trips and
/// faults, a bus id for load steps.
///
/// Load-step magnitude is active power in pu on the system base, or, when
/// `relative` is set, a fraction of the bus's pre-contingency active load.
/// Either way the step is a resistive shunt sized so that the machines' total
/// electrical output rises by exactly that amount when the step lands.
struct Contingency {
  int id = 0;
  ContingencyKind kind = ContingencyKind::LoadStep;
  int location = 0;
  double magnitude = 0.0;
  bool relative = false;
  double t_apply = 0.0;         // s
  double fault_duration = 0.083;  // s, five cycles at 60 Hz

  void validate() const;
};

void to_json(nlohmann::json& j, const Contingency& c);
void from_json(const nlohmann::json& j, Contingency& c);

/// Reads a JSON list of contingency records; missing ids default to position.
std::vector<Contingency> load_contingencies(const std::filesystem::path& path);
void save_contingencies(const std::vector<Contingency>& set,
                        const std::filesystem::path& path);

std::filesystem::path bundled_contingencies(const std::string& name);

}  // namespace gridshed
