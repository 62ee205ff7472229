#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace gridshed {

enum class BusKind { Slack, Generator, LoadOnly };

std::string to_string(BusKind kind);
BusKind bus_kind_from_string(const std::string& name);

/// Network bus. voltage_mag is the setpoint on slack/generator buses; the
/// remaining fields hold the latest power-flow solution.
struct Bus {
  int id = 0;
  BusKind kind = BusKind::LoadOnly;
  double voltage_mag = 1.0;  // pu
  double voltage_ang = 0.0;  // rad
  double p_net = 0.0;        // pu injection
  double q_net = 0.0;
};

struct Line {
  int from_bus = 0;
  int to_bus = 0;
  double resistance = 0.0;  // pu
  double reactance = 0.0;
  double shunt_susceptance = 0.0;  // total line charging, split between ends
  bool in_service = true;
};

/// Classical machine: constant internal EMF behind transient reactance.
struct Generator {
  int bus = 0;
  double inertia_H = 1.0;   // s
  double damping_D = 0.0;   // pu power / pu frequency
  double p_mech = 0.0;      // pu; on the slack machine this is the solved output
  double transient_reactance = 0.0;
  double internal_voltage = 0.0;  // |E'|, filled by the dynamic model
};

struct Load {
  int bus = 0;
  double p_load = 0.0;
  double q_load = 0.0;
};

struct Network {
  double base_mva = 100.0;
  double f_nominal = 60.0;
  std::vector<Bus> buses;
  std::vector<Line> lines;
  std::vector<Generator> generators;
  std::vector<Load> loads;

  int bus_count() const { return static_cast<int>(buses.size()); }
  int slack_bus() const;
  /// Throws InvalidInput when any structural invariant is violated.
  void validate() const;
  /// Scheduled injections (generation minus load) per bus.
  std::vector<double> scheduled_p() const;
  std::vector<double> scheduled_q_load() const;
  std::vector<double> bus_p_load() const;
  std::vector<double> bus_q_load() const;
};

/// True when every bus is reachable over in-service lines.
bool is_connected(const Network& net);
/// Hop distances from `source` over in-service lines (-1 when unreachable).
std::vector<int> hop_distances(const Network& net, int source);
/// Per-bus neighbour lists over in-service lines (parallel lines collapse).
std::vector<std::vector<int>> adjacency_lists(const Network& net);

void to_json(nlohmann::json& j, const Network& net);
void from_json(const nlohmann::json& j, Network& net);

Network load_network(const std::filesystem::path& path);
void save_network(const Network& net, const std::filesystem::path& path);

/// Location of a bundled case file ("ieee9", "ieee39").
std::filesystem::path bundled_case(const std::string& name);

}  // namespace gridshed
