#include "gridshed/network.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "gridshed/errors.hpp"
#include "gridshed/util.hpp"

namespace gridshed {

using nlohmann::json;

std::string to_string(BusKind kind) {
  switch (kind) {
    case BusKind::Slack: return "slack";
    case BusKind::Generator: return "generator";
    case BusKind::LoadOnly: return "load-only";
  }
  return "load-only";
}

BusKind bus_kind_from_string(const std::string& name) {
  if (name == "slack") return BusKind::Slack;
  if (name == "generator") return BusKind::Generator;
  if (name == "load-only" || name == "load_only" || name == "load") return BusKind::LoadOnly;
  throw InvalidInput("unknown bus kind '" + name + "'");
}

int Network::slack_bus() const {
  for (const auto& b : buses)
    if (b.kind == BusKind::Slack) return b.id;
  throw InvalidInput("network has no slack bus");
}

void Network::validate() const {
  const int n = bus_count();
  if (n == 0) throw InvalidInput("network has no buses");
  int slack = 0;
  for (int i = 0; i < n; ++i) {
    const auto& b = buses[static_cast<size_t>(i)];
    if (b.id != i) throw InvalidInput("bus ids must be 0-based and in order");
    if (!(b.voltage_mag > 0.0)) throw InvalidInput("bus voltage_mag must be positive");
    if (b.kind == BusKind::Slack) ++slack;
  }
  if (slack != 1) throw InvalidInput("network must have exactly one slack bus");
  auto check_bus = [n](int id, const char* what) {
    if (id < 0 || id >= n) throw InvalidInput(std::string(what) + " references unknown bus");
  };
  for (const auto& l : lines) {
    check_bus(l.from_bus, "line");
    check_bus(l.to_bus, "line");
    if (l.from_bus == l.to_bus) throw InvalidInput("line endpoints must differ");
    if (l.resistance == 0.0 && l.reactance == 0.0)
      throw InvalidInput("zero-impedance branch");
  }
  for (const auto& g : generators) {
    check_bus(g.bus, "generator");
    if (!(g.inertia_H > 0.0)) throw InvalidInput("generator inertia_H must be positive");
    if (g.damping_D < 0.0) throw InvalidInput("generator damping_D must be non-negative");
    if (buses[static_cast<size_t>(g.bus)].kind == BusKind::LoadOnly)
      throw InvalidInput("generator attached to a load-only bus");
  }
  for (const auto& ld : loads) {
    check_bus(ld.bus, "load");
    if (ld.p_load < 0.0) throw InvalidInput("p_load must be non-negative");
  }
  if (!is_connected(*this)) throw InvalidInput("network is not connected");
}

std::vector<double> Network::bus_p_load() const {
  std::vector<double> p(buses.size(), 0.0);
  for (const auto& ld : loads) p[static_cast<size_t>(ld.bus)] += ld.p_load;
  return p;
}

std::vector<double> Network::bus_q_load() const {
  std::vector<double> q(buses.size(), 0.0);
  for (const auto& ld : loads) q[static_cast<size_t>(ld.bus)] += ld.q_load;
  return q;
}

std::vector<double> Network::scheduled_p() const {
  std::vector<double> p(buses.size(), 0.0);
  for (const auto& g : generators) p[static_cast<size_t>(g.bus)] += g.p_mech;
  for (const auto& ld : loads) p[static_cast<size_t>(ld.bus)] -= ld.p_load;
  return p;
}

std::vector<double> Network::scheduled_q_load() const { return bus_q_load(); }

std::vector<std::vector<int>> adjacency_lists(const Network& net) {
  std::vector<std::vector<int>> adj(net.buses.size());
  for (const auto& l : net.lines) {
    if (!l.in_service) continue;
    auto& a = adj[static_cast<size_t>(l.from_bus)];
    auto& b = adj[static_cast<size_t>(l.to_bus)];
    if (std::find(a.begin(), a.end(), l.to_bus) == a.end()) a.push_back(l.to_bus);
    if (std::find(b.begin(), b.end(), l.from_bus) == b.end()) b.push_back(l.from_bus);
  }
  for (auto& v : adj) std::sort(v.begin(), v.end());
  return adj;
}

std::vector<int> hop_distances(const Network& net, int source) {
  const auto adj = adjacency_lists(net);
  std::vector<int> dist(net.buses.size(), -1);
  std::queue<int> q;
  dist[static_cast<size_t>(source)] = 0;
  q.push(source);
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    for (int v : adj[static_cast<size_t>(u)]) {
      if (dist[static_cast<size_t>(v)] < 0) {
        dist[static_cast<size_t>(v)] = dist[static_cast<size_t>(u)] + 1;
        q.push(v);
      }
    }
  }
  return dist;
}

bool is_connected(const Network& net) {
  if (net.buses.empty()) return false;
  const auto d = hop_distances(net, 0);
  return std::all_of(d.begin(), d.end(), [](int x) { return x >= 0; });
}

void to_json(json& j, const Network& net) {
  j = json::object();
  j["base_mva"] = net.base_mva;
  j["f_nominal"] = net.f_nominal;
  j["buses"] = json::array();
  for (const auto& b : net.buses) {
    j["buses"].push_back({{"id", b.id},
                          {"kind", to_string(b.kind)},
                          {"voltage_mag", b.voltage_mag},
                          {"voltage_ang", b.voltage_ang},
                          {"p_net", b.p_net},
                          {"q_net", b.q_net}});
  }
  j["lines"] = json::array();
  for (const auto& l : net.lines) {
    j["lines"].push_back({{"from_bus", l.from_bus},
                          {"to_bus", l.to_bus},
                          {"resistance", l.resistance},
                          {"reactance", l.reactance},
                          {"shunt_susceptance", l.shunt_susceptance},
                          {"in_service", l.in_service}});
  }
  j["generators"] = json::array();
  for (const auto& g : net.generators) {
    j["generators"].push_back({{"bus", g.bus},
                               {"inertia_H", g.inertia_H},
                               {"damping_D", g.damping_D},
                               {"p_mech", g.p_mech},
                               {"transient_reactance", g.transient_reactance},
                               {"internal_voltage", g.internal_voltage}});
  }
  j["loads"] = json::array();
  for (const auto& ld : net.loads)
    j["loads"].push_back({{"bus", ld.bus}, {"p_load", ld.p_load}, {"q_load", ld.q_load}});
}

void from_json(const json& j, Network& net) {
  net = Network{};
  net.base_mva = j.value("base_mva", 100.0);
  net.f_nominal = j.value("f_nominal", 60.0);
  for (const auto& jb : j.at("buses")) {
    Bus b;
    b.id = jb.at("id").get<int>();
    b.kind = bus_kind_from_string(jb.at("kind").get<std::string>());
    b.voltage_mag = jb.value("voltage_mag", 1.0);
    b.voltage_ang = jb.value("voltage_ang", 0.0);
    b.p_net = jb.value("p_net", 0.0);
    b.q_net = jb.value("q_net", 0.0);
    net.buses.push_back(b);
  }
  std::sort(net.buses.begin(), net.buses.end(),
            [](const Bus& a, const Bus& b) { return a.id < b.id; });
  for (const auto& jl : j.at("lines")) {
    Line l;
    l.from_bus = jl.at("from_bus").get<int>();
    l.to_bus = jl.at("to_bus").get<int>();
    l.resistance = jl.value("resistance", 0.0);
    l.reactance = jl.value("reactance", 0.0);
    l.shunt_susceptance = jl.value("shunt_susceptance", 0.0);
    l.in_service = jl.value("in_service", true);
    net.lines.push_back(l);
  }
  for (const auto& jg : j.at("generators")) {
    Generator g;
    g.bus = jg.at("bus").get<int>();
    g.inertia_H = jg.at("inertia_H").get<double>();
    g.damping_D = jg.value("damping_D", 0.0);
    g.p_mech = jg.value("p_mech", 0.0);
    g.transient_reactance = jg.value("transient_reactance", 0.0);
    g.internal_voltage = jg.value("internal_voltage", 0.0);
    net.generators.push_back(g);
  }
  for (const auto& jl : j.at("loads")) {
    Load ld;
    ld.bus = jl.at("bus").get<int>();
    ld.p_load = jl.value("p_load", 0.0);
    ld.q_load = jl.value("q_load", 0.0);
    net.loads.push_back(ld);
  }
}

Network load_network(const std::filesystem::path& path) {
  Network net = json::parse(read_file(path)).get<Network>();
  net.validate();
  return net;
}

void save_network(const Network& net, const std::filesystem::path& path) {
  write_file(path, json(net).dump(2) + "\n");
}

std::filesystem::path bundled_case(const std::string& name) {
  return std::filesystem::path(GRIDSHED_DATA_DIR) / "cases" / (name + ".json");
}

}  // namespace gridshed
