#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace gridshed {

/// Named parameter blocks plus free-form metadata (architecture, seed,
/// step count). Stored as manifest.json and a flat little-endian f64 blob.
struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Eigen::VectorXd>> blocks;

  void add(const std::string& name, const Eigen::VectorXd& values);
  const Eigen::VectorXd& block(const std::string& name) const;
  bool has(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace gridshed
