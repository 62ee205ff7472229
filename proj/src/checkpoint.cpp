#include "gridshed/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>

#include "gridshed/errors.hpp"
#include "gridshed/util.hpp"

namespace gridshed {

using nlohmann::json;

void Checkpoint::add(const std::string& name, const Eigen::VectorXd& values) {
  if (has(name)) throw InvalidInput("duplicate checkpoint block '" + name + "'");
  blocks.emplace_back(name, values);
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& [n, v] : blocks)
    if (n == name) return true;
  return false;
}

const Eigen::VectorXd& Checkpoint::block(const std::string& name) const {
  for (const auto& [n, v] : blocks)
    if (n == name) return v;
  throw InvalidInput("checkpoint has no block '" + name + "'");
}

namespace {

std::uint64_t to_le(std::uint64_t x) {
  if constexpr (std::endian::native == std::endian::little) return x;
  std::uint64_t r = 0;
  for (int i = 0; i < 8; ++i) r |= ((x >> (8 * i)) & 0xFF) << (8 * (7 - i));
  return r;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir) {
  json manifest;
  manifest["format"] = "gridshed-checkpoint-1";
  manifest["meta"] = ckpt.meta;
  manifest["blocks"] = json::array();
  std::string blob;
  size_t offset = 0;
  for (const auto& [name, values] : ckpt.blocks) {
    manifest["blocks"].push_back({{"name", name}, {"offset", offset}, {"count", values.size()}});
    for (Eigen::Index i = 0; i < values.size(); ++i) {
      std::uint64_t bits;
      std::memcpy(&bits, &values(i), 8);
      bits = to_le(bits);
      blob.append(reinterpret_cast<const char*>(&bits), 8);
    }
    offset += static_cast<size_t>(values.size());
  }
  manifest["total"] = offset;
  write_file(dir / "params.bin", blob);
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const json manifest = json::parse(read_file(dir / "manifest.json"));
  if (manifest.value("format", "") != "gridshed-checkpoint-1")
    throw InvalidInput("unrecognised checkpoint format in " + dir.string());
  const std::string blob = read_file(dir / "params.bin");
  const auto total = manifest.at("total").get<size_t>();
  if (blob.size() != 8 * total) throw InvalidInput("checkpoint blob size mismatch");
  Checkpoint ckpt;
  ckpt.meta = manifest.at("meta");
  for (const auto& b : manifest.at("blocks")) {
    const auto offset = b.at("offset").get<size_t>();
    const auto count = b.at("count").get<size_t>();
    if (offset + count > total) throw InvalidInput("checkpoint block out of range");
    Eigen::VectorXd v(static_cast<Eigen::Index>(count));
    for (size_t i = 0; i < count; ++i) {
      std::uint64_t bits;
      std::memcpy(&bits, blob.data() + 8 * (offset + i), 8);
      bits = to_le(bits);
      std::memcpy(&v(static_cast<Eigen::Index>(i)), &bits, 8);
    }
    ckpt.blocks.emplace_back(b.at("name").get<std::string>(), std::move(v));
  }
  return ckpt;
}

}  // namespace gridshed
