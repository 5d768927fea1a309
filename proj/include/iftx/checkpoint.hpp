#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "iftx/diff.hpp"
#include "json.hpp"

namespace iftx {

// Named-tensor container. File layout (little-endian):
//   magic "IFTXCKPT", u32 version, u64 metadata length, metadata JSON bytes,
//   u64 tensor count, then per tensor: u32 name length, name bytes, u32 rank,
//   rank × u64 dims, product(dims) × f64 values.
struct Checkpoint {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;

  // Stores every parameter as "<ns>/<param name>".
  void put_store(const std::string& ns, const ParamStore& store);
  bool has_store(const std::string& ns) const;
  // Rebuilds a store from the "<ns>/" tensors in file order.
  ParamStore get_store(const std::string& ns) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::vector<unsigned char> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<unsigned char>& bytes);

// FNV-1a over the file bytes, as 16 hex digits.
std::string checkpoint_hash(const std::filesystem::path& path);

}  // namespace iftx
