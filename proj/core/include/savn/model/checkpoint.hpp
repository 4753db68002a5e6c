#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "savn/autodiff/graph.hpp"
#include "savn/model/policy.hpp"

namespace savn::model {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// On disk: 8-byte magic "SAVNCKPT", u32 format version, u64 header length,
/// a JSON header (network config, slice names and shapes, extra metadata),
/// then theta's values followed by phi's, as little-endian f64.
struct Checkpoint {
  NetworkConfig network;
  ad::ParamVector theta;
  ad::ParamVector phi;  // may be empty
  nlohmann::json extra = nlohmann::json::object();
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace savn::model
