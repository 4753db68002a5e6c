#include "savn/model/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace savn::model {
namespace {

constexpr char kMagic[8] = {'S', 'A', 'V', 'N', 'C', 'K', 'P', 'T'};

template <typename T>
void put_le(std::string& out, T v) {
  auto bits = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
  out.append(reinterpret_cast<const char*>(bits.data()), bits.size());
}

template <typename T>
T get_le(std::string_view in, std::size_t& pos) {
  if (in.size() - pos < sizeof(T)) throw CheckpointError("checkpoint truncated");
  std::array<unsigned char, sizeof(T)> bits;
  std::memcpy(bits.data(), in.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
  pos += sizeof(T);
  return std::bit_cast<T>(bits);
}

nlohmann::json layout_json(const ad::ParamVector& p) {
  auto arr = nlohmann::json::array();
  for (const auto& s : p.slices()) arr.push_back({{"name", s.name}, {"shape", s.shape}});
  return arr;
}

ad::ParamVector layout_from(const nlohmann::json& arr) {
  ad::ParamVector p;
  for (const auto& s : arr) p.add_slice(s.at("name").get<std::string>(), s.at("shape").get<ad::Shape>());
  return p;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json header = {{"network", ckpt.network},
                           {"theta", layout_json(ckpt.theta)},
                           {"phi", layout_json(ckpt.phi)},
                           {"extra", ckpt.extra}};
  const std::string text = header.dump();
  std::string out(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, text.size());
  out += text;
  for (double v : ckpt.theta.values()) put_le(out, v);
  for (double v : ckpt.phi.values()) put_le(out, v);
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("not a checkpoint (bad magic)");
  }
  std::size_t pos = sizeof(kMagic);
  const auto version = get_le<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const auto header_len = get_le<std::uint64_t>(bytes, pos);
  if (bytes.size() - pos < header_len) throw CheckpointError("checkpoint truncated");
  Checkpoint ckpt;
  try {
    const auto header = nlohmann::json::parse(bytes.substr(pos, header_len));
    pos += header_len;
    ckpt.network = header.at("network").get<NetworkConfig>();
    ckpt.theta = layout_from(header.at("theta"));
    ckpt.phi = layout_from(header.at("phi"));
    ckpt.extra = header.value("extra", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint header: ") + e.what());
  } catch (const ad::GraphError& e) {
    throw CheckpointError(std::string("bad checkpoint layout: ") + e.what());
  }
  for (double& v : ckpt.theta.values()) v = get_le<double>(bytes, pos);
  for (double& v : ckpt.phi.values()) v = get_le<double>(bytes, pos);
  if (pos != bytes.size()) throw CheckpointError("trailing bytes after checkpoint payload");
  if (!PolicyModel(ckpt.network).layout().same_layout(ckpt.theta)) {
    throw CheckpointError("theta layout does not match the network config");
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = encode_checkpoint(ckpt);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open " + tmp + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode_checkpoint(buf.str());
}

}  // namespace savn::model
