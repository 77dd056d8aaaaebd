#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "devgan/network.hpp"

namespace devgan::nn {

// On-disk layout, all integers little-endian:
//
//   "DGCK"                 4-byte magic
//   u32 version            kCheckpointVersion
//   u32 header_bytes
//   header                 UTF-8 text, one record per line (see below)
//   float32[]              every tensor listed in the header, in order
//   u32 crc32              zlib CRC-32 of all preceding bytes
//
// Header records:
//
//   seed <u64>
//   step <u64>
//   networks <count>
//   network <name>
//   input <d0,d1,...>
//   compile optimizer=<adam|rmsprop> lr=<f> beta1=<f> beta2=<f> rho=<f> epsilon=<f> loss=<kind> t=<u64>
//   layers <count>
//   layer <kind> key=value ... trainable=<0|1>
//   tensors <count>
//   tensor <name> <d0,d1,...>
//   end
//
// Floats in the header are printed in shortest round-trip form. Per network,
// tensors are written layer by layer as params, state, first-moment slots,
// second-moment slots.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::vector<std::pair<std::string, Network>> networks;

  const Network& get(const std::string& name) const;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
// Throws FormatError on bad magic, version mismatch, truncation or CRC failure.
Checkpoint decode_checkpoint(const std::string& bytes);

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

void save_network(const Network& net, const std::filesystem::path& path);
Network load_network(const std::filesystem::path& path);

std::uint32_t crc32_of(const void* data, std::size_t len);

}  // namespace devgan::nn
