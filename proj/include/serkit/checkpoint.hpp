#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ser {

struct TensorRecord {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;
};

// Checkpoint container, also used as the feature cache. Layout, all little
// endian:
//   "SERW"  magic
//   u32     version (currently 1)
//   u32     tensor count
//   per tensor:
//     u32   name length, then that many name bytes
//     u32   rank, then rank u32 dims
//     f32   payload, row-major
//   u32     CRC32 (IEEE, reflected, poly 0xEDB88320) over every byte above
// Readers verify magic (FormatError), version (VersionError) and the
// checksum (IntegrityError) before trusting anything else.
void save_checkpoint(const std::string& path,
                     std::span<const TensorRecord> tensors);
std::vector<TensorRecord> load_checkpoint(const std::string& path);

// Running CRC32; pass the previous return value to continue a stream.
uint32_t crc32_ieee(const uint8_t* data, size_t len, uint32_t crc = 0);

}  // namespace ser
