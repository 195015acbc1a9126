#include "serkit/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include "serkit/errors.hpp"

namespace ser {

namespace {

constexpr char kMagic[4] = {'S', 'E', 'R', 'W'};
constexpr uint32_t kVersion = 1;

const std::array<uint32_t, 256>& crc_table() {
  static const std::array<uint32_t, 256> table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) {
        c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      }
      t[i] = c;
    }
    return t;
  }();
  return table;
}

// Accumulates bytes, maintaining the CRC as it goes, and writes at the end.
// Everything passes through append so the checksum always covers exactly
// the bytes on disk.
class Writer {
 public:
  void append(const void* data, size_t len) {
    const auto* p = static_cast<const uint8_t*>(data);
    crc_ = crc32_ieee(p, len, crc_);
    buffer_.insert(buffer_.end(), p, p + len);
  }

  void append_u32(uint32_t v) {
    const uint8_t bytes[4] = {
        static_cast<uint8_t>(v),
        static_cast<uint8_t>(v >> 8),
        static_cast<uint8_t>(v >> 16),
        static_cast<uint8_t>(v >> 24),
    };
    append(bytes, 4);
  }

  void append_f32(const float* values, size_t count) {
    // Floats are serialized as the little endian bytes of their IEEE-754
    // encoding; on the platforms we build for that is a plain memcpy.
    static_assert(sizeof(float) == 4);
    for (size_t i = 0; i < count; ++i) {
      uint32_t bits;
      std::memcpy(&bits, &values[i], 4);
      append_u32(bits);
    }
  }

  void finish(const std::string& path) {
    const uint32_t crc = crc_;
    append_u32(crc);  // updates crc_, but we already captured it
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw IoError("cannot write checkpoint: " + path);
    }
    out.write(reinterpret_cast<const char*>(buffer_.data()),
              static_cast<std::streamsize>(buffer_.size()));
    if (!out) {
      throw IoError("checkpoint write failed: " + path);
    }
  }

 private:
  std::vector<uint8_t> buffer_;
  uint32_t crc_ = 0;
};

class Reader {
 public:
  Reader(std::vector<uint8_t> bytes, std::string path)
      : bytes_(std::move(bytes)), path_(std::move(path)) {}

  const uint8_t* take(size_t len) {
    if (pos_ + len > bytes_.size()) {
      throw FormatError("checkpoint truncated: " + path_);
    }
    const uint8_t* p = bytes_.data() + pos_;
    pos_ += len;
    return p;
  }

  uint32_t take_u32() {
    const uint8_t* p = take(4);
    return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
           static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
  }

  size_t pos() const { return pos_; }
  size_t size() const { return bytes_.size(); }
  const uint8_t* data() const { return bytes_.data(); }

 private:
  std::vector<uint8_t> bytes_;
  std::string path_;
  size_t pos_ = 0;
};

}  // namespace

uint32_t crc32_ieee(const uint8_t* data, size_t len, uint32_t crc) {
  const auto& table = crc_table();
  crc = ~crc;
  for (size_t i = 0; i < len; ++i) {
    crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
  }
  return ~crc;
}

void save_checkpoint(const std::string& path,
                     std::span<const TensorRecord> tensors) {
  Writer writer;
  writer.append(kMagic, 4);
  writer.append_u32(kVersion);
  writer.append_u32(static_cast<uint32_t>(tensors.size()));
  for (const auto& tensor : tensors) {
    writer.append_u32(static_cast<uint32_t>(tensor.name.size()));
    writer.append(tensor.name.data(), tensor.name.size());
    writer.append_u32(static_cast<uint32_t>(tensor.shape.size()));
    size_t numel = 1;
    for (int d : tensor.shape) {
      if (d < 0) {
        throw InputError("save_checkpoint: negative dimension in '" +
                         tensor.name + "'");
      }
      writer.append_u32(static_cast<uint32_t>(d));
      numel *= static_cast<size_t>(d);
    }
    if (numel != tensor.data.size()) {
      throw InputError("save_checkpoint: '" + tensor.name + "' has " +
                       std::to_string(tensor.data.size()) + " values for " +
                       std::to_string(numel) + " slots");
    }
    writer.append_f32(tensor.data.data(), tensor.data.size());
  }
  writer.finish(path);
}

std::vector<TensorRecord> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open checkpoint: " + path);
  }
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  if (in.bad()) {
    throw IoError("checkpoint read failed: " + path);
  }

  if (bytes.size() < 16) {
    throw FormatError("checkpoint too small: " + path);
  }
  // The trailing CRC covers everything before it; verify before parsing.
  const size_t body = bytes.size() - 4;
  const uint32_t stored = static_cast<uint32_t>(bytes[body]) |
                          static_cast<uint32_t>(bytes[body + 1]) << 8 |
                          static_cast<uint32_t>(bytes[body + 2]) << 16 |
                          static_cast<uint32_t>(bytes[body + 3]) << 24;
  const uint32_t actual = crc32_ieee(bytes.data(), body);
  if (stored != actual) {
    throw IntegrityError("checkpoint checksum mismatch: " + path);
  }

  Reader reader(std::move(bytes), path);
  if (std::memcmp(reader.take(4), kMagic, 4) != 0) {
    throw FormatError("bad checkpoint magic: " + path);
  }
  const uint32_t version = reader.take_u32();
  if (version != kVersion) {
    throw VersionError("checkpoint version " + std::to_string(version) +
                       ", this build reads version " + std::to_string(kVersion) +
                       ": " + path);
  }
  const uint32_t count = reader.take_u32();

  std::vector<TensorRecord> tensors;
  tensors.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    TensorRecord record;
    const uint32_t name_len = reader.take_u32();
    const uint8_t* name = reader.take(name_len);
    record.name.assign(reinterpret_cast<const char*>(name), name_len);
    const uint32_t rank = reader.take_u32();
    if (rank > 8) {
      throw FormatError("checkpoint tensor '" + record.name +
                        "' has implausible rank: " + path);
    }
    size_t numel = 1;
    for (uint32_t r = 0; r < rank; ++r) {
      const uint32_t dim = reader.take_u32();
      record.shape.push_back(static_cast<int>(dim));
      numel *= dim;
    }
    const uint8_t* payload = reader.take(numel * 4);
    record.data.resize(numel);
    for (size_t j = 0; j < numel; ++j) {
      const uint8_t* p = payload + j * 4;
      const uint32_t bits = static_cast<uint32_t>(p[0]) |
                            static_cast<uint32_t>(p[1]) << 8 |
                            static_cast<uint32_t>(p[2]) << 16 |
                            static_cast<uint32_t>(p[3]) << 24;
      std::memcpy(&record.data[j], &bits, 4);
    }
    tensors.push_back(std::move(record));
  }
  if (reader.pos() != reader.size() - 4) {
    throw FormatError("checkpoint has trailing bytes: " + path);
  }
  return tensors;
}

}  // namespace ser
