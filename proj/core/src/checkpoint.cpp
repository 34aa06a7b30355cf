#include "l2aug/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "l2aug/error.hpp"

namespace l2aug::ad {

namespace {

constexpr char kMagic[12] = {'L', '2', 'A', 'U', 'G', '.', 'C', 'K', 'P', 'T', 0, 0};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_le(std::ostream& os, T v) {
  // Serialized layout is little-endian; all supported targets are LE.
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  os.write(buf, sizeof(T));
}

template <typename T>
T read_le(std::istream& is, const std::string& what) {
  char buf[sizeof(T)];
  is.read(buf, sizeof(T));
  if (!is) throw IoError("checkpoint: truncated while reading " + what);
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamSet& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("checkpoint: cannot open '" + path + "' for writing");
  os.write(kMagic, sizeof(kMagic));
  write_le(os, kVersion);
  write_le(os, static_cast<std::uint64_t>(params.size()));
  for (const auto& p : params) {
    write_le(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_le(os, static_cast<std::uint32_t>(p.value.ndim()));
    for (std::size_t d : p.value.shape) write_le(os, static_cast<std::uint64_t>(d));
    os.write(reinterpret_cast<const char*>(p.value.data.data()),
             static_cast<std::streamsize>(p.value.numel() * sizeof(double)));
  }
  if (!os) throw IoError("checkpoint: write failed for '" + path + "'");
}

ParamSet load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open '" + path + "'");
  char magic[sizeof(kMagic)];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("checkpoint: '" + path + "' is not a tensor container");
  }
  const auto version = read_le<std::uint32_t>(is, "version");
  if (version != kVersion) {
    throw IoError("checkpoint: unsupported version " + std::to_string(version) + " in '" +
                  path + "'");
  }
  const auto count = read_le<std::uint64_t>(is, "record count");
  ParamSet params;
  for (std::uint64_t r = 0; r < count; ++r) {
    const auto name_len = read_le<std::uint32_t>(is, "name length");
    if (name_len > 4096) throw IoError("checkpoint: implausible name length");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw IoError("checkpoint: truncated name");
    const auto ndim = read_le<std::uint32_t>(is, "rank");
    if (ndim > 8) throw IoError("checkpoint: implausible rank");
    std::vector<std::size_t> shape(ndim);
    std::size_t numel = 1;
    for (auto& d : shape) {
      d = static_cast<std::size_t>(read_le<std::uint64_t>(is, "dimension"));
      numel *= d;
    }
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(numel * sizeof(double)));
    if (!is) throw IoError("checkpoint: truncated data for '" + name + "'");
    params.add(std::move(name), std::move(t));
  }
  return params;
}

}  // namespace l2aug::ad
