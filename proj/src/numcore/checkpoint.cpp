#include "splice/numcore/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "splice/errors.hpp"

namespace splice::nc {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

template <class T>
void put(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
bool get(std::ifstream& is, T& v) {
  return static_cast<bool>(is.read(reinterpret_cast<char*>(&v), sizeof(T)));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Params& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
  os.write("SPLC", 4);
  put<std::uint32_t>(os, kCheckpointVersion);
  for (const auto& [name, t] : params) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put<std::uint64_t>(os, d);
    os.write(reinterpret_cast<const char*>(t.values().data()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("failed writing checkpoint: " + path.string());
}

std::map<std::string, Tensor> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path.string());
  char magic[4];
  std::uint32_t version = 0;
  if (!is.read(magic, 4) || std::memcmp(magic, "SPLC", 4) != 0) throw ParseError("bad checkpoint magic in " + path.string());
  if (!get(is, version) || version != kCheckpointVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(version));
  std::map<std::string, Tensor> out;
  std::uint32_t name_len = 0;
  while (get(is, name_len)) {
    std::string name(name_len, '\0');
    std::uint32_t rank = 0;
    if (!is.read(name.data(), name_len) || !get(is, rank)) throw ParseError("truncated checkpoint record");
    Shape shape(rank);
    for (auto& d : shape) {
      std::uint64_t v = 0;
      if (!get(is, v)) throw ParseError("truncated checkpoint dims for " + name);
      d = static_cast<std::size_t>(v);
    }
    std::vector<double> values(shape_numel(shape));
    if (!is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double))))
      throw ParseError("truncated checkpoint values for " + name);
    out.emplace(name, Tensor(std::move(shape), std::move(values)));
  }
  return out;
}

void load_checkpoint(const std::filesystem::path& path, Params& params) {
  auto stored = read_checkpoint(path);
  for (auto& [name, t] : params) {
    auto it = stored.find(name);
    if (it == stored.end()) throw ParseError("checkpoint " + path.string() + " lacks parameter " + name);
    if (it->second.shape() != t.shape())
      throw DimensionError("checkpoint parameter " + name + " has shape " + shape_str(it->second.shape()) +
                           ", expected " + shape_str(t.shape()));
    auto src = it->second.values();
    std::copy(src.begin(), src.end(), t.data().begin());
  }
}

}  // namespace splice::nc
