#include "capsid/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include "capsid/errors.hpp"

namespace capsid {

namespace {

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian platforms are not supported");

template <typename T>
void write_le(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(buf, buf + sizeof(T));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!is) throw ParseError("checkpoint truncated");
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

constexpr std::uint32_t kVersion = 1;
constexpr char kMagic[4] = {'C', 'A', 'P', 'W'};

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<TensorPtr>& tensors) {
  std::unordered_set<std::string> seen;
  for (const auto& t : tensors) {
    if (t->name.empty())
      throw ContractError("checkpoint tensor without a name");
    if (!seen.insert(t->name).second)
      throw ContractError("duplicate checkpoint tensor name '" + t->name +
                          "'");
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os.write(kMagic, 4);
  write_le<std::uint32_t>(os, kVersion);
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(t->name.size()));
    os.write(t->name.data(), static_cast<std::streamsize>(t->name.size()));
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(t->shape.size()));
    for (std::size_t d : t->shape)
      write_le<std::uint64_t>(os, static_cast<std::uint64_t>(d));
    for (double v : t->value) write_le<double>(os, v);
  }
  if (!os) throw IoError("write to '" + path + "' failed");
}

std::vector<TensorPtr> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "' for reading");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw ParseError("'" + path + "' is not a checkpoint (bad magic)");
  const auto version = read_le<std::uint32_t>(is);
  if (version != kVersion)
    throw ParseError("checkpoint version " + std::to_string(version) +
                     " is not supported");
  const auto n = read_le<std::uint32_t>(is);
  std::vector<TensorPtr> out;
  out.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto name_len = read_le<std::uint32_t>(is);
    if (name_len == 0 || name_len > 4096)
      throw ParseError("checkpoint tensor name length " +
                       std::to_string(name_len) + " out of range");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw ParseError("checkpoint truncated");
    const auto rank = read_le<std::uint32_t>(is);
    if (rank > 8)
      throw ParseError("checkpoint tensor rank " + std::to_string(rank) +
                       " out of range");
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) {
      const auto dim = read_le<std::uint64_t>(is);
      if (dim == 0) throw ParseError("checkpoint tensor with dimension 0");
      d = static_cast<std::size_t>(dim);
    }
    auto t = make_tensor(shape, false, name);
    for (auto& v : t->value) v = read_le<double>(is);
    out.push_back(std::move(t));
  }
  return out;
}

void restore_into(const std::vector<TensorPtr>& loaded,
                  const std::vector<TensorPtr>& targets) {
  std::unordered_map<std::string, const TensorPtr*> by_name;
  for (const auto& t : loaded) by_name[t->name] = &t;
  for (const auto& target : targets) {
    auto it = by_name.find(target->name);
    if (it == by_name.end())
      throw ParseError("checkpoint is missing tensor '" + target->name + "'");
    const TensorPtr& src = *it->second;
    if (src->shape != target->shape)
      throw ParseError("checkpoint tensor '" + target->name + "' has shape " +
                       shape_str(src->shape) + ", expected " +
                       shape_str(target->shape));
    target->value = src->value;
  }
}

}  // namespace capsid
