// SPDX-License-Identifier: Apache-2.0
#include "emod/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <unordered_map>

namespace emod {

namespace {
constexpr char kMagic[8] = {'E', 'M', 'O', 'D', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

template <typename S>
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor<S>>>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("checkpoint: cannot write " + path);
  auto put = [&](const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  };
  put(kMagic, sizeof(kMagic));
  const std::uint32_t version = kVersion;
  put(&version, 4);
  const auto count = static_cast<std::uint32_t>(params.size());
  put(&count, 4);
  for (const auto& [name, tensor] : params) {
    const auto name_len = static_cast<std::uint16_t>(name.size());
    put(&name_len, 2);
    put(name.data(), name.size());
    const auto rank = static_cast<std::uint8_t>(tensor.shape().size());
    put(&rank, 1);
    for (Index e : tensor.shape()) {
      const auto extent = static_cast<std::uint32_t>(e);
      put(&extent, 4);
    }
    for (Index i = 0; i < tensor.size(); ++i) {
      const float v = static_cast<float>(tensor.values()[i]);
      put(&v, 4);
    }
  }
  out.close();
  if (!out) throw DataError("checkpoint: write failed for " + path);
}

std::vector<CheckpointEntry> read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  auto need = [&](std::size_t n, const char* what) {
    if (pos + n > bytes.size())
      throw DataError("checkpoint " + path + ": truncated while reading " + what);
  };
  auto get = [&](void* p, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(p, bytes.data() + pos, n);
    pos += n;
  };
  char magic[8];
  get(magic, 8, "magic");
  if (std::memcmp(magic, kMagic, 8) != 0)
    throw DataError("checkpoint " + path + ": bad magic");
  std::uint32_t version = 0, count = 0;
  get(&version, 4, "version");
  if (version != kVersion)
    throw DataError("checkpoint " + path + ": unsupported version " + std::to_string(version));
  get(&count, 4, "count");
  std::vector<CheckpointEntry> entries;
  entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    std::uint16_t name_len = 0;
    get(&name_len, 2, "name length");
    need(name_len, "name");
    e.name.assign(reinterpret_cast<const char*>(bytes.data() + pos), name_len);
    pos += name_len;
    std::uint8_t rank = 0;
    get(&rank, 1, "rank");
    std::size_t numel = 1;
    for (int r = 0; r < rank; ++r) {
      std::uint32_t extent = 0;
      get(&extent, 4, "extent");
      if (extent == 0) throw DataError("checkpoint " + path + ": zero extent in '" + e.name + "'");
      e.shape.push_back(static_cast<Index>(extent));
      numel *= extent;
    }
    if (numel > (1u << 28))
      throw DataError("checkpoint " + path + ": implausible parameter size in '" + e.name + "'");
    e.data.resize(numel);
    get(e.data.data(), numel * 4, "parameter data");
    entries.push_back(std::move(e));
  }
  if (pos != bytes.size())
    throw DataError("checkpoint " + path + ": trailing bytes after declared parameters");
  return entries;
}

template <typename S>
void load_checkpoint(const std::string& path,
                     std::vector<std::pair<std::string, Tensor<S>>>& params) {
  auto entries = read_checkpoint(path);
  std::unordered_map<std::string, const CheckpointEntry*> by_name;
  for (const auto& e : entries) {
    if (!by_name.emplace(e.name, &e).second)
      throw DataError("checkpoint " + path + ": duplicate parameter '" + e.name + "'");
  }
  for (auto& [name, tensor] : params) {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw DataError("checkpoint mismatch: parameter '" + name + "' missing from " + path);
    const auto& e = *it->second;
    if (e.shape != tensor.shape())
      throw DataError("checkpoint mismatch: parameter '" + name + "' has shape " +
                      shape_str(e.shape) + ", expected " + shape_str(tensor.shape()));
    for (Index i = 0; i < tensor.size(); ++i)
      tensor.values_mut()[i] = static_cast<S>(e.data[static_cast<std::size_t>(i)]);
    by_name.erase(it);
  }
  if (!by_name.empty())
    throw DataError("checkpoint mismatch: " + path + " contains unknown parameter '" +
                    by_name.begin()->first + "'");
}

template void save_checkpoint<float>(const std::string&,
                                     const std::vector<std::pair<std::string, Tensor<float>>>&);
template void save_checkpoint<double>(const std::string&,
                                      const std::vector<std::pair<std::string, Tensor<double>>>&);
template void load_checkpoint<float>(const std::string&,
                                     std::vector<std::pair<std::string, Tensor<float>>>&);
template void load_checkpoint<double>(const std::string&,
                                      std::vector<std::pair<std::string, Tensor<double>>>&);

}  // namespace emod
