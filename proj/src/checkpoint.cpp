#include "tokflow/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "tokflow/errors.hpp"

namespace tokflow {

namespace {

void put_u32(std::ofstream& f, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  f.write(reinterpret_cast<char*>(b), 4);
}

uint32_t get_u32(std::ifstream& f, const std::string& path) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  if (f.gcount() != 4) throw FormatError(path + ": truncated checkpoint");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void write_fdck(const std::string& path, const NamedTensors& tensors) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write("FDCK", 4);
  put_u32(f, 1);
  put_u32(f, static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_u32(f, static_cast<uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(f, static_cast<uint32_t>(t->shape.size()));
    for (size_t d : t->shape) put_u32(f, static_cast<uint32_t>(d));
    for (double x : t->val) {
      float v = static_cast<float>(x);
      uint32_t bits;
      std::memcpy(&bits, &v, 4);
      put_u32(f, bits);
    }
  }
  if (!f) throw IoError("write failed: " + path);
}

NamedTensors read_fdck(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  char magic[4];
  f.read(magic, 4);
  if (f.gcount() != 4 || std::memcmp(magic, "FDCK", 4) != 0)
    throw FormatError(path + ": bad magic at byte offset 0");
  uint32_t version = get_u32(f, path);
  if (version != 1)
    throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
  uint32_t count = get_u32(f, path);
  NamedTensors out;
  out.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t name_len = get_u32(f, path);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    if (static_cast<uint32_t>(f.gcount()) != name_len)
      throw FormatError(path + ": truncated tensor name");
    uint32_t rank = get_u32(f, path);
    std::vector<size_t> shape(rank);
    size_t n = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      shape[d] = get_u32(f, path);
      n *= shape[d];
    }
    std::vector<double> data(n);
    for (size_t j = 0; j < n; ++j) {
      uint32_t bits = get_u32(f, path);
      float v;
      std::memcpy(&v, &bits, 4);
      data[j] = v;
    }
    out.emplace_back(std::move(name), constant(std::move(shape), std::move(data)));
  }
  return out;
}

void load_into(const NamedTensors& loaded, const NamedTensors& dest) {
  std::map<std::string, Tensor> by_name;
  for (const auto& [name, t] : loaded) by_name[name] = t;
  for (const auto& [name, t] : dest) {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw FormatError("checkpoint missing tensor: " + name);
    if (it->second->shape != t->shape)
      throw DimError("checkpoint shape mismatch for tensor: " + name);
    t->val = it->second->val;
  }
}

}  // namespace tokflow
