#include "molgen/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace molgen {

namespace {

constexpr char kMagic[4] = {'M', 'G', 'C', 'K'};
constexpr uint8_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace

void Checkpoint::put(const std::string& name, Tensor t) {
  for (auto& [n, existing] : tensors) {
    if (n == name) {
      existing = std::move(t);
      return;
    }
  }
  tensors.emplace_back(name, std::move(t));
}

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path);
  os.write(kMagic, 4);
  write_pod(os, kVersion);
  write_pod(os, static_cast<uint64_t>(ck.meta_json.size()));
  os.write(ck.meta_json.data(),
           static_cast<std::streamsize>(ck.meta_json.size()));
  write_pod(os, static_cast<uint64_t>(ck.tensors.size()));
  for (const auto& [name, t] : ck.tensors) {
    write_pod(os, static_cast<uint64_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(os, static_cast<uint32_t>(t.shape.size()));
    for (int64_t d : t.shape) write_pod(os, d);
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const uint8_t version = read_pod<uint8_t>(is);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version in " + path);
  Checkpoint ck;
  const uint64_t meta_len = read_pod<uint64_t>(is);
  ck.meta_json.resize(meta_len);
  is.read(ck.meta_json.data(), static_cast<std::streamsize>(meta_len));
  const uint64_t count = read_pod<uint64_t>(is);
  for (uint64_t i = 0; i < count; ++i) {
    const uint64_t name_len = read_pod<uint64_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), static_cast<std::streamsize>(name_len));
    const uint32_t rank = read_pod<uint32_t>(is);
    std::vector<int64_t> shape(rank);
    for (uint32_t d = 0; d < rank; ++d) shape[d] = read_pod<int64_t>(is);
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    ck.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ck;
}

void store_params(Checkpoint& ck, const std::vector<ParamRef>& params) {
  for (const ParamRef& p : params) ck.put(p.name, *p.value);
}

void load_params(const Checkpoint& ck, const std::vector<ParamRef>& params) {
  for (const ParamRef& p : params) {
    const Tensor* t = ck.find(p.name);
    if (!t) throw std::runtime_error("checkpoint: missing tensor " + p.name);
    if (t->shape != p.value->shape)
      throw std::runtime_error("checkpoint: shape mismatch for " + p.name);
    *p.value = *t;
  }
}

}  // namespace molgen
