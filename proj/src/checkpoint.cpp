#include "aadml/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "aadml/error.hpp"

namespace aadml {

namespace {

void put_u16(std::ostream& out, std::uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xFF), static_cast<char>(v >> 8)};
  out.write(b, 2);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
               static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  out.write(b, 4);
}

void put_f64(std::ostream& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  put_u32(out, static_cast<std::uint32_t>(bits & 0xFFFFFFFFULL));
  put_u32(out, static_cast<std::uint32_t>(bits >> 32));
}

std::uint16_t get_u16(std::istream& in, const std::string& path) {
  unsigned char b[2];
  if (!in.read(reinterpret_cast<char*>(b), 2)) throw IoError(path + ": truncated record");
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoError(path + ": truncated record");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

double get_f64(std::istream& in, const std::string& path) {
  std::uint64_t lo = get_u32(in, path);
  std::uint64_t hi = get_u32(in, path);
  return std::bit_cast<double>(lo | (hi << 32));
}

}  // namespace

void write_checkpoint(const std::string& path, std::uint32_t version,
                      const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path + ": cannot open for writing");
  out.write("AADM", 4);
  put_u32(out, version);
  for (const NamedTensor& t : tensors) {
    if (t.name.size() > 0xFFFF) throw IoError(path + ": tensor name too long: " + t.name);
    put_u16(out, static_cast<std::uint16_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    out.put(static_cast<char>(t.value.rank()));
    for (std::size_t e : t.value.shape) put_u32(out, static_cast<std::uint32_t>(e));
    for (double v : t.value.data) put_f64(out, v);
  }
  if (!out) throw IoError(path + ": write failed");
}

const Tensor* CheckpointFile::find(const std::string& name) const {
  for (const NamedTensor& t : tensors) {
    if (t.name == name) return &t.value;
  }
  return nullptr;
}

const Tensor& CheckpointFile::require(const std::string& name) const {
  const Tensor* t = find(name);
  if (!t) throw IoError("checkpoint: missing tensor '" + name + "'");
  return *t;
}

CheckpointFile read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open for reading");
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "AADM", 4) != 0) {
    throw IoError(path + ": bad magic, expected \"AADM\"");
  }
  CheckpointFile file;
  file.version = get_u32(in, path);
  if (file.version != kCheckpointVersion) {
    throw IoError(path + ": unsupported version " + std::to_string(file.version));
  }
  while (true) {
    int peek = in.peek();
    if (peek == EOF) break;
    NamedTensor record;
    const std::uint16_t name_len = get_u16(in, path);
    record.name.resize(name_len);
    if (!in.read(record.name.data(), name_len)) throw IoError(path + ": truncated name");
    int rank = in.get();
    if (rank == EOF) throw IoError(path + ": truncated rank");
    Shape shape(static_cast<std::size_t>(rank));
    for (std::size_t i = 0; i < shape.size(); ++i) shape[i] = get_u32(in, path);
    Tensor value(shape);
    for (double& v : value.data) v = get_f64(in, path);
    record.value = std::move(value);
    file.tensors.push_back(std::move(record));
  }
  return file;
}

}  // namespace aadml
