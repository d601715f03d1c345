#include "fsr/params.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fsr/io.hpp"

namespace fsr {

namespace {

constexpr char kMagic[8] = {'F', 'S', 'R', 'C', 'K', 'P', 'T', '1'};

}  // namespace

void Checkpoint::put(const std::string& name, Tensor<float> value) {
  if (auto it = index_.find(name); it != index_.end()) {
    entries_[it->second].second = std::move(value);
    return;
  }
  index_.emplace(name, entries_.size());
  entries_.emplace_back(name, std::move(value));
}

const Tensor<float>* Checkpoint::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &entries_[it->second].second;
}

const Tensor<float>& Checkpoint::at(const std::string& name) const {
  if (const auto* t = find(name)) return *t;
  throw Error("checkpoint has no entry '" + name + "'");
}

std::string Checkpoint::serialize() const {
  ByteWriter w;
  w.bytes(kMagic, sizeof kMagic);
  for (const auto& [name, value] : entries_) {
    w.u32(std::uint32_t(name.size()));
    w.bytes(name.data(), name.size());
    w.u32(std::uint32_t(value.rank()));
    for (auto e : value.shape()) w.u32(std::uint32_t(e));
    w.f32s(value.data());
  }
  return w.take();
}

Checkpoint Checkpoint::deserialize(const std::string& bytes, const std::string& origin) {
  ByteReader r(bytes, origin);
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw ParseError(origin + ": not an FSRCKPT1 checkpoint");
  Checkpoint ck;
  while (!r.done()) {
    const std::uint32_t len = r.u32();
    std::string name(len, '\0');
    r.bytes(name.data(), len);
    const std::uint32_t rank = r.u32();
    if (rank > 8) r.fail("implausible rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& e : shape) e = r.u32();
    Tensor<float> value(shape);
    r.f32s(value.data());
    ck.put(name, std::move(value));
  }
  return ck;
}

void Checkpoint::write(const std::filesystem::path& path) const { write_file(path, serialize()); }

Checkpoint Checkpoint::read(const std::filesystem::path& path) { return deserialize(read_file(path), path.string()); }

}  // namespace fsr
