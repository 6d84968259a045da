#include "capmatch/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace capmatch {

namespace {

constexpr char kMagic[8] = {'C', 'M', 'C', 'K', 'P', 'T', '0', '\n'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.write(buf, 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.write(buf, 8);
}

[[noreturn]] void corrupt(const std::istream& in, const std::string& what) {
  throw std::runtime_error("checkpoint: " + what + " at offset " +
                           std::to_string(static_cast<long long>(
                               const_cast<std::istream&>(in).tellg())));
}

std::uint32_t read_u32(std::istream& in) {
  char buf[4];
  if (!in.read(buf, 4)) corrupt(in, "truncated u32");
  std::uint32_t v;
  std::memcpy(&v, buf, 4);
  return v;
}

std::uint64_t read_u64(std::istream& in) {
  char buf[8];
  if (!in.read(buf, 8)) corrupt(in, "truncated u64");
  std::uint64_t v;
  std::memcpy(&v, buf, 8);
  return v;
}

void write_config(std::ostream& out, const ModelConfig& c) {
  write_u64(out, c.feature_dim);
  write_u64(out, c.latent_dim);
  write_u64(out, c.image_hidden);
  write_u64(out, c.embed_dim);
  write_u64(out, c.vocab_size);
  write_u64(out, c.concept_dim);
}

ModelConfig read_config(std::istream& in) {
  ModelConfig c;
  c.feature_dim = read_u64(in);
  c.latent_dim = read_u64(in);
  c.image_hidden = read_u64(in);
  c.embed_dim = read_u64(in);
  c.vocab_size = read_u64(in);
  c.concept_dim = read_u64(in);
  return c;
}

}  // namespace

void save_checkpoint(const ModelBundle& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw std::runtime_error("checkpoint: cannot open " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, kVersion);
  write_config(out, m.config);
  auto params = named_parameters(const_cast<ModelBundle&>(m));
  write_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const NamedParam& p : params) {
    write_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_u32(out, static_cast<std::uint32_t>(p.tensor->shape.size()));
    for (std::size_t d : p.tensor->shape) write_u64(out, d);
    out.write(reinterpret_cast<const char*>(p.tensor->data.data()),
              static_cast<std::streamsize>(p.tensor->data.size() *
                                           sizeof(double)));
  }
  if (!out)
    throw std::runtime_error("checkpoint: write failed for " + path.string());
}

ModelBundle load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("checkpoint: cannot open " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof(magic)) ||
      std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    corrupt(in, "bad magic");
  const std::uint32_t version = read_u32(in);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: version " + std::to_string(version) +
                             " not supported (expected " +
                             std::to_string(kVersion) + ")");
  const ModelConfig cfg = read_config(in);

  // build a skeleton with the right shapes, then overwrite every tensor
  Rng scratch(0);
  ModelBundle m = ModelBundle::init(cfg, scratch);
  auto params = named_parameters(m);
  const std::uint32_t count = read_u32(in);
  if (count != params.size()) corrupt(in, "parameter count mismatch");
  for (NamedParam& p : params) {
    const std::uint32_t name_len = read_u32(in);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) corrupt(in, "truncated name");
    if (name != p.name)
      corrupt(in, "parameter '" + name + "' where '" + p.name + "' expected");
    const std::uint32_t ndim = read_u32(in);
    std::vector<std::size_t> shape(ndim);
    for (std::uint32_t i = 0; i < ndim; ++i)
      shape[i] = static_cast<std::size_t>(read_u64(in));
    if (shape != p.tensor->shape)
      corrupt(in, "shape mismatch for '" + name + "'");
    if (!in.read(reinterpret_cast<char*>(p.tensor->data.data()),
                 static_cast<std::streamsize>(p.tensor->data.size() *
                                              sizeof(double))))
      corrupt(in, "truncated data for '" + name + "'");
  }
  return m;
}

}  // namespace capmatch
