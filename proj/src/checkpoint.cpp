#include "iftx/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace iftx {

namespace {

constexpr char kMagic[8] = {'I', 'F', 'T', 'X', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    out.insert(out.end(), c, c + n);
  }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void f64(double v) { bytes(&v, 8); }
  std::vector<unsigned char> out;
};

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& b) : buf(b) {}
  void bytes(void* p, std::size_t n) {
    if (pos + n > buf.size()) throw ParseError("checkpoint truncated at byte " + std::to_string(pos));
    std::memcpy(p, buf.data() + pos, n);
    pos += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, 8);
    return v;
  }
  const std::vector<unsigned char>& buf;
  std::size_t pos = 0;
};

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void Checkpoint::put_store(const std::string& ns, const ParamStore& store) {
  for (ParamId i = 0; i < store.size(); ++i) tensors.emplace_back(ns + "/" + store.name(i), store.value(i));
}

bool Checkpoint::has_store(const std::string& ns) const {
  const auto prefix = ns + "/";
  for (const auto& [n, t] : tensors)
    if (n.rfind(prefix, 0) == 0) return true;
  return false;
}

ParamStore Checkpoint::get_store(const std::string& ns) const {
  const auto prefix = ns + "/";
  ParamStore store;
  for (const auto& [n, t] : tensors)
    if (n.rfind(prefix, 0) == 0) store.add(n.substr(prefix.size()), t);
  if (store.size() == 0) throw NotFoundError("checkpoint has no parameters under " + ns);
  return store;
}

std::vector<unsigned char> serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kVersion);
  const auto meta = ckpt.metadata.dump();
  w.u64(meta.size());
  w.bytes(meta.data(), meta.size());
  w.u64(ckpt.tensors.size());
  for (const auto& [name, t] : ckpt.tensors) {
    if (shape_size(t.shape) != t.size()) throw DimensionError("checkpoint: tensor " + name + " has inconsistent shape");
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape) w.u64(d);
    for (double v : t.values) w.f64(v);
  }
  return std::move(w.out);
}

Checkpoint deserialize_checkpoint(const std::vector<unsigned char>& bytes) {
  Reader r(bytes);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) throw ParseError("not a checkpoint file (bad magic)");
  auto version = r.u32();
  if (version != kVersion) throw ParseError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  std::string meta(r.u64(), '\0');
  r.bytes(meta.data(), meta.size());
  try {
    ckpt.metadata = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint metadata: ") + e.what());
  }
  const auto count = r.u64();
  for (std::uint64_t k = 0; k < count; ++k) {
    std::string name(r.u32(), '\0');
    r.bytes(name.data(), name.size());
    const auto rank = r.u32();
    if (rank > 8) throw ParseError("checkpoint: tensor " + name + " has implausible rank");
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = r.u64();
    const auto n = shape_size(shape);
    if (n > (bytes.size() - r.pos) / 8) throw ParseError("checkpoint truncated in tensor " + name);
    std::vector<double> values(n);
    r.bytes(values.data(), n * 8);
    ckpt.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  if (r.pos != bytes.size()) throw ParseError("checkpoint has trailing bytes");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  auto bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

namespace {
std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}
}  // namespace

Checkpoint load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(read_file(path)); }

std::string checkpoint_hash(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  return hex64(fnv1a(bytes.data(), bytes.size()));
}

}  // namespace iftx
