#include "aitvit/checkpoint.hpp"

#include <cmath>
#include <cstring>
#include <map>

#include "aitvit/byte_io.hpp"
#include "aitvit/errors.hpp"

namespace aitvit::checkpoint {

namespace {

constexpr char kMagic[4] = {'A', 'I', 'V', 'T'};
constexpr std::size_t kMaxRank = 4;

void write_config(io::ByteWriter& w, const AiTViTConfig& c) {
  for (std::size_t v : {c.n_c, c.n_layers, c.n_heads, c.kernel, c.stride, c.head_hidden,
                        c.det_classes, c.n_classes, c.in_rails, c.in_width})
    w.u32(static_cast<std::uint32_t>(v));
  w.u8(c.positional ? 1 : 0);
  w.u64(c.seed);
}

AiTViTConfig read_config(io::ByteReader& r) {
  AiTViTConfig c;
  for (std::size_t* f : {&c.n_c, &c.n_layers, &c.n_heads, &c.kernel, &c.stride, &c.head_hidden,
                         &c.det_classes, &c.n_classes, &c.in_rails, &c.in_width})
    *f = r.u32();
  const auto at = r.pos();
  const auto pos = r.u8();
  if (pos > 1) throw FormatError("positional flag must be 0 or 1", at);
  c.positional = pos == 1;
  c.seed = r.u64();
  return c;
}

}  // namespace

std::vector<std::uint8_t> encode(const AiTViT& model, const Provenance& p) {
  io::ByteWriter w;
  w.raw({reinterpret_cast<const std::uint8_t*>(kMagic), 4});
  w.u32(kVersion);
  write_config(w, model.config());
  w.u8(static_cast<std::uint8_t>(p.stage));
  w.u64(p.seed);
  w.u32(p.epochs);
  w.f64(p.beta);
  w.f64(p.train_pnr);

  std::uint32_t count = 0;
  model.params().for_each([&](const std::string&, const Tensor&) { ++count; });
  w.u32(count);
  model.params().for_each([&](const std::string& name, const Tensor& t) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (double v : t.data()) w.f32(static_cast<float>(v));
  });
  w.u32(io::crc32(w.bytes()));
  return std::move(w.bytes());
}

Checkpoint decode(std::span<const std::uint8_t> bytes, const std::optional<AiTViTConfig>& expected) {
  io::ByteReader head(bytes);
  if (std::memcmp(head.raw(4).data(), kMagic, 4) != 0) throw FormatError("bad checkpoint magic", 0);
  const auto version = head.u32();
  if (version != kVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
  if (bytes.size() < head.pos() + 4) throw FormatError("checkpoint truncated", bytes.size());

  const auto body = bytes.first(bytes.size() - 4);
  io::ByteReader tail(bytes.last(4));
  if (tail.u32() != io::crc32(body))
    throw IntegrityError("checkpoint checksum mismatch (corrupted or truncated file)");

  io::ByteReader r(body);
  r.raw(8);
  Checkpoint ck;
  ck.config = read_config(r);
  try {
    ck.config.validate();
  } catch (const ConfigError& e) {
    throw IntegrityError(std::string("checkpoint holds an invalid config: ") + e.what());
  }
  if (expected) {
    // The init seed is provenance, not architecture.
    auto want = *expected;
    want.seed = ck.config.seed;
    if (!(want == ck.config))
      throw ConfigError("checkpoint config does not match the requested model config");
  }

  const auto stage_at = r.pos();
  const auto stage = r.u8();
  if (stage > 2) throw FormatError("unknown training stage " + std::to_string(stage), stage_at);
  ck.provenance.stage = static_cast<Stage>(stage);
  ck.provenance.seed = r.u64();
  ck.provenance.epochs = r.u32();
  ck.provenance.beta = r.f64();
  ck.provenance.train_pnr = r.f64();

  std::map<std::string, std::pair<Shape, std::vector<double>>> table;
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto at = r.pos();
    std::string name = r.str(256);
    const auto rank = r.u32();
    if (rank == 0 || rank > kMaxRank) throw FormatError("tensor '" + name + "' has bad rank", at);
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = r.u32();
      n *= d;
    }
    if (n == 0 || n * 4 > r.remaining()) throw FormatError("tensor '" + name + "' overruns the file", at);
    std::vector<double> v(n);
    for (double& x : v) {
      x = r.f32();
      if (!std::isfinite(x)) throw IntegrityError("tensor '" + name + "' holds a non-finite value");
    }
    if (!table.emplace(std::move(name), std::make_pair(std::move(shape), std::move(v))).second)
      throw IntegrityError("duplicate tensor in checkpoint");
  }
  if (r.remaining() != 0) throw IntegrityError("trailing bytes after the tensor table");

  // Shapes come from a freshly initialized model of the stored config.
  ck.params = AiTViT::initialize(ck.config).params();
  std::size_t used = 0;
  ck.params.for_each([&](const std::string& name, Tensor& t) {
    auto it = table.find(name);
    if (it == table.end()) throw IntegrityError("checkpoint lacks tensor '" + name + "'");
    if (it->second.first != t.shape())
      throw IntegrityError("tensor '" + name + "' has shape " + shape_str(it->second.first) +
                           ", config implies " + shape_str(t.shape()));
    t = Tensor::constant(t.shape(), std::move(it->second.second));
    ++used;
  });
  if (used != table.size()) throw IntegrityError("checkpoint holds tensors the config does not define");
  return ck;
}

void save(const std::filesystem::path& path, const AiTViT& model, const Provenance& provenance) {
  io::write_file(path, encode(model, provenance));
}

Checkpoint load(const std::filesystem::path& path, const std::optional<AiTViTConfig>& expected) {
  return decode(io::read_file(path), expected);
}

}  // namespace aitvit::checkpoint
