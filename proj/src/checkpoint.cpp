#include "vera/checkpoint.hpp"

#include <cmath>

#include "vera/binary_io.hpp"

namespace vera {

namespace {

constexpr std::string_view kMagic = "VERA";

bool stores_d(Method m) { return m == Method::Vera || m == Method::OnlyD; }
bool stores_b(Method m) { return m == Method::Vera || m == Method::OnlyB; }

VeraVariant variant_for(Method m) {
  switch (m) {
    case Method::OnlyD: return VeraVariant::OnlyD;
    case Method::OnlyB: return VeraVariant::OnlyB;
    default: return VeraVariant::Full;
  }
}

void check_config_header(const AdapterConfig& c) {
  if (c.rank < 1 || c.r_max < 1) throw InvalidConfig("checkpoint: rank and r_max must be >= 1");
  if (c.rank > c.r_max) {
    throw InvalidConfig("checkpoint: r=" + std::to_string(c.rank) + " exceeds r_max=" + std::to_string(c.r_max));
  }
}

double read_finite(ByteReader& r, const std::string& layer) {
  const float v = r.f32();
  if (!std::isfinite(v)) throw CorruptionError("layer '" + layer + "': non-finite stored value");
  return v;
}

Vector<double> read_vector(ByteReader& r, std::size_t len, const std::string& layer) {
  Vector<double> v(len);
  for (auto& x : v) x = read_finite(r, layer);
  return v;
}

Matrix<double> read_matrix(ByteReader& r, std::size_t rows, std::size_t cols, const std::string& layer) {
  Matrix<double> m(rows, cols);
  for (auto& x : m.span()) x = read_finite(r, layer);
  return m;
}

LayerRecord record_of(const VeraLayer& layer, const AdapterConfig& config) {
  if (variant_for(config.method) != layer.variant() || !is_vera_family(config.method)) {
    throw InvalidConfig("layer '" + layer.name() + "': variant does not match method " + to_string(config.method));
  }
  const auto& shared = layer.shared();
  if (layer.rank() != config.rank || shared.r_max != config.r_max || shared.master_seed != config.master_seed ||
      !(shared.scheme == config.init_scheme)) {
    throw InvalidConfig("layer '" + layer.name() + "': rank/r_max/seed/scheme disagree with checkpoint config");
  }
  return {layer.name(), layer.out_features(), layer.in_features(), layer.d(), layer.b(), {}, {}};
}

LayerRecord record_of(const LoraLayer& layer, const AdapterConfig& config) {
  if (config.method != Method::Lora) {
    throw InvalidConfig("layer '" + layer.name() + "': LoRA layer in a " + to_string(config.method) + " checkpoint");
  }
  if (layer.rank() != config.rank) throw InvalidConfig("layer '" + layer.name() + "': rank disagrees with config");
  if (layer.alpha() != static_cast<double>(layer.rank())) {
    throw InvalidConfig("layer '" + layer.name() + "': checkpoint format requires lora_alpha == rank");
  }
  return {layer.name(), layer.out_features(), layer.in_features(), {}, {}, layer.A(), layer.B()};
}

}  // namespace

Checkpoint::Layout Checkpoint::layout() const {
  Layout out;
  out.header_bytes = 4 + 4 + 1 + 8 + 4 + 4 + 1 + 4 + 4;
  if (config.init_scheme.kind() == InitKind::UniformRange) out.header_bytes += 8;
  for (const auto& layer : layers) {
    out.layer_framing_bytes += 2 + layer.name.size() + 4 + 4;
    out.payload_bytes += 4 * layer.payload_values();
  }
  return out;
}

std::vector<std::uint8_t> Checkpoint::encode() const {
  check_config_header(config);
  ByteWriter w;
  w.raw(kMagic);
  w.u32(kVersion);
  w.u8(static_cast<std::uint8_t>(config.method));
  w.u64(config.master_seed);
  w.u32(static_cast<std::uint32_t>(config.rank));
  w.u32(static_cast<std::uint32_t>(config.r_max));
  w.u8(static_cast<std::uint8_t>(config.init_scheme.kind()));
  if (config.init_scheme.kind() == InitKind::UniformRange) {
    w.f32(static_cast<float>(config.init_scheme.range_low()));
    w.f32(static_cast<float>(config.init_scheme.range_high()));
  }
  w.f32(static_cast<float>(config.d_init));
  w.u32(static_cast<std::uint32_t>(layers.size()));
  for (const auto& layer : layers) {
    w.name(layer.name);
    w.u32(static_cast<std::uint32_t>(layer.m));
    w.u32(static_cast<std::uint32_t>(layer.n));
    for (const double v : layer.d) w.f32(static_cast<float>(v));
    for (const double v : layer.b) w.f32(static_cast<float>(v));
    for (const double v : layer.A.span()) w.f32(static_cast<float>(v));
    for (const double v : layer.B.span()) w.f32(static_cast<float>(v));
  }
  return w.bytes();
}

Checkpoint Checkpoint::decode(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.remaining() < kMagic.size() || r.raw(kMagic.size()) != kMagic) throw FormatError("not a VERA checkpoint");
  if (const auto version = r.u32(); version != kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  auto& c = ckpt.config;
  const auto method = r.u8();
  if (method > static_cast<std::uint8_t>(Method::HeadOnly)) {
    throw FormatError("unknown method code " + std::to_string(method));
  }
  c.method = static_cast<Method>(method);
  c.master_seed = r.u64();
  c.rank = r.u32();
  c.r_max = r.u32();
  const auto scheme = r.u8();
  switch (scheme) {
    case static_cast<std::uint8_t>(InitKind::KaimingUniform): c.init_scheme = InitScheme::kaiming_uniform(); break;
    case static_cast<std::uint8_t>(InitKind::KaimingNormal): c.init_scheme = InitScheme::kaiming_normal(); break;
    case static_cast<std::uint8_t>(InitKind::UniformRange): {
      const float low = r.f32();
      const float high = r.f32();
      try {
        c.init_scheme = InitScheme::uniform_range(low, high);
      } catch (const InvalidArgument& e) {
        throw FormatError(std::string("bad uniform range: ") + e.what());
      }
      break;
    }
    default: throw FormatError("unknown init scheme code " + std::to_string(scheme));
  }
  c.d_init = r.f32();
  if (!std::isfinite(c.d_init)) throw CorruptionError("non-finite d_init");
  c.lora_alpha = static_cast<double>(c.rank);
  check_config_header(c);

  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    LayerRecord layer;
    layer.name = r.name();
    layer.m = r.u32();
    layer.n = r.u32();
    if (layer.m < 1 || layer.n < 1) throw CorruptionError("layer '" + layer.name + "': zero dimension");
    std::size_t values = 0;
    if (stores_d(c.method)) values += c.rank;
    if (stores_b(c.method)) values += layer.m;
    if (c.method == Method::Lora) values += c.rank * (layer.m + layer.n);
    if (values > r.remaining() / 4) throw CorruptionError("layer '" + layer.name + "': truncated payload");
    if (stores_d(c.method)) layer.d = read_vector(r, c.rank, layer.name);
    if (stores_b(c.method)) layer.b = read_vector(r, layer.m, layer.name);
    if (c.method == Method::Lora) {
      layer.A = read_matrix(r, c.rank, layer.n, layer.name);
      layer.B = read_matrix(r, layer.m, c.rank, layer.name);
    }
    ckpt.layers.push_back(std::move(layer));
  }
  if (r.remaining() != 0) throw CorruptionError("trailing bytes after last layer");
  return ckpt;
}

Checkpoint capture(std::span<const AdaptedLinear> layers, const AdapterConfig& config) {
  Checkpoint ckpt;
  ckpt.config = config.resolved();
  for (const auto& slot : layers) {
    std::visit(
        [&](const auto& layer) {
          using T = std::decay_t<decltype(layer)>;
          if constexpr (std::is_same_v<T, FrozenLinear>) {
            if (ckpt.config.method != Method::HeadOnly) {
              throw InvalidConfig("layer '" + layer.name() + "' is not adapted in a " +
                                  to_string(ckpt.config.method) + " checkpoint");
            }
          } else {
            if (ckpt.config.method == Method::HeadOnly) {
              throw InvalidConfig("layer '" + layer.name() + "' is adapted in a head-only checkpoint");
            }
            ckpt.layers.push_back(record_of(layer, ckpt.config));
          }
        },
        slot);
  }
  return ckpt;
}

std::size_t save(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = ckpt.encode();
  write_file(path, bytes);
  return bytes.size();
}

std::size_t save(std::span<const AdaptedLinear> layers, const AdapterConfig& config,
                 const std::filesystem::path& path) {
  return save(capture(layers, config), path);
}

Checkpoint load(const std::filesystem::path& path) { return Checkpoint::decode(read_file(path)); }

std::vector<AdaptedLinear> instantiate(const Checkpoint& ckpt, const BaseWeightLookup& base) {
  const auto& c = ckpt.config;
  SharedPool pool(c.r_max, c.init_scheme, c.master_seed);
  std::vector<AdaptedLinear> out;
  out.reserve(ckpt.layers.size());
  for (const auto& record : ckpt.layers) {
    Matrix<double> w0 = base(record);
    if (w0.rows() != record.m || w0.cols() != record.n) {
      throw DimensionError("layer '" + record.name + "': base weight is " + std::to_string(w0.rows()) + "x" +
                           std::to_string(w0.cols()) + ", checkpoint says " + std::to_string(record.m) + "x" +
                           std::to_string(record.n));
    }
    if (is_vera_family(c.method)) {
      VeraLayer layer(record.name, std::move(w0), pool.get(record.m, record.n), c.rank, variant_for(c.method),
                      c.d_init);
      if (layer.has_d()) layer.set_d(record.d);
      if (layer.has_b()) layer.set_b(record.b);
      out.emplace_back(std::move(layer));
    } else if (c.method == Method::Lora) {
      out.emplace_back(LoraLayer(record.name, std::move(w0), record.A, record.B, c.lora_alpha));
    } else {
      out.emplace_back(FrozenLinear(record.name, std::move(w0)));
    }
  }
  return out;
}

std::vector<AdaptedLinear> instantiate(const Checkpoint& ckpt, const TensorFile& base) {
  return instantiate(ckpt, [&base](const LayerRecord& record) {
    const NamedTensor* t = base.find(record.name);
    if (!t) throw InvalidArgument("base weights have no tensor named '" + record.name + "'");
    return t->value.cast<double>();
  });
}

std::size_t export_merged(const Checkpoint& ckpt, const std::filesystem::path& base_file,
                          const std::filesystem::path& out_file) {
  TensorFile file = TensorFile::load(base_file);
  const auto layers = instantiate(ckpt, file);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    file.find(ckpt.layers[i].name)->value = std::visit([](const auto& layer) { return layer.merge(); }, layers[i]).cast<float>();
  }
  file.save(out_file);
  return file.tensors.size();
}

nlohmann::json inspect(const Checkpoint& ckpt) {
  const auto& c = ckpt.config;
  nlohmann::json j;
  j["format_version"] = Checkpoint::kVersion;
  j["method"] = to_string(c.method);
  j["master_seed"] = c.master_seed;
  j["rank"] = c.rank;
  j["r_max"] = c.r_max;
  j["init_scheme"] = {{"kind", to_string(c.init_scheme.kind())}};
  if (c.init_scheme.kind() == InitKind::UniformRange) {
    j["init_scheme"]["range_low"] = c.init_scheme.range_low();
    j["init_scheme"]["range_high"] = c.init_scheme.range_high();
  }
  j["d_init"] = c.d_init;
  j["layer_count"] = ckpt.layers.size();
  j["layers"] = nlohmann::json::array();
  for (const auto& layer : ckpt.layers) {
    nlohmann::json l{{"name", layer.name}, {"m", layer.m}, {"n", layer.n},
                     {"trainable_params", layer.payload_values()}};
    if (layer.d.size()) l["d_norm"] = norm2(layer.d);
    if (layer.b.size()) l["b_norm"] = norm2(layer.b);
    if (layer.A.size()) l["A_norm"] = norm2<double>(layer.A.span());
    if (layer.B.size()) l["B_norm"] = norm2<double>(layer.B.span());
    j["layers"].push_back(std::move(l));
  }
  const auto layout = ckpt.layout();
  j["bytes"] = {{"header", layout.header_bytes},
                {"layer_framing", layout.layer_framing_bytes},
                {"payload", layout.payload_bytes},
                {"total", layout.total_bytes()}};
  return j;
}

}  // namespace vera
