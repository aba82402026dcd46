#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "mea/codec.hpp"
#include "mea/errors.hpp"
#include "mea/serialization.hpp"

namespace mea {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'M', 'E', 'A', 'C', 'K', 'P', 'T', '\0'};
constexpr std::size_t kDigestSize = 32;

void sha256_raw(const unsigned char* data, std::size_t n, unsigned char* out) {
  unsigned int len = 0;
  if (EVP_Digest(data, n, out, &len, EVP_sha256(), nullptr) != 1 || len != kDigestSize) {
    throw Error("sha256 failed");
  }
}

class Writer {
 public:
  template <typename T>
  void put(const T& v) {
    const auto* p = reinterpret_cast<const unsigned char*>(&v);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    bytes.insert(bytes.end(), p, p + n);
  }
  std::vector<unsigned char> bytes;
};

class Reader {
 public:
  Reader(const std::vector<unsigned char>& b, std::size_t end) : bytes_(b), end_(end) {}
  template <typename T>
  T get() {
    T v;
    take(&v, sizeof(T));
    return v;
  }
  void take(void* out, std::size_t n) {
    if (pos_ + n > end_) throw IntegrityError("checkpoint truncated");
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::vector<unsigned char>& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const CodecModel& model, const std::string& path, const CheckpointMeta& meta) {
  nlohmann::json header;
  header["model_id"] = model.id();
  header["codec"] = to_json(model.config());
  header["config_snapshot"] = meta.config_snapshot;
  header["rng_state_digest"] = meta.rng_state_digest;
  header["training_step"] = meta.training_step;
  const std::string header_text = header.dump();

  Writer w;
  w.put_bytes(kMagic, sizeof(kMagic));
  w.put(static_cast<std::uint32_t>(kCheckpointFormatVersion));
  w.put(static_cast<std::uint64_t>(header_text.size()));
  w.put_bytes(header_text.data(), header_text.size());
  const auto& items = model.parameters().items();
  w.put(static_cast<std::uint32_t>(items.size()));
  for (const auto& p : items) {
    w.put(static_cast<std::uint32_t>(p.name.size()));
    w.put_bytes(p.name.data(), p.name.size());
    const Shape s = p.var.shape();
    for (std::int32_t d : {s.n, s.c, s.h, s.w}) w.put(d);
    w.put_bytes(p.var.value().data(), p.var.value().size() * sizeof(double));
  }
  unsigned char digest[kDigestSize];
  sha256_raw(w.bytes.data(), w.bytes.size(), digest);
  w.put_bytes(digest, kDigestSize);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write checkpoint '" + path + "'");
  out.write(reinterpret_cast<const char*>(w.bytes.data()), static_cast<std::streamsize>(w.bytes.size()));
  if (!out) throw InputError("short write to '" + path + "'");
}

CodecModel load_checkpoint(const std::string& path, CheckpointMeta* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (bytes.size() < sizeof(kMagic) + sizeof(std::uint32_t)) throw IntegrityError("checkpoint truncated");
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) throw IntegrityError("bad checkpoint magic");
  std::uint32_t version = 0;
  std::memcpy(&version, bytes.data() + sizeof(kMagic), sizeof(version));
  if (version != static_cast<std::uint32_t>(kCheckpointFormatVersion)) {
    throw MigrationError(static_cast<int>(version), kCheckpointFormatVersion);
  }
  if (bytes.size() < sizeof(kMagic) + sizeof(std::uint32_t) + kDigestSize) throw IntegrityError("checkpoint truncated");
  const std::size_t body = bytes.size() - kDigestSize;
  unsigned char digest[kDigestSize];
  sha256_raw(bytes.data(), body, digest);
  if (std::memcmp(digest, bytes.data() + body, kDigestSize) != 0) {
    throw IntegrityError("digest mismatch in '" + path + "' (corrupt or truncated)");
  }

  Reader r(bytes, body);
  char magic[sizeof(kMagic)];
  r.take(magic, sizeof(magic));
  r.get<std::uint32_t>();
  const auto header_len = r.get<std::uint64_t>();
  if (header_len > body) throw IntegrityError("header length out of range");
  std::string header_text(header_len, '\0');
  r.take(header_text.data(), header_len);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_text);
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("unreadable header: ") + e.what());
  }

  CodecConfig config = codec_config_from_json(header.at("codec"));
  nn::ParameterSet ps;
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>();
    std::string name(name_len, '\0');
    r.take(name.data(), name_len);
    Shape s;
    s.n = r.get<std::int32_t>();
    s.c = r.get<std::int32_t>();
    s.h = r.get<std::int32_t>();
    s.w = r.get<std::int32_t>();
    if (s.n <= 0 || s.c <= 0 || s.h <= 0 || s.w <= 0) throw IntegrityError("bad tensor extents for " + name);
    Tensor t(s);
    r.take(t.data(), t.size() * sizeof(double));
    ps.add(std::move(name), std::move(t));
  }
  if (r.pos() != body) throw IntegrityError("trailing bytes before digest");

  // The stored layout must match what the config builds.
  CodecModel reference = init_model(config, 0);
  const auto& want = reference.parameters().items();
  const auto& got = ps.items();
  if (want.size() != got.size()) throw IntegrityError("parameter count does not match codec config");
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (want[i].name != got[i].name || !(want[i].var.shape() == got[i].var.shape())) {
      throw IntegrityError("parameter layout mismatch at '" + got[i].name + "'");
    }
  }

  if (meta) {
    meta->config_snapshot = header.value("config_snapshot", std::string("{}"));
    meta->rng_state_digest = header.value("rng_state_digest", std::string());
    meta->training_step = header.value("training_step", 0L);
  }
  return CodecModel(header.value("model_id", std::string("codec")), config, std::move(ps));
}

nlohmann::json to_json(const CodecConfig& c) {
  return nlohmann::json{{"architecture", to_string(c.architecture)},
                        {"image_size", c.image_size},
                        {"payload_bits", c.payload_bits},
                        {"alpha", c.alpha},
                        {"encoder_channels", c.encoder_channels},
                        {"message_channels", c.message_channels},
                        {"message_grid", c.message_grid},
                        {"context_dim", c.context_dim},
                        {"decoder_channels", c.decoder_channels},
                        {"discriminator_channels", c.discriminator_channels},
                        {"clamp_sharpness", c.clamp_sharpness},
                        {"residual_bound", c.residual_bound}};
}

CodecConfig codec_config_from_json(const nlohmann::json& j) {
  CodecConfig c;
  auto read = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(key, "wrong type");
    }
  };
  if (j.contains("architecture")) c.architecture = architecture_from_string(j.at("architecture").get<std::string>());
  read("image_size", c.image_size);
  read("payload_bits", c.payload_bits);
  read("alpha", c.alpha);
  read("encoder_channels", c.encoder_channels);
  read("message_channels", c.message_channels);
  read("message_grid", c.message_grid);
  read("context_dim", c.context_dim);
  read("decoder_channels", c.decoder_channels);
  read("discriminator_channels", c.discriminator_channels);
  read("clamp_sharpness", c.clamp_sharpness);
  read("residual_bound", c.residual_bound);
  c.validate();
  return c;
}

}  // namespace mea
