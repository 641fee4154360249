#include "atg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "atg/errors.hpp"

namespace atg {

namespace {

constexpr char kMagic[8] = {'A', 'T', 'G', 'C', 'K', 'P', 'T', '\0'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void read(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw IoError("checkpoint: truncated file");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

void fnv(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
}

}  // namespace

std::uint64_t architecture_fingerprint(const Architecture& arch) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const TensorInfo& t : tensor_layout(arch)) {
    fnv(h, t.name.data(), t.name.size());
    const std::uint64_t shape[2] = {t.rows, t.cols};
    fnv(h, shape, sizeof(shape));
  }
  return h;
}

std::string checkpoint_bytes(const NetParams<float>& params) {
  const Architecture& arch = params.arch();
  std::string out;
  out.reserve(96 + params.flat().size() * sizeof(float));
  out.append(kMagic, sizeof(kMagic));
  put(out, kCheckpointVersion);
  for (std::int32_t f : arch.fields()) put(out, f);
  put(out, architecture_fingerprint(arch));
  put(out, static_cast<std::uint64_t>(params.flat().size()));
  out.append(reinterpret_cast<const char*>(params.flat().data()),
             params.flat().size() * sizeof(float));
  return out;
}

NetParams<float> checkpoint_from_bytes(std::string_view bytes) {
  Reader r(bytes);
  char magic[8];
  r.read(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw IoError("checkpoint: bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw IoError("checkpoint: unsupported format version " + std::to_string(version));
  std::array<std::int32_t, 12> fields{};
  for (std::int32_t& f : fields) f = r.get<std::int32_t>();
  Architecture arch;
  arch.input_h = fields[0];
  arch.input_w = fields[1];
  arch.input_c = fields[2];
  arch.conv1_channels = fields[3];
  arch.conv1_kernel = fields[4];
  arch.conv1_stride = fields[5];
  arch.conv2_channels = fields[6];
  arch.conv2_kernel = fields[7];
  arch.conv2_stride = fields[8];
  arch.fc_units = fields[9];
  arch.lstm_units = fields[10];
  arch.actions = fields[11];
  try {
    arch.validate();
  } catch (const ValidationError& e) {
    throw IoError(std::string("checkpoint: invalid architecture: ") + e.what());
  }
  if (r.get<std::uint64_t>() != architecture_fingerprint(arch))
    throw IoError("checkpoint: architecture fingerprint mismatch");
  const auto count = r.get<std::uint64_t>();
  if (count != arch.param_count()) throw IoError("checkpoint: parameter count mismatch");
  if (r.remaining() != count * sizeof(float))
    throw IoError("checkpoint: payload size does not match parameter count");
  NetParams<float> params(arch);
  r.read(params.flat().data(), count * sizeof(float));
  return params;
}

void save_checkpoint(const NetParams<float>& params, const std::filesystem::path& path) {
  const std::string bytes = checkpoint_bytes(params);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into " + path.string() + ": " + ec.message());
}

NetParams<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return checkpoint_from_bytes(ss.str());
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

NetParams<float> load_checkpoint(const std::filesystem::path& path, const Architecture& expected) {
  NetParams<float> p = load_checkpoint(path);
  if (!(p.arch() == expected))
    throw IoError(path.string() + ": checkpoint architecture does not match the network");
  return p;
}

}  // namespace atg
