#include "ustar/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "ustar/scan_io.hpp"

namespace ustar {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr std::size_t kMagicLen = sizeof(kCheckpointMagic) - 1;

template <typename U>
void put(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename U>
  U get() {
    U v;
    std::memcpy(&v, take(sizeof(U)), sizeof(U));
    return v;
  }
  const char* take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw std::invalid_argument("checkpoint truncated at byte " + std::to_string(pos_));
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

CheckpointHeader read_header(Reader& r) {
  if (std::string(r.take(kMagicLen), kMagicLen) != std::string(kCheckpointMagic, kMagicLen)) {
    throw std::invalid_argument("not a checkpoint (bad magic)");
  }
  CheckpointHeader h;
  h.config_digest = r.get<std::uint64_t>();
  const auto n = r.get<std::uint32_t>();
  h.metadata.assign(r.take(n), n);
  h.scalar_size = r.get<std::uint8_t>();
  if (h.scalar_size != 4 && h.scalar_size != 8) throw std::invalid_argument("checkpoint has unsupported scalar size");
  return h;
}

}  // namespace

template <typename T>
std::string encode_checkpoint(const nn::ParameterStore<T>& store, std::uint64_t config_digest,
                              const std::string& metadata) {
  std::string out(kCheckpointMagic, kMagicLen);
  put<std::uint64_t>(out, config_digest);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(metadata.size()));
  out += metadata;
  put<std::uint8_t>(out, sizeof(T));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(store.params().size()));
  for (const auto& p : store.params()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.tensor.shape().size()));
    for (auto d : p.tensor.shape()) put<std::uint64_t>(out, d);
    const auto values = p.tensor.value();
    out.append(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(T));
  }
  return out;
}

CheckpointHeader decode_checkpoint_header(const std::string& bytes) {
  Reader r(bytes);
  return read_header(r);
}

template <typename T>
CheckpointHeader decode_checkpoint(const std::string& bytes, nn::ParameterStore<T>& store) {
  Reader r(bytes);
  const auto header = read_header(r);
  if (header.scalar_size != sizeof(T)) {
    throw std::invalid_argument("checkpoint holds " + std::to_string(8 * header.scalar_size) +
                                "-bit values, model is " + std::to_string(8 * sizeof(T)) + "-bit");
  }
  const auto count = r.get<std::uint32_t>();
  if (count != store.params().size()) {
    throw std::invalid_argument("checkpoint has " + std::to_string(count) + " parameters, model has " +
                                std::to_string(store.params().size()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint32_t>();
    const std::string name(r.take(len), len);
    auto* p = store.find(name);
    if (!p) throw std::invalid_argument("checkpoint parameter '" + name + "' not in model");
    const auto rank = r.get<std::uint32_t>();
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>());
    if (shape != p->tensor.shape()) throw std::invalid_argument("shape mismatch for parameter '" + name + "'");
    auto dst = p->tensor.mutable_value();
    std::memcpy(dst.data(), r.take(dst.size() * sizeof(T)), dst.size() * sizeof(T));
  }
  if (!r.done()) throw std::invalid_argument("trailing bytes after checkpoint blobs");
  return header;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const nn::ParameterStore<T>& store,
                     std::uint64_t config_digest, const std::string& metadata) {
  write_text_file(path, encode_checkpoint(store, config_digest, metadata));
}

template <typename T>
CheckpointHeader load_checkpoint(const std::filesystem::path& path, nn::ParameterStore<T>& store) {
  return decode_checkpoint(read_text_file(path), store);
}

CheckpointHeader read_checkpoint_header(const std::filesystem::path& path) {
  return decode_checkpoint_header(read_text_file(path));
}

#define USTAR_INSTANTIATE(T)                                                                         \
  template std::string encode_checkpoint<T>(const nn::ParameterStore<T>&, std::uint64_t,             \
                                            const std::string&);                                     \
  template CheckpointHeader decode_checkpoint<T>(const std::string&, nn::ParameterStore<T>&);        \
  template void save_checkpoint<T>(const std::filesystem::path&, const nn::ParameterStore<T>&,       \
                                   std::uint64_t, const std::string&);                               \
  template CheckpointHeader load_checkpoint<T>(const std::filesystem::path&, nn::ParameterStore<T>&);

USTAR_INSTANTIATE(float)
USTAR_INSTANTIATE(double)

#undef USTAR_INSTANTIATE

}  // namespace ustar
