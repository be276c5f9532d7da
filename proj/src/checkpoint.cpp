#include "uwe/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "uwe/error.hpp"

namespace uwe {

namespace {

constexpr char kMagic[8] = {'U', 'W', 'E', 'C', 'K', 'P', 'T', '\0'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  template <class U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void str32(const std::string& s) {
    uint<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : buf(b) {}
  void need(std::size_t n) const {
    require(n <= buf.size() - pos, Errc::truncated, "checkpoint ends unexpectedly");
  }
  template <class U>
  U uint() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[pos + i]) << (8 * i);
    pos += sizeof(U);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
    pos += n;
    return s;
  }
  const std::vector<std::uint8_t>& buf;
  std::size_t pos = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.uint<std::uint32_t>(kCheckpointVersion);
  w.str32(ck.kind);
  w.uint<std::uint64_t>(ck.config_echo.size());
  w.bytes(ck.config_echo.data(), ck.config_echo.size());
  const auto& items = ck.tensors.items();
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(items.size()));
  for (const auto& t : items) {
    w.str32(t.name);
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.uint<std::uint64_t>(d);
    for (double v : t.data) w.uint<std::uint64_t>(std::bit_cast<std::uint64_t>(v));
  }
  return std::move(w.out);
}

Checkpoint parse_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  r.need(sizeof kMagic);
  require(std::memcmp(bytes.data(), kMagic, sizeof kMagic) == 0, Errc::unsupported_format, "not a checkpoint file");
  r.pos = sizeof kMagic;
  const auto version = r.uint<std::uint32_t>();
  require(version == kCheckpointVersion, Errc::unsupported_format,
          "unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.kind = r.str(r.uint<std::uint32_t>());
  ck.config_echo = r.str(r.uint<std::uint64_t>());
  const auto count = r.uint<std::uint32_t>();
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name = r.str(r.uint<std::uint32_t>());
    const auto rank = r.uint<std::uint32_t>();
    r.need(std::size_t{rank} * 8);
    std::vector<std::size_t> shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = r.uint<std::uint64_t>();
      require(d == 0 || n <= (bytes.size() / 8) / d, Errc::truncated, "checkpoint tensor larger than the file");
      n *= d;
    }
    r.need(n * 8);
    std::vector<double> data(n);
    for (double& v : data) v = std::bit_cast<double>(r.uint<std::uint64_t>());
    ck.tensors.add(std::move(name), std::move(shape), std::move(data));
  }
  require(r.pos == bytes.size(), Errc::unsupported_format, "trailing bytes after checkpoint");
  return ck;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const auto bytes = serialize_checkpoint(ck);
  std::ofstream f(path, std::ios::binary);
  require(static_cast<bool>(f), Errc::io, "cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(f), Errc::io, "failed writing " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  require(static_cast<bool>(f), Errc::io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

}  // namespace uwe
