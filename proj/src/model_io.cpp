#include <bit>
#include <cmath>
#include <cstring>

#include "lesionbench/errors.hpp"
#include "lesionbench/fusion.hpp"

// Layout (little-endian):
//   char[4]  magic "LSNB"
//   u16      format version
//   u8       scheme tag (0 = nine-class, 1 = four-class)
//   u32 x 4  H1, H2, D, C
//   f64 ...  W1, b1, W2, b2, W3, b3 (matrices row-major)

namespace lesionbench {
namespace {

constexpr std::size_t kHeaderBytes = 4 + 2 + 1 + 4 * 4;
constexpr std::uint64_t kMaxDim = 1u << 20;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename T>
  void little_endian(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i)
      out_.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
  }
  void f64(double v) { little_endian(std::bit_cast<std::uint64_t>(v)); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  template <typename T>
  T little_endian() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(in_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }
  double f64() { return std::bit_cast<double>(little_endian<std::uint64_t>()); }
  std::size_t remaining() const noexcept { return in_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (remaining() < n)
      throw FormatError("weight file truncated at byte " + std::to_string(pos_));
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> save_model(const FusionHeadModel& m) {
  m.validate();
  Writer w;
  w.bytes(kModelMagic, sizeof(kModelMagic));
  w.little_endian<std::uint16_t>(kModelVersion);
  w.little_endian<std::uint8_t>(m.scheme == TargetScheme::NineClass ? 0 : 1);
  w.little_endian<std::uint32_t>(static_cast<std::uint32_t>(m.hidden1()));
  w.little_endian<std::uint32_t>(static_cast<std::uint32_t>(m.hidden2()));
  w.little_endian<std::uint32_t>(static_cast<std::uint32_t>(m.cnn_dim()));
  w.little_endian<std::uint32_t>(static_cast<std::uint32_t>(m.classes()));
  auto params = m.params;
  params.for_each([&](double v) { w.f64(v); });
  return w.take();
}

FusionHeadModel load_model(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof(kModelMagic) ||
      std::memcmp(bytes.data(), kModelMagic, sizeof(kModelMagic)) != 0)
    throw FormatError("bad magic: expected 'LSNB'");
  if (bytes.size() < kHeaderBytes) throw FormatError("weight file truncated in header");
  Reader r(bytes.subspan(sizeof(kModelMagic)));
  const auto version = r.little_endian<std::uint16_t>();
  if (version != kModelVersion)
    throw FormatError("unsupported weight file version " + std::to_string(version));
  const auto tag = r.little_endian<std::uint8_t>();
  if (tag > 1) throw FormatError("unknown scheme tag " + std::to_string(tag));
  const TargetScheme scheme = tag == 0 ? TargetScheme::NineClass : TargetScheme::FourClass;
  const std::uint64_t h1 = r.little_endian<std::uint32_t>();
  const std::uint64_t h2 = r.little_endian<std::uint32_t>();
  const std::uint64_t d = r.little_endian<std::uint32_t>();
  const std::uint64_t c = r.little_endian<std::uint32_t>();
  if (h1 == 0 || h2 == 0) throw FormatError("hidden widths must be positive");
  if (h1 > kMaxDim || h2 > kMaxDim || d > kMaxDim)
    throw FormatError("layer dimensions exceed " + std::to_string(kMaxDim));
  if (c != class_count(scheme))
    throw FormatError("class count " + std::to_string(c) + " does not match the scheme");

  const std::uint64_t count = h1 * kMetaFeatures + h1 + h2 * h1 + h2 + c * (h2 + d) + c;
  if (r.remaining() != count * sizeof(double))
    throw FormatError("weight file holds " + std::to_string(r.remaining()) + " parameter bytes, " +
                      "expected " + std::to_string(count * sizeof(double)));

  auto m = FusionHeadModel::zeros(scheme, h1, h2, d);
  bool finite = true;
  m.params.for_each([&](double& v) {
    v = r.f64();
    finite = finite && std::isfinite(v);
  });
  if (!finite) throw FormatError("weight file contains non-finite parameters");
  return m;
}

}  // namespace lesionbench
