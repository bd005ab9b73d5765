#include "atlas/tensor.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace atlas {

namespace {

constexpr std::array<char, 4> kEmatMagic = {'E', 'M', 'A', 'T'};
constexpr std::uint32_t kEmatVersion = 1;
constexpr std::uint32_t kMaxRank = 16;

template <typename T>
void put_le(std::ostream& out, T value) {
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(std::istream& in, std::size_t& offset, const char* what) {
  std::array<char, sizeof(T)> bytes;
  if (!in.read(bytes.data(), bytes.size())) throw ParseError(std::string("EMAT: truncated ") + what, offset);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  offset += sizeof(T);
  return value;
}

} // namespace

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_emat(std::ostream& out, const Tensor& t) {
  out.write(kEmatMagic.data(), kEmatMagic.size());
  put_le<std::uint32_t>(out, kEmatVersion);
  put_le<std::uint32_t>(out, std::uint32_t(t.rank()));
  for (std::size_t d : t.shape()) put_le<std::uint64_t>(out, d);
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(t.flat().data()), std::streamsize(t.size() * sizeof(double)));
  } else {
    for (double v : t.flat()) put_le<double>(out, v);
  }
  if (!out) throw IoError("EMAT: write failed");
}

Tensor read_emat(std::istream& in) {
  std::size_t offset = 0;
  std::array<char, 4> magic;
  if (!in.read(magic.data(), magic.size()) || magic != kEmatMagic) {
    throw ParseError("EMAT: bad magic", 0);
  }
  offset = 4;
  const auto version = get_le<std::uint32_t>(in, offset, "version");
  if (version != kEmatVersion) throw ParseError("EMAT: unsupported version " + std::to_string(version), offset - 4);
  const auto rank = get_le<std::uint32_t>(in, offset, "rank");
  if (rank > kMaxRank) throw ParseError("EMAT: implausible rank " + std::to_string(rank), offset - 4);
  Shape shape(rank);
  for (auto& d : shape) d = get_le<std::uint64_t>(in, offset, "dimension");
  Tensor t(shape);
  if constexpr (std::endian::native == std::endian::little) {
    const auto bytes = std::streamsize(t.size() * sizeof(double));
    if (!in.read(reinterpret_cast<char*>(t.flat().data()), bytes)) {
      throw ParseError("EMAT: truncated payload", offset + std::size_t(in.gcount()));
    }
  } else {
    for (Eigen::Index i = 0; i < t.flat().size(); ++i) t.flat()[i] = get_le<double>(in, offset, "payload");
  }
  return t;
}

void save_emat(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_emat(out, t);
}

Tensor load_emat(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_emat(in);
}

void write_csv(std::ostream& out, const Tensor& t) {
  const std::size_t width = t.rank() == 0 ? 1 : t.shape().back();
  if (width == 0) return;
  const auto& flat = t.flat();
  for (std::size_t row = 0; row < t.size() / width; ++row) {
    for (std::size_t j = 0; j < width; ++j) {
      if (j) out << ',';
      out << format_double(flat[Eigen::Index(row * width + j)]);
    }
    out << '\n';
  }
}

} // namespace atlas
