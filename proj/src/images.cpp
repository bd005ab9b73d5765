#include "atlas/images.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>

#include "atlas/random.hpp"

namespace atlas {

namespace {

class PpmHeaderReader {
public:
  explicit PpmHeaderReader(std::istream& in) : in_(in) {}

  std::size_t offset() const { return offset_; }

  int get() {
    const int c = in_.get();
    if (c != EOF) ++offset_;
    return c;
  }

  // Skips whitespace and '#' comments, then parses a decimal integer.
  long number(const char* what) {
    int c = get();
    for (;;) {
      if (c == '#') {
        while (c != '\n' && c != EOF) c = get();
      } else if (c != EOF && std::isspace(c)) {
        c = get();
      } else {
        break;
      }
    }
    if (c == EOF || !std::isdigit(c)) throw ParseError(std::string("PPM: expected ") + what, offset_ == 0 ? 0 : offset_ - 1);
    long value = 0;
    while (c != EOF && std::isdigit(c)) {
      value = value * 10 + (c - '0');
      if (value > 1'000'000) throw ParseError(std::string("PPM: ") + what + " too large", offset_ - 1);
      c = get();
    }
    if (c == EOF || !std::isspace(c)) throw ParseError("PPM: expected whitespace after header field", offset_);
    return value;
  }

private:
  std::istream& in_;
  std::size_t offset_ = 0;
};

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

} // namespace

Tensor read_ppm(std::istream& in) {
  PpmHeaderReader header(in);
  if (header.get() != 'P' || header.get() != '6') throw ParseError("PPM: expected magic 'P6'", 0);
  const long width = header.number("width");
  const long height = header.number("height");
  const long maxval = header.number("maxval");
  if (width <= 0 || height <= 0) throw ParseError("PPM: empty image", header.offset());
  if (maxval != 255) throw ParseError("PPM: only 8-bit (maxval 255) images are supported", header.offset());
  const std::size_t pixels = std::size_t(width) * std::size_t(height);
  std::vector<unsigned char> raw(pixels * 3);
  if (!in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()))) {
    throw ParseError("PPM: truncated pixel data", header.offset() + std::size_t(in.gcount()));
  }
  Tensor image({3, std::size_t(height), std::size_t(width)});
  auto& flat = image.flat();
  for (std::size_t p = 0; p < pixels; ++p) {
    for (std::size_t c = 0; c < 3; ++c) flat[Eigen::Index(c * pixels + p)] = raw[p * 3 + c] / 255.0;
  }
  return image;
}

void write_ppm(std::ostream& out, const Tensor& image) {
  if (image.rank() != 3 || (image.dim(0) != 3 && image.dim(0) != 1)) {
    throw DimensionError("PPM output needs a 1- or 3-channel image, got " + shape_string(image.shape()));
  }
  const std::size_t channels = image.dim(0);
  const std::size_t height = image.dim(1);
  const std::size_t width = image.dim(2);
  const std::size_t pixels = height * width;
  out << "P6\n" << width << ' ' << height << "\n255\n";
  std::vector<unsigned char> raw(pixels * 3);
  const auto& flat = image.flat();
  for (std::size_t p = 0; p < pixels; ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = flat[Eigen::Index((channels == 1 ? 0 : c) * pixels + p)];
      raw[p * 3 + c] = static_cast<unsigned char>(std::lround(clamp01(v) * 255.0));
    }
  }
  out.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size()));
  if (!out) throw IoError("PPM: write failed");
}

Tensor load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  in.clear();
  in.seekg(0);
  if (magic[0] == 'P' && magic[1] == '6') return read_ppm(in);
  if (std::string(magic.data(), 4) == "EMAT") return read_emat(in);
  throw ParseError("unrecognized image format in " + path.string(), 0);
}

void save_image(const Tensor& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  if (path.extension() == ".ppm") {
    write_ppm(out, image);
  } else {
    write_emat(out, image);
  }
}

Vector image_to_input(const Tensor& image, const VitConfig& config) {
  if (Eigen::Index(image.size()) != config.input_dim()) {
    throw DimensionError("image " + shape_string(image.shape()) + " does not match model input " +
                         shape_string({config.channels, config.image_size, config.image_size}));
  }
  return image.flat();
}

Tensor input_to_image(const Vector& x, const VitConfig& config) {
  return Tensor({config.channels, config.image_size, config.image_size}, x);
}

std::string to_string(PatternClass c) {
  switch (c) {
    case PatternClass::Stripes: return "stripes";
    case PatternClass::Checkers: return "checkers";
    case PatternClass::Disks: return "disks";
  }
  return "unknown";
}

PatternClass pattern_from_string(const std::string& name) {
  if (name == "stripes") return PatternClass::Stripes;
  if (name == "checkers") return PatternClass::Checkers;
  if (name == "disks") return PatternClass::Disks;
  throw ConfigError("unknown synthetic pattern '" + name + "'");
}

Vector synthetic_image(PatternClass pattern, std::uint64_t seed, const VitConfig& config) {
  Rng rng(seed, 0x5EED0000u + std::uint64_t(pattern));
  const double size = config.image_size;
  const double phase = rng.uniform() * 2.0 * std::numbers::pi;
  const double angle = rng.uniform() * std::numbers::pi;
  const double cx = size * (0.35 + 0.3 * rng.uniform());
  const double cy = size * (0.35 + 0.3 * rng.uniform());
  // Class palette: the foreground is bright in the channel matching the
  // class index and dark elsewhere; colors jitter by +-0.05 per image.
  std::vector<double> fg(config.channels), bg(config.channels);
  for (std::size_t c = 0; c < fg.size(); ++c) {
    const bool hot = c % 3 == std::size_t(pattern);
    fg[c] = (hot ? 0.75 : 0.25) + 0.1 * (rng.uniform() - 0.5);
    bg[c] = 0.4 + 0.1 * (rng.uniform() - 0.5);
  }

  const double tau = 2.0 * std::numbers::pi;
  Vector x(config.input_dim());
  const Eigen::Index plane = Eigen::Index(size * size);
  for (Eigen::Index y = 0; y < Eigen::Index(size); ++y) {
    for (Eigen::Index xx = 0; xx < Eigen::Index(size); ++xx) {
      const double u = (double(xx) + 0.5) / size;
      const double v = (double(y) + 0.5) / size;
      double s = 0.0;
      switch (pattern) {
        case PatternClass::Stripes: {
          const double t = std::cos(angle) * u + std::sin(angle) * v;
          s = std::sin(tau * 3.0 * t + phase);
          break;
        }
        case PatternClass::Checkers:
          s = std::sin(tau * 2.0 * u + phase) * std::sin(tau * 2.0 * v + 0.5 * phase);
          break;
        case PatternClass::Disks: {
          const double r = std::hypot(double(xx) + 0.5 - cx, double(y) + 0.5 - cy) / size;
          s = std::cos(tau * 5.0 * r + phase);
          break;
        }
      }
      const double w = 0.5 + 0.5 * std::tanh(3.0 * s);
      for (Eigen::Index c = 0; c < Eigen::Index(config.channels); ++c) {
        const double value = w * fg[std::size_t(c)] + (1.0 - w) * bg[std::size_t(c)] + 0.02 * rng.normal();
        x(c * plane + y * Eigen::Index(size) + xx) = std::clamp(value, 0.1, 0.9);
      }
    }
  }
  return x;
}

} // namespace atlas
