#include "dualmotion/flow_io.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <vector>

#include "dualmotion/errors.hpp"

namespace dualmotion {

namespace {

std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
}

void put_u32(std::vector<char>& buf, std::uint32_t v) {
  v = to_little(v);
  char bytes[4];
  std::memcpy(bytes, &v, 4);
  buf.insert(buf.end(), bytes, bytes + 4);
}

std::uint32_t get_u32(const char* p) {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  return to_little(v);
}

}  // namespace

FlowField::FlowField(const Tensor& data) {
  if (data.rank() == 4 && data.dim(0) == 1 && data.dim(1) == 2) {
    data_ = data.reshaped({2, data.dim(2), data.dim(3)});
  } else if (data.rank() == 3 && data.dim(0) == 2) {
    data_ = data;
  } else {
    throw ShapeError("flow field must be [2, H, W] or [1, 2, H, W], got " + to_string(data.shape()));
  }
}

void write_flo(const FlowField& flow, const std::filesystem::path& path) {
  const int h = flow.height(), w = flow.width();
  std::vector<char> buf;
  buf.reserve(12 + static_cast<std::size_t>(h) * w * 8);
  put_u32(buf, std::bit_cast<std::uint32_t>(kFloMagic));
  put_u32(buf, static_cast<std::uint32_t>(w));
  put_u32(buf, static_cast<std::uint32_t>(h));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (Scalar value : {flow.u(y, x), flow.v(y, x)}) {
        const auto f = static_cast<float>(value);
        if (!std::isfinite(f)) {
          throw FormatError("non-finite flow value at pixel (" + std::to_string(x) + ", " + std::to_string(y) + ")",
                            buf.size());
        }
        put_u32(buf, std::bit_cast<std::uint32_t>(f));
      }
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

FlowField read_flo(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open flow file '" + path.string() + "'");
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string name = "'" + path.string() + "': ";
  if (buf.size() < 4) throw FormatError(name + "truncated header", buf.size());
  const float magic = std::bit_cast<float>(get_u32(buf.data()));
  if (magic != kFloMagic) throw FormatError(name + "bad magic number " + std::to_string(magic), 0);
  if (buf.size() < 12) throw FormatError(name + "truncated header", buf.size());
  const auto w = static_cast<std::int32_t>(get_u32(buf.data() + 4));
  const auto h = static_cast<std::int32_t>(get_u32(buf.data() + 8));
  if (w <= 0 || w > (1 << 16)) throw FormatError(name + "invalid width " + std::to_string(w), 4);
  if (h <= 0 || h > (1 << 16)) throw FormatError(name + "invalid height " + std::to_string(h), 8);
  const std::size_t expected = 12 + static_cast<std::size_t>(w) * h * 8;
  if (buf.size() < expected) throw FormatError(name + "truncated payload", buf.size());
  if (buf.size() > expected) throw FormatError(name + "trailing bytes after payload", expected);
  FlowField flow(h, w);
  std::size_t off = 12;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 2; ++c, off += 4) {
        const float f = std::bit_cast<float>(get_u32(buf.data() + off));
        if (!std::isfinite(f)) throw FormatError(name + "non-finite flow value", off);
        (c == 0 ? flow.u(y, x) : flow.v(y, x)) = f;
      }
    }
  }
  return flow;
}

namespace {

// Middlebury color wheel: segment lengths chosen for perceptual spacing.
std::vector<std::array<double, 3>> make_color_wheel() {
  constexpr int RY = 15, YG = 6, GC = 4, CB = 11, BM = 13, MR = 6;
  std::vector<std::array<double, 3>> wheel;
  for (int i = 0; i < RY; ++i) wheel.push_back({255, std::floor(255.0 * i / RY), 0});
  for (int i = 0; i < YG; ++i) wheel.push_back({255 - std::floor(255.0 * i / YG), 255, 0});
  for (int i = 0; i < GC; ++i) wheel.push_back({0, 255, std::floor(255.0 * i / GC)});
  for (int i = 0; i < CB; ++i) wheel.push_back({0, 255 - std::floor(255.0 * i / CB), 255});
  for (int i = 0; i < BM; ++i) wheel.push_back({std::floor(255.0 * i / BM), 0, 255});
  for (int i = 0; i < MR; ++i) wheel.push_back({255, 0, 255 - std::floor(255.0 * i / MR)});
  return wheel;
}

}  // namespace

double flow_wheel_angle(double u, double v) {
  const double a = std::atan2(-v, -u) / std::numbers::pi;  // (-1, 1]
  double deg = (a + 1.0) * 180.0;
  if (deg >= 360.0) deg -= 360.0;
  return deg;
}

Image8 flow_to_color(const FlowField& flow, std::optional<double> max_magnitude) {
  static const auto wheel = make_color_wheel();
  const int ncols = static_cast<int>(wheel.size());
  const int h = flow.height(), w = flow.width();
  double max_rad = 0;
  if (max_magnitude) {
    max_rad = *max_magnitude;
  } else {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) max_rad = std::max(max_rad, std::hypot(flow.u(y, x), flow.v(y, x)));
  }
  Image8 img(h, w, 255);
  if (max_rad <= 0) return img;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double fx = flow.u(y, x) / max_rad, fy = flow.v(y, x) / max_rad;
      const double rad = std::hypot(fx, fy);
      const double fk = flow_wheel_angle(fx, fy) / 360.0 * (ncols - 1);
      const int k0 = static_cast<int>(fk) % ncols;
      const int k1 = (k0 + 1) % ncols;
      const double f = fk - std::floor(fk);
      std::uint8_t* px = img.pixel(y, x);
      for (int b = 0; b < 3; ++b) {
        double col = ((1 - f) * wheel[k0][b] + f * wheel[k1][b]) / 255.0;
        col = rad <= 1 ? 1 - rad * (1 - col) : col * 0.75;
        px[b] = static_cast<std::uint8_t>(std::clamp(255.0 * col, 0.0, 255.0));
      }
    }
  }
  return img;
}

}  // namespace dualmotion
