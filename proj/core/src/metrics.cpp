#include "dualmotion/metrics.hpp"

#include <cmath>
#include <vector>

namespace dualmotion {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

struct Gray {
  int height = 0;
  int width = 0;
  std::vector<double> px;
  double at(int y, int x) const { return px[static_cast<std::size_t>(y) * width + x]; }
};

Gray grayscale(const Tensor& img) {
  const Shape& s = img.shape();
  int c, h, w;
  if (s.size() == 3) {
    c = s[0], h = s[1], w = s[2];
  } else if (s.size() == 4 && s[0] == 1) {
    c = s[1], h = s[2], w = s[3];
  } else {
    throw ShapeError("ssim: expected [C, H, W] or [1, C, H, W], got " + to_string(s));
  }
  Gray g{h, w, std::vector<double>(static_cast<std::size_t>(h) * w, 0.0)};
  const std::size_t plane = g.px.size();
  for (int ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < plane; ++i) g.px[i] += img[ch * plane + i];
  }
  for (auto& v : g.px) v /= c;
  return g;
}

double ssim_term(double mx, double my, double vx, double vy, double cxy) {
  return ((2 * mx * my + kC1) * (2 * cxy + kC2)) / ((mx * mx + my * my + kC1) * (vx + vy + kC2));
}

}  // namespace

Tensor to_unit_range(const Tensor& frame) {
  Tensor out = frame;
  for (auto& v : out.values()) v = (v + 1.0) * 0.5;
  return out;
}

double mse(const Tensor& pred, const Tensor& gt) {
  require_same_shape(pred, gt, "mse");
  double s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - gt[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.size());
}

double psnr_from_mse(double mse_value, double peak) {
  if (mse_value <= 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse_value));
}

double psnr(const Tensor& pred, const Tensor& gt, double peak) { return psnr_from_mse(mse(pred, gt), peak); }

double ssim(const Tensor& pred, const Tensor& gt) {
  require_same_shape(pred, gt, "ssim");
  const Gray a = grayscale(pred);
  const Gray b = grayscale(gt);
  if (a.height < kWindow || a.width < kWindow) {
    const double n = static_cast<double>(a.px.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < a.px.size(); ++i) mx += a.px[i], my += b.px[i];
    mx /= n, my /= n;
    double vx = 0, vy = 0, cxy = 0;
    for (std::size_t i = 0; i < a.px.size(); ++i) {
      vx += (a.px[i] - mx) * (a.px[i] - mx);
      vy += (b.px[i] - my) * (b.px[i] - my);
      cxy += (a.px[i] - mx) * (b.px[i] - my);
    }
    return ssim_term(mx, my, vx / n, vy / n, cxy / n);
  }
  // Separable normalized Gaussian; valid windows only.
  double kernel[kWindow];
  double ksum = 0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    kernel[i] = std::exp(-d * d / (2 * kSigma * kSigma));
    ksum += kernel[i];
  }
  for (auto& k : kernel) k /= ksum;
  const int h = a.height, w = a.width;
  const int oh = h - kWindow + 1, ow = w - kWindow + 1;
  // Five filtered maps: x, y, x^2, y^2, xy.
  std::vector<double> rows(static_cast<std::size_t>(5) * h * ow);
  auto row = [&](int m, int y, int x) -> double& { return rows[(static_cast<std::size_t>(m) * h + y) * ow + x]; };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s[5] = {0, 0, 0, 0, 0};
      for (int k = 0; k < kWindow; ++k) {
        const double p = a.at(y, x + k), q = b.at(y, x + k), wk = kernel[k];
        s[0] += wk * p;
        s[1] += wk * q;
        s[2] += wk * p * p;
        s[3] += wk * q * q;
        s[4] += wk * p * q;
      }
      for (int m = 0; m < 5; ++m) row(m, y, x) = s[m];
    }
  }
  double total = 0;
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s[5] = {0, 0, 0, 0, 0};
      for (int k = 0; k < kWindow; ++k) {
        for (int m = 0; m < 5; ++m) s[m] += kernel[k] * row(m, y + k, x);
      }
      total += ssim_term(s[0], s[1], s[2] - s[0] * s[0], s[3] - s[1] * s[1], s[4] - s[0] * s[1]);
    }
  }
  return total / (static_cast<double>(oh) * ow);
}

double epe(const Tensor& f, const Tensor& g) {
  require_same_shape(f, g, "epe");
  const Shape& s = f.shape();
  const int rank = static_cast<int>(s.size());
  if (rank < 3 || s[rank - 3] != 2) throw ShapeError("epe: expected [.., 2, H, W], got " + to_string(s));
  const std::size_t plane = static_cast<std::size_t>(s[rank - 2]) * s[rank - 1];
  const std::size_t n = f.size() / (2 * plane);
  double total = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t base = k * 2 * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      const double du = f[base + i] - g[base + i];
      const double dv = f[base + plane + i] - g[base + plane + i];
      total += std::sqrt(du * du + dv * dv);
    }
  }
  return total / static_cast<double>(n * plane);
}

double epe(const FlowField& f, const FlowField& g) { return epe(f.tensor(), g.tensor()); }

}  // namespace dualmotion
