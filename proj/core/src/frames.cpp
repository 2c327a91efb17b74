#include "dualmotion/frames.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "dualmotion/errors.hpp"

namespace dualmotion {

namespace fs = std::filesystem;

FrameSequence FrameSequence::window(int start, int count) const {
  if (start < 0 || count < 1 || start + count > length()) {
    throw ShapeError("frame window [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") outside sequence of length " + std::to_string(length()));
  }
  const std::size_t per = frames.size() / static_cast<std::size_t>(length());
  std::vector<Scalar> values(frames.data() + start * per, frames.data() + (start + count) * per);
  return {Tensor({count, 3, height(), width()}, std::move(values)), frame_interval, source_id};
}

void FrameSequence::append(const Tensor& frame) {
  const Tensor f = frame.rank() == 3 ? frame.reshaped({1, frame.dim(0), frame.dim(1), frame.dim(2)}) : frame;
  if (frames.empty()) {
    frames = f;
    return;
  }
  if (f.shape() != Shape{1, 3, height(), width()}) {
    throw ShapeError("append: frame " + to_string(f.shape()) + " does not match sequence " + to_string(frames.shape()));
  }
  const Tensor parts[] = {frames, f};
  frames = stack_batch(parts);
}

void FrameSequence::validate() const {
  if (frames.rank() != 4 || frames.dim(1) != 3) {
    throw ShapeError("frame sequence must be [T, 3, H, W], got " + to_string(frames.shape()));
  }
  if (length() < 2) throw DatasetError("sequence '" + source_id + "' has fewer than 2 frames");
  if (height() % 8 != 0 || width() % 8 != 0) {
    throw ShapeError("frame size " + std::to_string(height()) + "x" + std::to_string(width()) +
                     " is not a multiple of 8");
  }
  for (Scalar v : frames.values()) {
    if (!(v >= -1.0 && v <= 1.0)) throw DatasetError("sequence '" + source_id + "' has values outside [-1, 1]");
  }
}

Scalar normalize_value(std::uint8_t v) { return 2.0 * static_cast<Scalar>(v) / 255.0 - 1.0; }

Tensor normalize_frame(const Image8& image) {
  Tensor out({3, image.height, image.width});
  const std::size_t plane = static_cast<std::size_t>(image.height) * image.width;
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) out[c * plane + i] = normalize_value(image.pixels[i * 3 + c]);
  }
  return out;
}

DenormalizedFrame denormalize_frame(const Tensor& frame) {
  const Tensor f = frame.rank() == 4 ? frame.reshaped({frame.dim(1), frame.dim(2), frame.dim(3)}) : frame;
  if (f.rank() != 3 || f.dim(0) != 3) throw ShapeError("denormalize_frame expects [3, H, W], got " + to_string(f.shape()));
  DenormalizedFrame out{Image8(f.dim(1), f.dim(2)), 0};
  const std::size_t plane = static_cast<std::size_t>(f.dim(1)) * f.dim(2);
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) {
      Scalar v = f[c * plane + i];
      if (!(v >= -1.0 && v <= 1.0)) {
        ++out.clamped;
        v = std::isnan(v) ? -1.0 : std::clamp(v, -1.0, 1.0);
      }
      out.image.pixels[i * 3 + c] = static_cast<std::uint8_t>(std::lround((v + 1.0) * 127.5));
    }
  }
  return out;
}

namespace {

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

Image8 from_bgr(const cv::Mat& bgr) {
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  Image8 img(rgb.rows, rgb.cols);
  for (int y = 0; y < rgb.rows; ++y) {
    std::copy(rgb.ptr<std::uint8_t>(y), rgb.ptr<std::uint8_t>(y) + rgb.cols * 3, img.pixel(y, 0));
  }
  return img;
}

cv::Mat to_bgr(const Image8& image) {
  cv::Mat rgb(image.height, image.width, CV_8UC3);
  for (int y = 0; y < image.height; ++y) {
    std::copy(image.pixel(y, 0), image.pixel(y, 0) + image.width * 3, rgb.ptr<std::uint8_t>(y));
  }
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

}  // namespace

Image8 read_image(const fs::path& path) {
  cv::Mat bgr;
  try {
    bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  } catch (const cv::Exception& e) {
    throw IngestionError("cannot decode image '" + path.string() + "': " + e.what());
  }
  if (bgr.empty()) throw IngestionError("cannot read image '" + path.string() + "'");
  return from_bgr(bgr);
}

void write_image(const fs::path& path, const Image8& image) {
  const std::vector<int> params{cv::IMWRITE_PNG_COMPRESSION, 6};
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), to_bgr(image), params);
  } catch (const cv::Exception& e) {
    throw std::runtime_error("cannot write image '" + path.string() + "': " + e.what());
  }
  if (!ok) throw std::runtime_error("cannot write image '" + path.string() + "'");
}

void write_frame_png(const fs::path& path, const Tensor& frame) { write_image(path, denormalize_frame(frame).image); }

FrameSequence load_frame_folder(const fs::path& dir, int height, int width) {
  if (!fs::is_directory(dir)) throw IngestionError("frame folder '" + dir.string() + "' does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
    return a.filename().string() < b.filename().string();
  });
  if (files.size() < 2) {
    throw DatasetError("frame folder '" + dir.string() + "' holds " + std::to_string(files.size()) +
                       " image(s); at least 2 are required");
  }
  FrameSequence seq;
  seq.source_id = dir.string();
  std::vector<Tensor> frames;
  frames.reserve(files.size());
  for (const auto& f : files) {
    Image8 img = read_image(f);
    if (img.height != height || img.width != width) {
      cv::Mat src = to_bgr(img), dst;
      const bool shrinking = img.height > height || img.width > width;
      cv::resize(src, dst, cv::Size(width, height), 0, 0, shrinking ? cv::INTER_AREA : cv::INTER_LINEAR);
      img = from_bgr(dst);
    }
    frames.push_back(normalize_frame(img).reshaped({1, 3, height, width}));
  }
  seq.frames = stack_batch(frames);
  return seq;
}

}  // namespace dualmotion
