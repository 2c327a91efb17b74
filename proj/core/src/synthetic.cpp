#include "dualmotion/synthetic.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "dualmotion/errors.hpp"

namespace dualmotion {

namespace {

struct Box {
  int x0, y0, x1, y1;  // half-open
  bool intersects(const Box& o) const { return x0 < o.x1 && o.x0 < x1 && y0 < o.y1 && o.y0 < y1; }
};

Box bounds_at(const ShapeSpec& s, int frame) {
  const int x = s.x + s.vx * frame, y = s.y + s.vy * frame;
  return {x, y, x + s.width, y + s.height};
}

Box swept_bounds(const ShapeSpec& s, int first, int last) {
  Box b = bounds_at(s, first);
  for (int t = first + 1; t <= last; ++t) {
    const Box c = bounds_at(s, t);
    b = {std::min(b.x0, c.x0), std::min(b.y0, c.y0), std::max(b.x1, c.x1), std::max(b.y1, c.y1)};
  }
  return b;
}

const char* kind_name(ShapeKind k) { return k == ShapeKind::rectangle ? "rectangle" : "ellipse"; }

}  // namespace

bool ShapeSpec::covers(int frame, int px, int py) const {
  const int rx = px - (x + vx * frame), ry = py - (y + vy * frame);
  if (rx < 0 || ry < 0 || rx >= width || ry >= height) return false;
  if (kind == ShapeKind::rectangle) return true;
  const double ex = (rx + 0.5 - width / 2.0) / (width / 2.0);
  const double ey = (ry + 0.5 - height / 2.0) / (height / 2.0);
  return ex * ex + ey * ey <= 1.0;
}

void SyntheticSceneSpec::validate() const {
  if (height < 8 || width < 8 || height % 8 || width % 8) {
    throw SpecError("canvas " + std::to_string(height) + "x" + std::to_string(width) + " must be positive multiples of 8");
  }
  if (num_frames < 2) throw SpecError("a scene needs at least 2 frames");
  if (texture_amplitude < 0 || texture_amplitude > 127) throw SpecError("texture amplitude must lie in [0, 127]");
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const ShapeSpec& s = shapes[i];
    if (s.width < 1 || s.height < 1) throw SpecError("shape " + std::to_string(i) + " has an empty size");
    for (int t = 0; t < num_frames; ++t) {
      const Box b = bounds_at(s, t);
      if (b.x0 < 1 || b.y0 < 1 || b.x1 > width - 1 || b.y1 > height - 1) {
        throw SpecError("shape " + std::to_string(i) + " leaves the canvas at frame " + std::to_string(t));
      }
    }
  }
  // A flow step t -> t+1 reads frames t-1 (uncovered pixels sample one
  // velocity back), t and t+1; shapes must stay apart over that window.
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    for (std::size_t j = i + 1; j < shapes.size(); ++j) {
      for (int t = 0; t + 1 < num_frames; ++t) {
        if (swept_bounds(shapes[i], t - 1, t + 1).intersects(swept_bounds(shapes[j], t - 1, t + 1))) {
          throw SpecError("shapes " + std::to_string(i) + " and " + std::to_string(j) + " overlap around frame " +
                          std::to_string(t));
        }
      }
    }
  }
}

SyntheticClip generate_moving_shapes(const SyntheticSceneSpec& spec, std::uint64_t seed) {
  spec.validate();
  const int h = spec.height, w = spec.width, T = spec.num_frames;
  const std::size_t plane = static_cast<std::size_t>(h) * w;

  Image8 background(h, w);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> jitter(-spec.texture_amplitude, spec.texture_amplitude);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        const int v = spec.texture_amplitude ? spec.background[c] + jitter(rng) : spec.background[c];
        background.pixel(y, x)[c] = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
      }
    }
  }

  SyntheticClip clip;
  clip.frames.source_id = "synthetic:" + std::to_string(seed);
  clip.frames.frames = Tensor({T, 3, h, w});
  for (int t = 0; t < T; ++t) {
    Image8 img = background;
    for (const auto& s : spec.shapes) {
      const Box b = bounds_at(s, t);
      for (int y = b.y0; y < b.y1; ++y)
        for (int x = b.x0; x < b.x1; ++x)
          if (s.covers(t, x, y)) std::copy(s.color.begin(), s.color.end(), img.pixel(y, x));
    }
    const Tensor f = normalize_frame(img);
    std::copy(f.data(), f.data() + f.size(), clip.frames.frames.data() + static_cast<std::size_t>(t) * 3 * plane);
  }

  for (int t = 0; t + 1 < T; ++t) {
    FlowField flow(h, w);
    for (const auto& s : spec.shapes) {
      const Box b = swept_bounds(s, t, t + 1);
      for (int y = b.y0; y < b.y1; ++y) {
        for (int x = b.x0; x < b.x1; ++x) {
          if (s.covers(t, x, y) || s.covers(t + 1, x, y)) {
            flow.u(y, x) = -s.vx;
            flow.v(y, x) = -s.vy;
          }
        }
      }
    }
    clip.flows.push_back(std::move(flow));
  }
  return clip;
}

std::array<int, 2> direction_velocity(int direction, int speed) {
  static constexpr int dx[8] = {1, 1, 0, -1, -1, -1, 0, 1};
  static constexpr int dy[8] = {0, -1, -1, -1, 0, 1, 1, 1};
  if (direction < 0 || direction > 7) throw SpecError("direction must lie in [0, 7]");
  return {dx[direction] * speed, dy[direction] * speed};
}

SyntheticSceneSpec random_scene(const SceneSampling& p, std::mt19937_64& rng) {
  auto uniform = [&rng](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  for (int attempt = 0; attempt < 2000; ++attempt) {
    SyntheticSceneSpec spec;
    spec.height = p.height;
    spec.width = p.width;
    spec.num_frames = p.num_frames;
    spec.texture_amplitude = p.texture_amplitude;
    const auto bg = static_cast<std::uint8_t>(uniform(30, 70));
    spec.background = {bg, bg, bg};
    bool feasible = true;
    for (int i = 0; i < p.num_shapes && feasible; ++i) {
      ShapeSpec s;
      s.kind = uniform(0, 1) ? ShapeKind::ellipse : ShapeKind::rectangle;
      s.width = uniform(p.min_size, p.max_size);
      s.height = uniform(p.min_size, p.max_size);
      for (auto& c : s.color) c = static_cast<std::uint8_t>(uniform(90, 225));
      if (p.direction) {
        const auto v = direction_velocity(*p.direction, p.speed);
        s.vx = v[0];
        s.vy = v[1];
      } else {
        do {
          s.vx = uniform(-p.max_speed, p.max_speed);
          s.vy = uniform(-p.max_speed, p.max_speed);
        } while (!p.allow_static && s.vx == 0 && s.vy == 0);
      }
      const int span = p.num_frames - 1;
      const int x_lo = 1 - std::min(0, s.vx * span), x_hi = p.width - 1 - s.width - std::max(0, s.vx * span);
      const int y_lo = 1 - std::min(0, s.vy * span), y_hi = p.height - 1 - s.height - std::max(0, s.vy * span);
      if (x_lo > x_hi || y_lo > y_hi) {
        feasible = false;
        break;
      }
      s.x = uniform(x_lo, x_hi);
      s.y = uniform(y_lo, y_hi);
      spec.shapes.push_back(s);
    }
    if (!feasible) continue;
    try {
      spec.validate();
      return spec;
    } catch (const SpecError&) {
    }
  }
  throw SpecError("could not sample a valid scene; reduce shape count, size or speed");
}

void write_scene_spec(const std::filesystem::path& path, const SyntheticSceneSpec& spec) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write scene spec '" + path.string() + "'");
  out << "# dualmotion scene v1\n";
  out << "height = " << spec.height << "\nwidth = " << spec.width << "\nframes = " << spec.num_frames << '\n';
  out << "background = " << int(spec.background[0]) << ' ' << int(spec.background[1]) << ' '
      << int(spec.background[2]) << '\n';
  out << "texture = " << spec.texture_amplitude << '\n';
  for (const auto& s : spec.shapes) {
    out << "shape = " << kind_name(s.kind) << ' ' << s.width << ' ' << s.height << ' ' << int(s.color[0]) << ' '
        << int(s.color[1]) << ' ' << int(s.color[2]) << ' ' << s.x << ' ' << s.y << ' ' << s.vx << ' ' << s.vy
        << '\n';
  }
}

SyntheticSceneSpec read_scene_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open scene spec '" + path.string() + "'");
  SyntheticSceneSpec spec;
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& why) {
    throw SpecError(path.string() + ":" + std::to_string(lineno) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos) fail("expected 'key = value'");
      continue;
    }
    std::string key = line.substr(0, eq);
    key.erase(std::remove_if(key.begin(), key.end(), ::isspace), key.end());
    std::istringstream val(line.substr(eq + 1));
    if (key == "height") {
      val >> spec.height;
    } else if (key == "width") {
      val >> spec.width;
    } else if (key == "frames") {
      val >> spec.num_frames;
    } else if (key == "texture") {
      val >> spec.texture_amplitude;
    } else if (key == "background") {
      int r, g, b;
      val >> r >> g >> b;
      spec.background = {static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(b)};
    } else if (key == "shape") {
      ShapeSpec s;
      std::string kind;
      int r, g, b;
      val >> kind >> s.width >> s.height >> r >> g >> b >> s.x >> s.y >> s.vx >> s.vy;
      if (kind == "rectangle") {
        s.kind = ShapeKind::rectangle;
      } else if (kind == "ellipse") {
        s.kind = ShapeKind::ellipse;
      } else {
        fail("unknown shape kind '" + kind + "'");
      }
      s.color = {static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(b)};
      spec.shapes.push_back(s);
    } else {
      fail("unknown key '" + key + "'");
    }
    if (val.fail()) fail("malformed value for '" + key + "'");
  }
  return spec;
}

}  // namespace dualmotion
