#include "dualmotion/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "dualmotion/errors.hpp"
#include "dualmotion/synthetic.hpp"

namespace dualmotion {

namespace fs = std::filesystem;

std::string to_string(Split s) {
  switch (s) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
  }
  return "train";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw DatasetError("unknown split tag '" + s + "'");
}

std::vector<ManifestEntry> DatasetManifest::split(Split s) const {
  std::vector<ManifestEntry> out;
  std::copy_if(entries.begin(), entries.end(), std::back_inserter(out),
               [s](const ManifestEntry& e) { return e.split == s; });
  return out;
}

void DatasetManifest::validate() const {
  if (height % 8 || width % 8 || height <= 0 || width <= 0) {
    throw DatasetError("manifest frame size must be positive multiples of 8");
  }
  for (const auto& e : entries) {
    if (e.path.empty() == e.scene.empty()) throw DatasetError("manifest entry needs exactly one of path= or scene=");
    const fs::path p = base_dir / (e.path.empty() ? e.scene : e.path);
    if (!fs::exists(p)) throw DatasetError("manifest entry '" + p.string() + "' does not exist");
  }
}

DatasetManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open manifest '" + path.string() + "'");
  DatasetManifest m;
  m.base_dir = path.parent_path();
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& why) {
    throw DatasetError(path.string() + ":" + std::to_string(lineno) + ": " + why);
  };
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.rfind("entry ", 0) == 0) {
      ManifestEntry e;
      std::istringstream tokens(line.substr(6));
      std::string tok;
      while (tokens >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) fail("malformed entry field '" + tok + "'");
        const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
        if (key == "split") {
          e.split = parse_split(val);
        } else if (key == "path") {
          e.path = val;
        } else if (key == "scene") {
          e.scene = val;
        } else if (key == "seed") {
          e.seed = std::stoull(val);
        } else if (key == "label") {
          e.label = std::stoi(val);
        } else {
          fail("unknown entry field '" + key + "'");
        }
      }
      if (e.path.empty() == e.scene.empty()) fail("entry needs exactly one of path= or scene=");
      m.entries.push_back(std::move(e));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected 'key = value' or 'entry ...'");
    const std::string key = trim(line.substr(0, eq)), val = trim(line.substr(eq + 1));
    if (key == "version") {
      if (val != "1") fail("unsupported manifest version " + val);
    } else if (key == "height") {
      m.height = std::stoi(val);
    } else if (key == "width") {
      m.width = std::stoi(val);
    } else if (key == "normalization") {
      m.normalization = val;
    } else {
      fail("unknown key '" + key + "'");
    }
  }
  return m;
}

void write_manifest(const fs::path& path, const DatasetManifest& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest '" + path.string() + "'");
  out << "# dualmotion manifest\nversion = 1\n";
  out << "height = " << m.height << "\nwidth = " << m.width << "\nnormalization = " << m.normalization << '\n';
  for (const auto& e : m.entries) {
    out << "entry split=" << to_string(e.split);
    if (!e.path.empty()) out << " path=" << e.path.generic_string();
    if (!e.scene.empty()) out << " scene=" << e.scene.generic_string() << " seed=" << e.seed;
    if (e.label) out << " label=" << *e.label;
    out << '\n';
  }
}

Clip load_entry(const DatasetManifest& m, const ManifestEntry& e) {
  Clip clip;
  clip.label = e.label;
  if (!e.scene.empty()) {
    SyntheticSceneSpec spec = read_scene_spec(m.base_dir / e.scene);
    if (spec.height != m.height || spec.width != m.width) {
      throw DatasetError("scene '" + e.scene.string() + "' size differs from manifest size");
    }
    SyntheticClip s = generate_moving_shapes(spec, e.seed);
    clip.frames = std::move(s.frames);
    clip.frames.source_id = e.scene.generic_string();
    clip.flows = std::move(s.flows);
    return clip;
  }
  const fs::path dir = m.base_dir / e.path;
  clip.frames = load_frame_folder(dir, m.height, m.width);
  clip.frames.source_id = e.path.generic_string();
  std::vector<fs::path> flo;
  for (const auto& f : fs::directory_iterator(dir)) {
    if (f.is_regular_file() && f.path().extension() == ".flo") flo.push_back(f.path());
  }
  std::sort(flo.begin(), flo.end());
  if (!flo.empty()) {
    if (static_cast<int>(flo.size()) != clip.frames.length() - 1) {
      throw DatasetError("'" + dir.string() + "' has " + std::to_string(flo.size()) + " flow files for " +
                         std::to_string(clip.frames.length()) + " frames");
    }
    for (const auto& f : flo) {
      FlowField flow = read_flo(f);
      if (flow.height() != m.height || flow.width() != m.width) {
        throw DatasetError("flow '" + f.string() + "' size differs from manifest size");
      }
      clip.flows.push_back(std::move(flow));
    }
  }
  return clip;
}

std::vector<Clip> load_split(const DatasetManifest& m, Split s) {
  std::vector<Clip> out;
  for (const auto& e : m.split(s)) out.push_back(load_entry(m, e));
  return out;
}

}  // namespace dualmotion
