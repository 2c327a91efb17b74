#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dualmotion/flow_io.hpp"
#include "dualmotion/frames.hpp"

namespace dualmotion {

enum class Split { train, val, test };

std::string to_string(Split s);
Split parse_split(const std::string& s);

/// One dataset item: either a folder of frames (optionally with .flo files)
/// or a scene description rendered on load.
struct ManifestEntry {
  Split split = Split::train;
  std::filesystem::path path;        // frame folder, relative to the manifest
  std::filesystem::path scene;       // scene spec file, relative to the manifest
  std::uint64_t seed = 0;            // texture seed for scene entries
  std::optional<int> label;          // class label for the representation probe
};

/// Plain-text dataset description:
///
///     # dualmotion manifest
///     version = 1
///     height = 64
///     width = 64
///     normalization = 0:255 -> -1:1
///     entry split=train path=seq_0000 label=3
///     entry split=test scene=scenes/s1.txt seed=7
///
/// Frame folders hold `*.png`/`*.jpg` frames in lexicographic order and
/// optionally `flow_XXXX.flo` files, where flow k relates frame k to k+1.
struct DatasetManifest {
  int height = 64;
  int width = 64;
  std::string normalization = "0:255 -> -1:1";
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir;

  std::vector<ManifestEntry> split(Split s) const;
  /// Throws DatasetError if an entry cannot be resolved on disk.
  void validate() const;
};

DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

/// A loaded dataset item. `flows` is empty when no ground truth exists.
struct Clip {
  FrameSequence frames;
  std::vector<FlowField> flows;
  std::optional<int> label;

  bool has_flows() const { return !flows.empty(); }
};

Clip load_entry(const DatasetManifest& manifest, const ManifestEntry& entry);
std::vector<Clip> load_split(const DatasetManifest& manifest, Split s);

}  // namespace dualmotion
