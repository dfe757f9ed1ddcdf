#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "shadowstorm/image.hpp"

namespace shadowstorm {

struct SynthConfig {
  std::uint64_t seed = 0;
  int count = 1;
  int height = 64;
  int width = 64;
  double k_min = 0.4;
  double k_max = 0.8;
  double area_min = 0.1;
  double area_max = 0.4;
  /// Box-blur radius that softens the mask edge into a penumbra; 0 keeps it hard.
  int blur_radius = 2;

  void validate() const;
};

struct Triplet {
  Image shadow;
  ShadowMask mask;
  Image shadow_free;
};

struct TripletInfo {
  int index = 0;
  double k = 0.0;
  double area_fraction = 0.0;
  std::uint64_t seed = 0;
};

struct GeneratedTriplet {
  Triplet triplet;
  TripletInfo info;
};

/// Seed of triplet `index`; every random choice of the triplet derives from it.
std::uint64_t triplet_seed(std::uint64_t seed, int index);

/**
 * Procedural RGB scene (2-4 smooth components placed at a random level in [0.45, 0.7]
 * with a spread of 0.05-0.15, so values stay within [0.15, 0.95]),
 * a filled ellipse or convex polygon mask, and
 * shadow = shadow_free * (1 - k * box_blur(mask)).
 * Mask placements whose area fraction misses the configured range, or whose
 * shadow region is not darker on average than the rest, are redrawn up to 100 times.
 */
GeneratedTriplet gen_triplet(const SynthConfig& config, int index);

/// shadow = free * (1 - k * soft_mask), soft_mask being H x W in [0, 1].
Image attenuate(const Image& shadow_free, const std::vector<double>& soft_mask, double k);

/// Mask softened by a border-normalized box blur of `radius`.
std::vector<double> soften_mask(const ShadowMask& mask, int radius);

inline constexpr const char* kManifestName = "manifest.tsv";

/// Writes shadow_%04d.ppm, mask_%04d.pgm, free_%04d.ppm and manifest.tsv into `out_dir`.
std::vector<TripletInfo> gen_dataset(const SynthConfig& config, const std::filesystem::path& out_dir);

std::vector<TripletInfo> read_manifest(const std::filesystem::path& path);

struct DatasetEntry {
  int index = 0;
  Triplet triplet;
};

/// Loads every complete shadow_/mask_/free_ triplet in `dir`, sorted by index.
/// A missing member or a shape disagreement is an error naming the index.
std::vector<DatasetEntry> load_triplet_dir(const std::filesystem::path& dir);

std::string triplet_file_name(const std::string& role, int index);

}  // namespace shadowstorm
