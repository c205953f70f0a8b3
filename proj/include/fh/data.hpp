#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fh/codec.hpp"
#include "fh/image.hpp"

namespace fh {

enum class ValueDomain { Raw0To255, Normalized0To1 };

struct FundusImage {
  RgbImage pixels;
  ValueDomain domain = ValueDomain::Raw0To255;
  /// CLAHE has been applied.
  bool preprocessed = false;
};

enum class Split { Train, Val, Test, Unassigned };
enum class AugmentationTag { None, HFlip, VFlip, HVFlip };

std::string to_string(Split s);
std::string to_string(AugmentationTag t);

struct SamplePair {
  std::string id;
  /// Id of the image this pair was augmented from (equal to id when unaugmented).
  std::string source_id;
  FundusImage fundus;
  HeightmapImage target;
  Split split = Split::Unassigned;
  AugmentationTag augmentation = AugmentationTag::None;
};

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
  void validate() const;
};

struct ClaheConfig {
  double clip_limit = 2.0;
  int tiles_x = 8;
  int tiles_y = 8;
  /// Equalise luminance only and rescale RGB, instead of each channel separately.
  bool luminance_only = false;
};

/// Contrast-limited adaptive histogram equalisation of a raw 0..255 image:
/// per-tile histograms clipped at max(1, clip_limit * tile_pixels / 256) with
/// the excess spread evenly, mapped through the tile CDF and blended
/// bilinearly between tile centres. Output values are integers in 0..255.
FundusImage clahe(const FundusImage& img, const ClaheConfig& cfg = {});

/// Divides by 255. Throws DataError if the image is already normalised.
FundusImage normalize(const FundusImage& img);

/// Identity, horizontal, vertical and double flips, applied to both members.
/// Throws std::invalid_argument for a pair that is already augmented.
std::vector<SamplePair> augment_flips(const SamplePair& pair);
std::vector<SamplePair> augment_all(const std::vector<SamplePair>& pairs);

struct Partition {
  std::vector<SamplePair> train, val, test;
};

/// Seeded partition by source id: every augmented variant of a source lands in
/// the same split. Per-split source counts are round(ratio * sources), with
/// the test split taking the remainder.
Partition make_splits(const std::vector<SamplePair>& pairs, const SplitRatios& ratios,
                      std::uint64_t seed);

/// Permutation of 0..n-1 determined by (seed, epoch) alone.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch);

struct SynthConfig {
  int height = 128;
  int width = 128;
  int min_bumps = 1;
  int max_bumps = 4;
  int min_vessels = 2;
  int max_vessels = 5;
};

/// Synthetic pairs: a sum of Gaussian bumps (amplitudes up to 500 um, clipped
/// to the colour range) encoded as the target, and a rendered pseudo-fundus
/// (orange base, Lambertian shading of the field, dark Bezier vessels) in raw
/// 0..255 integers. Sample i depends only on (seed, i).
std::vector<SamplePair> synth_generate(int n, std::uint64_t seed, const SynthConfig& cfg = {},
                                       const ColorMap& cmap = ColorMap{});
HeightField synth_height_field(std::uint64_t seed, int index, const SynthConfig& cfg);

// --- on-disk corpus ------------------------------------------------------------

struct ManifestRow {
  std::string id;
  std::string fundus_path;
  std::string heightmap_path;
};

/// Parses root/manifest.csv (header id,fundus_path,heightmap_path). Paths are
/// relative to root. Malformed rows raise DataError with the line number.
std::vector<ManifestRow> read_manifest(const std::string& root);
void write_manifest(const std::string& root, const std::vector<ManifestRow>& rows);

/// Writes root/fundus/<id>.png, root/heightmap/<id>.png and the manifest.
/// Fundus pixels are written as-is when raw, times 255 when normalised.
void write_corpus(const std::string& root, const std::vector<SamplePair>& pairs);

struct IngestConfig {
  int size = 128;
  bool apply_clahe = true;
  ClaheConfig clahe;
};

/// Reads a corpus: resize to size x size (bilinear), optionally CLAHE, then
/// normalise. Targets are resized and scaled to [0, 1].
std::vector<SamplePair> load_corpus(const std::string& root, const IngestConfig& cfg);

/// Reads a corpus that is already at its final size without further processing
/// (the layout written by `prep`).
std::vector<SamplePair> load_prepared(const std::string& root);

}  // namespace fh
