#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "icepll/errors.hpp"
#include "icepll/labels.hpp"
#include "icepll/tensor.hpp"

namespace icepll {

// One labeled patch: 3 channels (co-pol, cross-pol and incidence-angle
// analogs) plus the three encodings of its polygon's attributes.
struct PatchSample {
  Tensor pixels;  // [3, H, W]
  LabelVector one_hot;
  LabelVector binary_partial;
  LabelVector confidence_partial;
  std::int64_t polygon_id = 0;
  double ca_fraction = 0.0;      // midpoint concentration of the oldest type
  double border_distance = 0.0;  // meters from patch center to a polygon border

  std::size_t true_class() const { return one_hot.argmax(); }
  const LabelVector& label(LabelKind kind) const;
};

// Recipe for the synthetic chart-labeled dataset. Each class renders as
// Gaussian texture with its own per-channel statistics; a fraction of
// polygons carry a second, younger ice type mixed in by concentration.
struct SyntheticSpec {
  std::array<std::array<double, 3>, kNumClasses> channel_means{};
  std::array<std::array<double, 3>, kNumClasses> channel_stds{};
  std::array<double, kNumClasses> class_frequencies{};
  double two_type_fraction = 0.3;
  std::vector<int> primary_concentration_codes = {68, 79, 89};
  std::vector<int> secondary_concentration_codes = {13, 24};
  std::size_t patch = 16;
  std::size_t count = 6000;
  double border_lo_m = 2000.0;
  double border_hi_m = 10000.0;

  static SyntheticSpec defaults();
  void validate() const;  // throws InvalidSpec
};

std::string synthetic_spec_to_json(const SyntheticSpec& spec);
SyntheticSpec synthetic_spec_from_json(const std::string& text);

// Deterministic per (spec, seed); each sample owns an independent seeded
// stream, so generation order is irrelevant.
std::vector<PatchSample> generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

// --- scene files -------------------------------------------------------------
//
// Raster: one JSON header line {width, height, channels, pixel_spacing_m}
// followed by raw little-endian float32, channel-major.
// Annotation: one JSON header line {width, height, polygons:[...]} followed by
// width*height little-endian int32 polygon ids and width*height float32
// border distances in meters.

struct SceneRaster {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  double pixel_spacing_m = 0.0;
  std::vector<float> pixels;  // channel-major
};

struct SceneAnnotation {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::int32_t> polygon_ids;
  std::vector<float> border_m;
  std::vector<PolygonRecord> polygons;
};

void write_raster(const std::string& path, const SceneRaster& raster);
SceneRaster read_raster(const std::string& path);
void write_annotation(const std::string& path, const SceneAnnotation& ann);
SceneAnnotation read_annotation(const std::string& path);

// Tiles the raster into non-overlapping patch x patch windows (remainders at
// the right/bottom edges are discarded) and labels each tile by the polygon
// under its center pixel.
std::vector<PatchSample> ingest_scene(const std::string& raster_path,
                                      const std::string& annotation_path, std::size_t patch);

// Keeps samples whose oldest-type concentration exceeds min_ca and whose
// center lies at least min_border meters from any polygon border.
std::vector<PatchSample> filter_samples(const std::vector<PatchSample>& samples,
                                        double min_ca = 0.5, double min_border = 2000.0);

// --- splitting ---------------------------------------------------------------

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
  std::array<double, 3> ratios{0.81, 0.09, 0.10};
  std::uint64_t seed = 0;
};

// Seeded shuffle then contiguous partition with largest-remainder rounding.
DatasetSplit split(std::size_t sample_count, std::array<double, 3> ratios, std::uint64_t seed);

// Class histogram of argmax labels under the chosen encoding.
std::vector<std::size_t> class_counts(const std::vector<PatchSample>& samples,
                                      const std::vector<std::size_t>& indices,
                                      LabelKind kind = LabelKind::OneHot);
std::vector<std::size_t> class_counts(const std::vector<PatchSample>& samples,
                                      LabelKind kind = LabelKind::OneHot);

// --- dataset directory ---------------------------------------------------------
//
// manifest.json lists the sample file and split membership; samples.bin holds
// the packed samples.

struct Dataset {
  std::vector<PatchSample> samples;
  DatasetSplit split;
};

void save_dataset(const std::string& dir, const Dataset& dataset);
Dataset load_dataset(const std::string& dir);

// Subset views used by the trainer.
std::vector<Tensor> gather_inputs(const std::vector<PatchSample>& samples,
                                  const std::vector<std::size_t>& indices);
std::vector<std::vector<double>> gather_labels(const std::vector<PatchSample>& samples,
                                               const std::vector<std::size_t>& indices,
                                               LabelKind kind);
std::vector<std::size_t> gather_true_classes(const std::vector<PatchSample>& samples,
                                             const std::vector<std::size_t>& indices);

}  // namespace icepll
