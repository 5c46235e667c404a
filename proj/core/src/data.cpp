#include "icepll/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "binio.hpp"
#include "icepll/rng.hpp"
#include "json.hpp"

namespace icepll {

const LabelVector& PatchSample::label(LabelKind kind) const {
  switch (kind) {
    case LabelKind::OneHot: return one_hot;
    case LabelKind::BinaryPartial: return binary_partial;
    case LabelKind::ConfidencePartial: return confidence_partial;
  }
  return one_hot;
}

SyntheticSpec SyntheticSpec::defaults() {
  SyntheticSpec s;
  // Channel statistics are spread far enough apart that classes are cleanly
  // separable; a mixed patch lands between its two classes.
  s.channel_means = {{
      {0.20, 0.80, 0.30},  // new ice
      {0.55, 0.15, 0.70},  // nilas
      {0.85, 0.50, 0.10},  // young ice
      {0.30, 0.45, 0.95},  // first-year ice
      {0.90, 0.90, 0.55},  // old ice
      {0.05, 0.10, 0.15},  // water
  }};
  for (auto& row : s.channel_stds) row = {0.15, 0.15, 0.15};
  s.class_frequencies = {0.25, 0.10, 0.15, 0.20, 0.15, 0.15};
  return s;
}

void SyntheticSpec::validate() const {
  double fsum = 0.0;
  for (double f : class_frequencies) {
    if (f < 0.0) throw InvalidSpec("class frequencies must be nonnegative");
    fsum += f;
  }
  if (std::abs(fsum - 1.0) > 1e-9) throw InvalidSpec("class frequencies must sum to 1");
  for (const auto& row : channel_stds)
    for (double sd : row)
      if (!(sd > 0.0)) throw InvalidSpec("channel standard deviations must be positive");
  if (two_type_fraction < 0.0 || two_type_fraction > 1.0)
    throw InvalidSpec("two_type_fraction must lie in [0, 1]");
  if (patch == 0 || count == 0) throw InvalidSpec("patch and count must be positive");
  if (primary_concentration_codes.empty() || secondary_concentration_codes.empty())
    throw InvalidSpec("concentration code pools must be nonempty");
  for (int code : primary_concentration_codes) parse_concentration_code(code);
  for (int code : secondary_concentration_codes) parse_concentration_code(code);
  if (!(border_lo_m <= border_hi_m)) throw InvalidSpec("border distance range inverted");
}

std::string synthetic_spec_to_json(const SyntheticSpec& spec) {
  nlohmann::json j;
  j["channel_means"] = spec.channel_means;
  j["channel_stds"] = spec.channel_stds;
  j["class_frequencies"] = spec.class_frequencies;
  j["two_type_fraction"] = spec.two_type_fraction;
  j["primary_concentration_codes"] = spec.primary_concentration_codes;
  j["secondary_concentration_codes"] = spec.secondary_concentration_codes;
  j["patch"] = spec.patch;
  j["count"] = spec.count;
  j["border_lo_m"] = spec.border_lo_m;
  j["border_hi_m"] = spec.border_hi_m;
  return j.dump(2);
}

SyntheticSpec synthetic_spec_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  SyntheticSpec s = SyntheticSpec::defaults();
  if (j.contains("channel_means")) s.channel_means = j["channel_means"];
  if (j.contains("channel_stds")) s.channel_stds = j["channel_stds"];
  if (j.contains("class_frequencies")) s.class_frequencies = j["class_frequencies"];
  if (j.contains("two_type_fraction")) s.two_type_fraction = j["two_type_fraction"];
  if (j.contains("primary_concentration_codes"))
    s.primary_concentration_codes = j["primary_concentration_codes"].get<std::vector<int>>();
  if (j.contains("secondary_concentration_codes"))
    s.secondary_concentration_codes = j["secondary_concentration_codes"].get<std::vector<int>>();
  if (j.contains("patch")) s.patch = j["patch"];
  if (j.contains("count")) s.count = j["count"];
  if (j.contains("border_lo_m")) s.border_lo_m = j["border_lo_m"];
  if (j.contains("border_hi_m")) s.border_hi_m = j["border_hi_m"];
  return s;
}

namespace {

std::size_t draw_class(Rng& rng, const std::array<double, kNumClasses>& freqs) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    acc += freqs[c];
    if (u < acc) return c;
  }
  // Frequencies sum to 1 within tolerance; fall back to the last populated class.
  for (std::size_t c = kNumClasses; c-- > 0;) {
    if (freqs[c] > 0.0) return c;
  }
  return kNumClasses - 1;
}

PatchSample synthesize_one(const SyntheticSpec& spec, std::uint64_t stream_seed,
                           std::int64_t polygon_id) {
  Rng rng(stream_seed);
  const std::size_t primary = draw_class(rng, spec.class_frequencies);

  EggCode egg;
  std::size_t secondary = primary;
  double secondary_mid = 0.0;
  if (primary == static_cast<std::size_t>(IceClass::Water)) {
    egg.ice_free = true;
  } else {
    egg.sa = *class_to_sod_code(static_cast<IceClass>(primary));
    egg.ca = spec.primary_concentration_codes[rng.uniform_index(
        spec.primary_concentration_codes.size())];
    // A second, younger stage (lower canonical index) appears on a configured
    // fraction of polygons; new ice has nothing younger to pair with.
    if (primary > 0 && rng.bernoulli(spec.two_type_fraction)) {
      secondary = rng.uniform_index(primary);
      egg.sb = *class_to_sod_code(static_cast<IceClass>(secondary));
      egg.cb = spec.secondary_concentration_codes[rng.uniform_index(
          spec.secondary_concentration_codes.size())];
      secondary_mid = midpoint(parse_concentration_code(*egg.cb));
    }
  }

  PatchSample sample;
  sample.polygon_id = polygon_id;
  sample.one_hot = encode_one_hot(egg);
  sample.binary_partial = encode_binary_partial(egg);
  sample.confidence_partial = encode_confidence_partial(egg);
  sample.ca_fraction = egg.ice_free ? 1.0 : midpoint(parse_concentration_code(*egg.ca));
  sample.border_distance = rng.uniform(spec.border_lo_m, spec.border_hi_m);

  const std::size_t h = spec.patch, w = spec.patch;
  // The younger type fills a contiguous band of rows at the bottom of the
  // patch, sized by its midpoint concentration.
  const std::size_t secondary_rows =
      secondary == primary ? 0
                           : static_cast<std::size_t>(std::llround(secondary_mid * static_cast<double>(h)));
  sample.pixels = Tensor({3, h, w});
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      const std::size_t cls = (h - y) <= secondary_rows ? secondary : primary;
      double* row = sample.pixels.data.data() + (c * h + y) * w;
      for (std::size_t x = 0; x < w; ++x) {
        row[x] = rng.normal(spec.channel_means[cls][c], spec.channel_stds[cls][c]);
      }
    }
  }
  return sample;
}

}  // namespace

std::vector<PatchSample> generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::vector<PatchSample> out;
  out.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) {
    out.push_back(synthesize_one(spec, derive_seed(seed, i), static_cast<std::int64_t>(i)));
  }
  return out;
}

void write_raster(const std::string& path, const SceneRaster& raster) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open raster for writing: " + path);
  nlohmann::json header;
  header["width"] = raster.width;
  header["height"] = raster.height;
  header["channels"] = raster.channels;
  header["pixel_spacing_m"] = raster.pixel_spacing_m;
  out << header.dump() << '\n';
  for (float v : raster.pixels) binio::write_f32(out, v);
}

SceneRaster read_raster(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open raster: " + path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("missing raster header: " + path);
  SceneRaster r;
  try {
    nlohmann::json header = nlohmann::json::parse(line);
    r.width = header.at("width");
    r.height = header.at("height");
    r.channels = header.at("channels");
    r.pixel_spacing_m = header.at("pixel_spacing_m");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad raster header: " + std::string(e.what()));
  }
  if (r.channels != 3) throw ChannelCountError(r.channels);
  r.pixels.resize(r.width * r.height * r.channels);
  for (float& v : r.pixels) v = binio::read_f32(in);
  return r;
}

void write_annotation(const std::string& path, const SceneAnnotation& ann) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open annotation for writing: " + path);
  nlohmann::json header;
  header["width"] = ann.width;
  header["height"] = ann.height;
  nlohmann::json polys = nlohmann::json::array();
  for (const auto& rec : ann.polygons) polys.push_back(nlohmann::json::parse(polygon_record_to_json(rec)));
  header["polygons"] = polys;
  out << header.dump() << '\n';
  for (std::int32_t v : ann.polygon_ids) binio::write_i32(out, v);
  for (float v : ann.border_m) binio::write_f32(out, v);
}

SceneAnnotation read_annotation(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open annotation: " + path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("missing annotation header: " + path);
  SceneAnnotation a;
  try {
    nlohmann::json header = nlohmann::json::parse(line);
    a.width = header.at("width");
    a.height = header.at("height");
    for (const auto& p : header.at("polygons")) {
      auto recs = parse_polygon_json("[" + p.dump() + "]");
      a.polygons.push_back(recs.front());
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad annotation header: " + std::string(e.what()));
  }
  a.polygon_ids.resize(a.width * a.height);
  for (auto& v : a.polygon_ids) v = binio::read_i32(in);
  a.border_m.resize(a.width * a.height);
  for (auto& v : a.border_m) v = binio::read_f32(in);
  return a;
}

std::vector<PatchSample> ingest_scene(const std::string& raster_path,
                                      const std::string& annotation_path, std::size_t patch) {
  if (patch == 0) throw InvalidSpec("patch size must be positive");
  const SceneRaster raster = read_raster(raster_path);
  const SceneAnnotation ann = read_annotation(annotation_path);
  if (ann.width != raster.width || ann.height != raster.height)
    throw FormatError("annotation grid size differs from raster");

  std::unordered_map<std::int64_t, const PolygonRecord*> table;
  for (const auto& rec : ann.polygons) table[rec.polygon_id] = &rec;

  const std::size_t tiles_y = raster.height / patch;
  const std::size_t tiles_x = raster.width / patch;
  std::vector<PatchSample> out;
  out.reserve(tiles_y * tiles_x);
  for (std::size_t ty = 0; ty < tiles_y; ++ty) {
    for (std::size_t tx = 0; tx < tiles_x; ++tx) {
      const std::size_t y0 = ty * patch, x0 = tx * patch;
      const std::size_t cy = y0 + patch / 2, cx = x0 + patch / 2;
      const std::size_t center = cy * raster.width + cx;
      const std::int64_t pid = ann.polygon_ids[center];
      auto it = table.find(pid);
      if (it == table.end())
        throw FormatError("polygon id " + std::to_string(pid) + " missing from annotation table");
      const PolygonRecord& rec = *it->second;

      PatchSample s;
      s.polygon_id = pid;
      s.one_hot = encode_one_hot(rec.egg);
      s.binary_partial = encode_binary_partial(rec.egg);
      s.confidence_partial = encode_confidence_partial(rec.egg);
      s.ca_fraction =
          rec.egg.ice_free ? 1.0 : midpoint(parse_concentration_code(rec.egg.ca.value()));
      s.border_distance = ann.border_m[center];
      s.pixels = Tensor({3, patch, patch});
      for (std::size_t c = 0; c < 3; ++c) {
        const float* plane = raster.pixels.data() + c * raster.width * raster.height;
        for (std::size_t y = 0; y < patch; ++y) {
          double* dst = s.pixels.data.data() + (c * patch + y) * patch;
          const float* src = plane + (y0 + y) * raster.width + x0;
          for (std::size_t x = 0; x < patch; ++x) dst[x] = static_cast<double>(src[x]);
        }
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::vector<PatchSample> filter_samples(const std::vector<PatchSample>& samples, double min_ca,
                                        double min_border) {
  std::vector<PatchSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.ca_fraction > min_ca && s.border_distance >= min_border) out.push_back(s);
  }
  return out;
}

DatasetSplit split(std::size_t sample_count, std::array<double, 3> ratios, std::uint64_t seed) {
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r > 0.0)) throw InvalidRatios("ratios must be positive");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InvalidRatios("ratios must sum to 1");

  std::vector<std::size_t> order(sample_count);
  for (std::size_t i = 0; i < sample_count; ++i) order[i] = i;
  Rng rng(derive_seed(seed, 0x5b117));
  rng.shuffle(order);

  // Largest-remainder rounding of the three bucket sizes.
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> fractional{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double target = ratios[i] * static_cast<double>(sample_count);
    sizes[i] = static_cast<std::size_t>(target);
    fractional[i] = target - static_cast<double>(sizes[i]);
    assigned += sizes[i];
  }
  while (assigned < sample_count) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < 3; ++i) {
      if (fractional[i] > fractional[best]) best = i;
    }
    ++sizes[best];
    fractional[best] = -1.0;
    ++assigned;
  }

  DatasetSplit out;
  out.ratios = ratios;
  out.seed = seed;
  auto cursor = order.begin();
  out.train.assign(cursor, cursor + sizes[0]);
  cursor += sizes[0];
  out.val.assign(cursor, cursor + sizes[1]);
  cursor += sizes[1];
  out.test.assign(cursor, cursor + sizes[2]);
  return out;
}

std::vector<std::size_t> class_counts(const std::vector<PatchSample>& samples,
                                      const std::vector<std::size_t>& indices, LabelKind kind) {
  if (indices.empty()) throw EmptyDataset();
  std::vector<std::size_t> counts(kNumClasses, 0);
  for (std::size_t i : indices) ++counts[samples[i].label(kind).argmax()];
  return counts;
}

std::vector<std::size_t> class_counts(const std::vector<PatchSample>& samples, LabelKind kind) {
  if (samples.empty()) throw EmptyDataset();
  std::vector<std::size_t> counts(kNumClasses, 0);
  for (const auto& s : samples) ++counts[s.label(kind).argmax()];
  return counts;
}

namespace {

void write_label(std::ostream& out, const LabelVector& v) {
  binio::write_u32(out, static_cast<std::uint32_t>(v.kind));
  for (double x : v.values) binio::write_f64(out, x);
}

LabelVector read_label(std::istream& in) {
  LabelVector v;
  v.kind = static_cast<LabelKind>(binio::read_u32(in));
  for (double& x : v.values) x = binio::read_f64(in);
  return v;
}

}  // namespace

void save_dataset(const std::string& dir, const Dataset& dataset) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  const std::string samples_file = "samples.bin";
  {
    std::ofstream out(fs::path(dir) / samples_file, std::ios::binary);
    if (!out) throw FormatError("cannot write dataset samples in " + dir);
    binio::write_u64(out, dataset.samples.size());
    for (const auto& s : dataset.samples) {
      binio::write_u64(out, static_cast<std::uint64_t>(s.polygon_id));
      binio::write_f64(out, s.ca_fraction);
      binio::write_f64(out, s.border_distance);
      write_label(out, s.one_hot);
      write_label(out, s.binary_partial);
      write_label(out, s.confidence_partial);
      binio::write_u32(out, static_cast<std::uint32_t>(s.pixels.shape.size()));
      for (std::size_t d : s.pixels.shape) binio::write_u64(out, d);
      for (double v : s.pixels.data) binio::write_f64(out, v);
    }
  }

  nlohmann::json manifest;
  manifest["version"] = 1;
  manifest["count"] = dataset.samples.size();
  manifest["sample_files"] = {samples_file};
  manifest["split"] = {{"train", dataset.split.train},
                       {"val", dataset.split.val},
                       {"test", dataset.split.test},
                       {"ratios", dataset.split.ratios},
                       {"seed", dataset.split.seed}};
  std::ofstream mout(fs::path(dir) / "manifest.json");
  if (!mout) throw FormatError("cannot write manifest in " + dir);
  mout << manifest.dump(2) << '\n';
}

Dataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream min(fs::path(dir) / "manifest.json");
  if (!min) throw FormatError("cannot open manifest in " + dir);
  nlohmann::json manifest;
  try {
    min >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad manifest: " + std::string(e.what()));
  }

  Dataset out;
  out.split.train = manifest.at("split").at("train").get<std::vector<std::size_t>>();
  out.split.val = manifest.at("split").at("val").get<std::vector<std::size_t>>();
  out.split.test = manifest.at("split").at("test").get<std::vector<std::size_t>>();
  out.split.ratios = manifest.at("split").at("ratios");
  out.split.seed = manifest.at("split").at("seed");

  for (const auto& file : manifest.at("sample_files")) {
    std::ifstream in(fs::path(dir) / file.get<std::string>(), std::ios::binary);
    if (!in) throw FormatError("cannot open sample file in " + dir);
    const std::uint64_t count = binio::read_u64(in);
    for (std::uint64_t i = 0; i < count; ++i) {
      PatchSample s;
      s.polygon_id = static_cast<std::int64_t>(binio::read_u64(in));
      s.ca_fraction = binio::read_f64(in);
      s.border_distance = binio::read_f64(in);
      s.one_hot = read_label(in);
      s.binary_partial = read_label(in);
      s.confidence_partial = read_label(in);
      const std::uint32_t ndim = binio::read_u32(in);
      std::vector<std::size_t> shape(ndim);
      for (auto& d : shape) d = binio::read_u64(in);
      s.pixels = Tensor(shape);
      for (double& v : s.pixels.data) v = binio::read_f64(in);
      out.samples.push_back(std::move(s));
    }
  }
  return out;
}

std::vector<Tensor> gather_inputs(const std::vector<PatchSample>& samples,
                                  const std::vector<std::size_t>& indices) {
  std::vector<Tensor> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(samples[i].pixels);
  return out;
}

std::vector<std::vector<double>> gather_labels(const std::vector<PatchSample>& samples,
                                               const std::vector<std::size_t>& indices,
                                               LabelKind kind) {
  std::vector<std::vector<double>> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    const auto& v = samples[i].label(kind).values;
    out.emplace_back(v.begin(), v.end());
  }
  return out;
}

std::vector<std::size_t> gather_true_classes(const std::vector<PatchSample>& samples,
                                             const std::vector<std::size_t>& indices) {
  std::vector<std::size_t> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(samples[i].true_class());
  return out;
}

}  // namespace icepll
