#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "icepll/errors.hpp"

namespace icepll {

// Canonical class order used everywhere: new ice, nilas, young ice,
// first-year ice, old ice, water.
enum class IceClass : int {
  NewIce = 0,
  Nilas = 1,
  YoungIce = 2,
  FirstYearIce = 3,
  OldIce = 4,
  Water = 5,
};

inline constexpr std::size_t kNumClasses = 6;

inline constexpr std::array<const char*, kNumClasses> kClassNames = {
    "new_ice", "nilas", "young_ice", "first_year_ice", "old_ice", "water"};
inline constexpr std::array<const char*, kNumClasses> kClassAbbrev = {"NI", "N", "YI", "FYI", "OI", "W"};

// Chart stage-of-development codes; water has no code.
IceClass sod_code_to_class(int code);
std::optional<int> class_to_sod_code(IceClass c);

// Partial-concentration range as fractions of polygon area.
struct ConcentrationRange {
  double lo = 0.0;
  double hi = 0.0;
};

// Two-digit chart code read as tenths: 79 covers 70-90%, 24 covers 20-40%.
// Codes whose digits descend are rejected.
ConcentrationRange parse_concentration_code(int code);

inline double midpoint(const ConcentrationRange& r) { return (r.lo + r.hi) / 2.0; }

// One polygon's chart attributes. sa/sb are the oldest and second-oldest
// stage codes, ca/cb their concentration codes, ct the total concentration.
// fa/fb (floe form) are carried through but never used by the encodings.
struct EggCode {
  std::optional<int> sa;
  std::optional<int> sb;
  std::optional<int> ca;
  std::optional<int> cb;
  std::optional<int> ct;
  std::optional<int> fa;
  std::optional<int> fb;
  bool ice_free = false;

  bool valid() const {
    if (sb && !sa) return false;
    if (cb && !ca) return false;
    return ice_free == !sa;
  }
};

enum class LabelKind { OneHot, BinaryPartial, ConfidencePartial };

// Per-class label vector under one of the three encodings.
struct LabelVector {
  std::array<double, kNumClasses> values{};
  LabelKind kind = LabelKind::OneHot;

  double sum() const;
  std::size_t argmax() const;  // ties resolve to the lowest index
};

// 1 at the oldest stage present (or water when ice free), 0 elsewhere.
LabelVector encode_one_hot(const EggCode& egg);

// 1 at every candidate class.
LabelVector encode_binary_partial(const EggCode& egg);

// Candidate entries carry the midpoint of their concentration range, then
// any surplus over 100% is normalized away.
LabelVector encode_confidence_partial(const EggCode& egg);

// When the candidate confidences sum above 1, subtract an equal share of the
// surplus from each candidate (clamping at zero) until the sum is at most 1.
// Vectors already summing to <= 1 pass through unchanged.
LabelVector normalize_surplus(LabelVector vec);

// --- polygon label file -----------------------------------------------------
//
// JSON array of records {polygon_id, CT, CA, SA, FA, CB, SB, FB, ice_free};
// absent attributes are simply omitted.

struct PolygonRecord {
  std::int64_t polygon_id = 0;
  EggCode egg;
};

std::vector<PolygonRecord> parse_polygon_json(const std::string& text);
std::vector<PolygonRecord> load_polygon_file(const std::string& path);
std::string polygon_record_to_json(const PolygonRecord& rec);

// CSV with all three encodings per polygon, 12 significant digits.
std::string encode_polygons_csv(const std::vector<PolygonRecord>& records);

}  // namespace icepll
