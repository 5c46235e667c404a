#include "icepll/labels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace icepll {

IceClass sod_code_to_class(int code) {
  switch (code) {
    case 81: return IceClass::NewIce;
    case 82: return IceClass::Nilas;
    case 83: return IceClass::YoungIce;
    case 86: return IceClass::FirstYearIce;
    case 95: return IceClass::OldIce;
    default: throw UnknownSodCode(code);
  }
}

std::optional<int> class_to_sod_code(IceClass c) {
  switch (c) {
    case IceClass::NewIce: return 81;
    case IceClass::Nilas: return 82;
    case IceClass::YoungIce: return 83;
    case IceClass::FirstYearIce: return 86;
    case IceClass::OldIce: return 95;
    case IceClass::Water: return std::nullopt;
  }
  return std::nullopt;
}

ConcentrationRange parse_concentration_code(int code) {
  if (code < 0 || code > 99) throw InvalidConcentrationCode(code);
  const int d1 = code / 10;
  const int d2 = code % 10;
  if (d1 > d2) throw InvalidConcentrationCode(code);
  return ConcentrationRange{d1 / 10.0, d2 / 10.0};
}

double LabelVector::sum() const {
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

std::size_t LabelVector::argmax() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

LabelVector encode_one_hot(const EggCode& egg) {
  LabelVector out;
  out.kind = LabelKind::OneHot;
  if (egg.ice_free) {
    out.values[static_cast<std::size_t>(IceClass::Water)] = 1.0;
    return out;
  }
  if (!egg.sa) throw MissingSod();
  out.values[static_cast<std::size_t>(sod_code_to_class(*egg.sa))] = 1.0;
  return out;
}

LabelVector encode_binary_partial(const EggCode& egg) {
  LabelVector out;
  out.kind = LabelKind::BinaryPartial;
  if (egg.ice_free) {
    out.values[static_cast<std::size_t>(IceClass::Water)] = 1.0;
    return out;
  }
  if (!egg.sa) throw MissingSod();
  out.values[static_cast<std::size_t>(sod_code_to_class(*egg.sa))] = 1.0;
  if (egg.sb) out.values[static_cast<std::size_t>(sod_code_to_class(*egg.sb))] = 1.0;
  return out;
}

LabelVector encode_confidence_partial(const EggCode& egg) {
  LabelVector out;
  out.kind = LabelKind::ConfidencePartial;
  if (egg.ice_free) {
    out.values[static_cast<std::size_t>(IceClass::Water)] = 1.0;
    return out;
  }
  if (!egg.sa) throw MissingSod();
  if (!egg.ca) throw MissingConcentration("SA without CA");
  out.values[static_cast<std::size_t>(sod_code_to_class(*egg.sa))] +=
      midpoint(parse_concentration_code(*egg.ca));
  if (egg.sb) {
    if (!egg.cb) throw MissingConcentration("SB without CB");
    out.values[static_cast<std::size_t>(sod_code_to_class(*egg.sb))] +=
        midpoint(parse_concentration_code(*egg.cb));
  }
  return normalize_surplus(out);
}

LabelVector normalize_surplus(LabelVector vec) {
  // An equal share per candidate can push a small candidate below zero; it is
  // clamped and the remaining surplus redistributed over the survivors. The
  // largest candidate can never clamp to zero, so the support stays nonempty
  // and the argmax is preserved.
  for (;;) {
    double s = 0.0;
    std::size_t k = 0;
    for (double v : vec.values) {
      s += v;
      if (v > 0.0) ++k;
    }
    if (s <= 1.0 || k == 0) return vec;
    const double share = (s - 1.0) / static_cast<double>(k);
    bool clamped = false;
    for (double& v : vec.values) {
      if (v <= 0.0) continue;
      v -= share;
      if (v < 0.0) {
        v = 0.0;
        clamped = true;
      }
    }
    if (!clamped) return vec;
  }
}

namespace {

std::optional<int> opt_int(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<int>();
}

}  // namespace

std::vector<PolygonRecord> parse_polygon_json(const std::string& text) {
  nlohmann::json doc = nlohmann::json::parse(text);
  if (!doc.is_array()) throw FormatError("polygon file must be a JSON array");
  std::vector<PolygonRecord> out;
  out.reserve(doc.size());
  for (const auto& j : doc) {
    PolygonRecord rec;
    rec.polygon_id = j.value("polygon_id", std::int64_t{0});
    rec.egg.sa = opt_int(j, "SA");
    rec.egg.sb = opt_int(j, "SB");
    rec.egg.ca = opt_int(j, "CA");
    rec.egg.cb = opt_int(j, "CB");
    rec.egg.ct = opt_int(j, "CT");
    rec.egg.fa = opt_int(j, "FA");
    rec.egg.fb = opt_int(j, "FB");
    rec.egg.ice_free = j.value("ice_free", false);
    out.push_back(rec);
  }
  return out;
}

std::vector<PolygonRecord> load_polygon_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open polygon file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_polygon_json(ss.str());
}

std::string polygon_record_to_json(const PolygonRecord& rec) {
  nlohmann::json j;
  j["polygon_id"] = rec.polygon_id;
  if (rec.egg.sa) j["SA"] = *rec.egg.sa;
  if (rec.egg.sb) j["SB"] = *rec.egg.sb;
  if (rec.egg.ca) j["CA"] = *rec.egg.ca;
  if (rec.egg.cb) j["CB"] = *rec.egg.cb;
  if (rec.egg.ct) j["CT"] = *rec.egg.ct;
  if (rec.egg.fa) j["FA"] = *rec.egg.fa;
  if (rec.egg.fb) j["FB"] = *rec.egg.fb;
  if (rec.egg.ice_free) j["ice_free"] = true;
  return j.dump();
}

std::string encode_polygons_csv(const std::vector<PolygonRecord>& records) {
  std::string out = "polygon_id";
  for (const char* prefix : {"y_o", "y_p", "y_pc"}) {
    for (const char* abbrev : kClassAbbrev) {
      out += ',';
      out += prefix;
      out += '_';
      out += abbrev;
    }
  }
  out += '\n';
  char buf[64];
  for (const auto& rec : records) {
    std::snprintf(buf, sizeof(buf), "%lld", static_cast<long long>(rec.polygon_id));
    out += buf;
    const LabelVector encodings[3] = {encode_one_hot(rec.egg), encode_binary_partial(rec.egg),
                                      encode_confidence_partial(rec.egg)};
    for (const auto& enc : encodings) {
      for (double v : enc.values) {
        std::snprintf(buf, sizeof(buf), ",%.12g", v);
        out += buf;
      }
    }
    out += '\n';
  }
  return out;
}

}  // namespace icepll
