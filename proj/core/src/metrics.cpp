#include "icepll/metrics.hpp"

#include <cstdio>

#include "icepll/labels.hpp"
#include "json.hpp"

namespace icepll {

std::int64_t ConfusionMatrix::total() const {
  std::int64_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

std::int64_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::int64_t t = 0;
  for (std::size_t p = 0; p < num_classes; ++p) t += at(truth, p);
  return t;
}

std::int64_t ConfusionMatrix::col_sum(std::size_t pred) const {
  std::int64_t t = 0;
  for (std::size_t r = 0; r < num_classes; ++r) t += at(r, pred);
  return t;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.num_classes != num_classes) throw LengthMismatch(num_classes, other.num_classes);
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  return *this;
}

ConfusionMatrix confusion(const std::vector<std::size_t>& preds,
                          const std::vector<std::size_t>& truths, std::size_t num_classes) {
  if (preds.size() != truths.size()) throw LengthMismatch(preds.size(), truths.size());
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] >= num_classes) throw IndexOutOfRange(preds[i], num_classes);
    if (truths[i] >= num_classes) throw IndexOutOfRange(truths[i], num_classes);
    ++cm.at(truths[i], preds[i]);
  }
  return cm;
}

namespace {

double ratio(std::int64_t num, std::int64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

MetricsReport compute_metrics(const ConfusionMatrix& cm) {
  const std::int64_t n = cm.total();
  if (n == 0) throw EmptyMatrix();
  const std::size_t l = cm.num_classes;

  MetricsReport r;
  r.per_class_precision.resize(l);
  r.per_class_recall.resize(l);
  r.per_class_f1.resize(l);
  r.support.resize(l);

  std::int64_t correct = 0;
  for (std::size_t i = 0; i < l; ++i) {
    const std::int64_t tp = cm.at(i, i);
    const std::int64_t fp = cm.col_sum(i) - tp;
    const std::int64_t fn = cm.row_sum(i) - tp;
    correct += tp;
    r.support[i] = cm.row_sum(i);
    r.per_class_precision[i] = ratio(tp, tp + fp);
    r.per_class_recall[i] = ratio(tp, tp + fn);
    r.per_class_f1[i] = ratio(2 * tp, 2 * tp + fp + fn);
    const double share = static_cast<double>(r.support[i]) / static_cast<double>(n);
    r.weighted_precision += share * r.per_class_precision[i];
    r.weighted_recall += share * r.per_class_recall[i];
    r.weighted_f1 += share * r.per_class_f1[i];
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return r;
}

std::string metrics_to_json(const MetricsReport& report) {
  nlohmann::json j;
  j["accuracy"] = report.accuracy;
  j["weighted_precision"] = report.weighted_precision;
  j["weighted_recall"] = report.weighted_recall;
  j["weighted_f1"] = report.weighted_f1;
  j["per_class_precision"] = report.per_class_precision;
  j["per_class_recall"] = report.per_class_recall;
  j["per_class_f1"] = report.per_class_f1;
  j["support"] = report.support;
  return j.dump(2);
}

MetricsReport metrics_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  MetricsReport r;
  r.accuracy = j.at("accuracy").get<double>();
  r.weighted_precision = j.at("weighted_precision").get<double>();
  r.weighted_recall = j.at("weighted_recall").get<double>();
  r.weighted_f1 = j.at("weighted_f1").get<double>();
  r.per_class_precision = j.at("per_class_precision").get<std::vector<double>>();
  r.per_class_recall = j.at("per_class_recall").get<std::vector<double>>();
  r.per_class_f1 = j.at("per_class_f1").get<std::vector<double>>();
  r.support = j.at("support").get<std::vector<std::int64_t>>();
  return r;
}

std::string metrics_to_table(const MetricsReport& report) {
  char buf[160];
  std::string out;
  std::snprintf(buf, sizeof(buf), "%-16s %10s %10s %10s %10s\n", "class", "precision", "recall",
                "f1", "support");
  out += buf;
  for (std::size_t i = 0; i < report.per_class_f1.size(); ++i) {
    const char* name = i < kNumClasses ? kClassNames[i] : "?";
    std::snprintf(buf, sizeof(buf), "%-16s %10.4f %10.4f %10.4f %10lld\n", name,
                  report.per_class_precision[i], report.per_class_recall[i],
                  report.per_class_f1[i], static_cast<long long>(report.support[i]));
    out += buf;
  }
  std::snprintf(buf, sizeof(buf),
                "\naccuracy %.4f  weighted precision %.4f  weighted recall %.4f  weighted f1 %.4f\n",
                report.accuracy, report.weighted_precision, report.weighted_recall,
                report.weighted_f1);
  out += buf;
  return out;
}

std::string confusion_to_csv(const ConfusionMatrix& cm) {
  std::string out = "true\\pred";
  for (std::size_t p = 0; p < cm.num_classes; ++p) {
    out += ',';
    out += p < kNumClasses ? kClassNames[p] : std::to_string(p);
  }
  out += '\n';
  for (std::size_t t = 0; t < cm.num_classes; ++t) {
    out += t < kNumClasses ? kClassNames[t] : std::to_string(t);
    for (std::size_t p = 0; p < cm.num_classes; ++p) {
      out += ',';
      out += std::to_string(cm.at(t, p));
    }
    out += '\n';
  }
  return out;
}

}  // namespace icepll
