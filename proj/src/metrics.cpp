#include "calgate/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "calgate/error.hpp"
#include "calgate/modelmath.hpp"

namespace calgate {

using json = nlohmann::json;

int bin_index(double confidence, int n_bins) {
  if (n_bins < 1) throw ValidationError("n_bins must be >= 1");
  if (!(confidence >= 0.0 && confidence <= 1.0)) throw ValidationError("confidence outside [0,1]");
  const int b = static_cast<int>(std::floor(confidence * n_bins));
  return std::clamp(b, 0, n_bins - 1);
}

EceResult ece(std::span<const double> confidences, std::span<const int> correct, int n_bins) {
  if (confidences.empty()) throw ValidationError("ece: empty input");
  if (confidences.size() != correct.size()) throw ValidationError("ece: length mismatch");
  if (n_bins < 1) throw ValidationError("ece: n_bins must be >= 1");

  std::vector<double> conf_sum(n_bins, 0.0);
  std::vector<std::int64_t> hits(n_bins, 0);
  std::vector<std::int64_t> counts(n_bins, 0);
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    const double c = confidences[i];
    if (!(c >= 0.0 && c <= 1.0)) throw ValidationError("ece: confidence outside [0,1]");
    const int b = bin_index(c, n_bins);
    conf_sum[b] += c;
    hits[b] += correct[i] ? 1 : 0;
    ++counts[b];
  }

  EceResult out;
  const double n = static_cast<double>(confidences.size());
  out.bins.reserve(n_bins);
  for (int b = 0; b < n_bins; ++b) {
    ReliabilityBin bin;
    bin.lo = static_cast<double>(b) / n_bins;
    bin.hi = static_cast<double>(b + 1) / n_bins;
    bin.count = counts[b];
    if (counts[b] > 0) {
      bin.mean_confidence = conf_sum[b] / static_cast<double>(counts[b]);
      bin.empirical_accuracy = static_cast<double>(hits[b]) / static_cast<double>(counts[b]);
      out.ece += (static_cast<double>(counts[b]) / n) * std::abs(bin.empirical_accuracy - bin.mean_confidence);
    }
    out.bins.push_back(bin);
  }
  return out;
}

EceResult ece(std::span<const CalibratedPrediction> preds, std::span<const int> labels, int n_bins) {
  if (preds.size() != labels.size()) throw ValidationError("ece: length mismatch");
  std::vector<double> conf;
  std::vector<int> correct;
  conf.reserve(preds.size());
  correct.reserve(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    conf.push_back(preds[i].confidence);
    correct.push_back(preds[i].pred_class == labels[i] ? 1 : 0);
  }
  return ece(conf, correct, n_bins);
}

namespace {

void check_label(const ProbRecord& r) {
  if (r.label < 0 || static_cast<std::size_t>(r.label) >= r.probs.size()) {
    throw ValidationError("label " + std::to_string(r.label) + " outside the probability vector");
  }
}

}  // namespace

double nll(std::span<const ProbRecord> records) {
  if (records.empty()) throw ValidationError("nll: empty input");
  double total = 0.0;
  for (const auto& r : records) {
    check_label(r);
    total -= std::log(std::max(r.probs[r.label], kLogFloor));
  }
  return total / static_cast<double>(records.size());
}

double brier(std::span<const ProbRecord> records) {
  if (records.empty()) throw ValidationError("brier: empty input");
  double total = 0.0;
  for (const auto& r : records) {
    check_label(r);
    for (std::size_t k = 0; k < r.probs.size(); ++k) {
      const double d = r.probs[k] - (static_cast<int>(k) == r.label ? 1.0 : 0.0);
      total += d * d;
    }
  }
  return total / static_cast<double>(records.size());
}

double topk_accuracy(std::span<const LogitRecord> records, int k) {
  if (records.empty()) throw ValidationError("topk_accuracy: empty input");
  std::int64_t hits = 0;
  for (const auto& r : records) {
    const auto top = top_k_indices(r.logits, k);
    if (std::find(top.begin(), top.end(), r.label) != top.end()) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

ReliabilityReport report(const Dataset& ds, const CalibrationMap& map, int n_bins) {
  if (ds.empty()) throw ValidationError("report: empty dataset");
  std::vector<CalibratedPrediction> preds;
  std::vector<int> labels;
  std::vector<ProbRecord> probs;
  preds.reserve(ds.size());
  labels.reserve(ds.size());
  const bool full = map.has_full_distribution();
  for (const auto& r : ds.records()) {
    auto p = apply(map, r);
    if (full) probs.push_back(ProbRecord{r.stream_id, r.t_ms, *p.full_probs, r.label});
    p.full_probs.reset();
    preds.push_back(std::move(p));
    labels.push_back(r.label);
  }

  auto e = ece(preds, labels, n_bins);
  ReliabilityReport out;
  out.map_kind = map.kind();
  out.bins = std::move(e.bins);
  out.ece = e.ece;
  out.n = static_cast<std::int64_t>(ds.size());
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i].pred_class == labels[i] ? 1 : 0;
  out.top1 = static_cast<double>(correct) / static_cast<double>(ds.size());
  out.top5 = topk_accuracy(ds, std::min(5, ds.k()));
  if (full) {
    out.nll = nll(probs);
    out.brier = brier(probs);
  }
  return out;
}

std::string report_to_json(const ReliabilityReport& r) {
  json j;
  j["schema"] = "calgate.report/1";
  j["map_kind"] = std::string(to_string(r.map_kind));
  j["n"] = r.n;
  j["ece"] = r.ece;
  j["top1"] = r.top1;
  j["top5"] = r.top5;
  j["nll"] = r.nll ? json(*r.nll) : json(nullptr);
  j["brier"] = r.brier ? json(*r.brier) : json(nullptr);
  json bins = json::array();
  for (const auto& b : r.bins) {
    bins.push_back({{"lo", b.lo},
                    {"hi", b.hi},
                    {"count", b.count},
                    {"mean_confidence", b.mean_confidence},
                    {"empirical_accuracy", b.empirical_accuracy}});
  }
  j["bins"] = std::move(bins);
  return j.dump(2) + "\n";
}

std::string bins_to_csv(const std::vector<ReliabilityBin>& bins) {
  std::string out = "bin_lo,bin_hi,count,mean_conf,acc\n";
  for (const auto& b : bins) {
    out += format_double(b.lo) + ',' + format_double(b.hi) + ',' + std::to_string(b.count) + ',' +
           format_double(b.mean_confidence) + ',' + format_double(b.empirical_accuracy) + '\n';
  }
  return out;
}

}  // namespace calgate
