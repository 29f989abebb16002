#include "calgate/calibration.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "calgate/error.hpp"
#include "calgate/modelmath.hpp"

namespace calgate {

using json = nlohmann::json;

std::string_view to_string(MapKind kind) {
  switch (kind) {
    case MapKind::identity: return "identity";
    case MapKind::temperature: return "temperature";
    case MapKind::platt: return "platt";
    case MapKind::isotonic: return "isotonic";
  }
  return "identity";
}

MapKind parse_map_kind(std::string_view name) {
  if (name == "identity" || name == "none") return MapKind::identity;
  if (name == "temperature" || name == "ts") return MapKind::temperature;
  if (name == "platt") return MapKind::platt;
  if (name == "isotonic") return MapKind::isotonic;
  throw ValidationError("unknown calibration method '" + std::string(name) + "'");
}

CalibrationMap::CalibrationMap(Variant v) : v_(std::move(v)) {
  if (const auto* t = std::get_if<TemperatureMap>(&v_)) {
    if (!(t->temperature > 0.0) || !std::isfinite(t->temperature)) {
      throw ValidationError("temperature must be a positive finite number");
    }
  } else if (const auto* p = std::get_if<PlattMap>(&v_)) {
    if (!std::isfinite(p->a) || !std::isfinite(p->b)) throw ValidationError("platt parameters must be finite");
  } else if (const auto* iso = std::get_if<IsotonicMap>(&v_)) {
    const auto& bps = iso->breakpoints;
    if (bps.empty()) throw ValidationError("isotonic map needs at least one breakpoint");
    for (std::size_t i = 0; i < bps.size(); ++i) {
      const auto& bp = bps[i];
      if (!(bp.confidence >= 0.0 && bp.confidence <= 1.0) || !(bp.value >= 0.0 && bp.value <= 1.0)) {
        throw ValidationError("isotonic breakpoints must lie in [0,1]");
      }
      if (i > 0 && !(bp.confidence > bps[i - 1].confidence)) {
        throw ValidationError("isotonic breakpoint confidences must be strictly increasing");
      }
      if (i > 0 && bp.value < bps[i - 1].value) {
        throw ValidationError("isotonic calibrated values must be nondecreasing");
      }
    }
  }
}

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(sigmoid(z)) without overflow.
double log_sigmoid(double z) { return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }

struct TopStats {
  std::vector<double> confidence;
  std::vector<double> top_logit;
  std::vector<int> correct;
};

TopStats top_stats(const Dataset& ds) {
  TopStats s;
  s.confidence.reserve(ds.size());
  s.top_logit.reserve(ds.size());
  s.correct.reserve(ds.size());
  for (const auto& r : ds.records()) {
    const int c = argmax(r.logits);
    const auto p = softmax(r.logits);
    s.confidence.push_back(p[c]);
    s.top_logit.push_back(r.logits[c]);
    s.correct.push_back(c == r.label ? 1 : 0);
  }
  return s;
}

}  // namespace

double isotonic_lookup(const IsotonicMap& map, double confidence) {
  const auto& bps = map.breakpoints;
  auto it = std::upper_bound(bps.begin(), bps.end(), confidence,
                             [](double x, const Breakpoint& bp) { return x < bp.confidence; });
  if (it == bps.begin()) return bps.front().value;
  return std::prev(it)->value;
}

CalibratedPrediction apply(const CalibrationMap& map, std::span<const double> logits) {
  CalibratedPrediction out;
  out.pred_class = argmax(logits);
  std::visit(
      [&](const auto& m) {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, IdentityMap>) {
          auto p = softmax(logits);
          out.confidence = p[out.pred_class];
          out.full_probs = std::move(p);
        } else if constexpr (std::is_same_v<M, TemperatureMap>) {
          std::vector<double> scaled(logits.begin(), logits.end());
          for (double& x : scaled) x /= m.temperature;
          auto p = softmax(scaled);
          out.confidence = p[out.pred_class];
          out.full_probs = std::move(p);
        } else if constexpr (std::is_same_v<M, PlattMap>) {
          out.confidence = sigmoid(m.a * logits[out.pred_class] + m.b);
        } else {
          const auto p = softmax(logits);
          out.confidence = isotonic_lookup(m, p[out.pred_class]);
        }
      },
      map.variant());
  return out;
}

double calibrate_distribution(const CalibrationMap& map, std::span<const double> probs) {
  const int c = argmax(probs);
  const double top = probs[c];
  return std::visit(
      [&](const auto& m) -> double {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, IdentityMap>) {
          return top;
        } else if constexpr (std::is_same_v<M, TemperatureMap>) {
          std::vector<double> z(probs.size());
          for (std::size_t i = 0; i < z.size(); ++i) {
            z[i] = std::log(std::max(probs[i], std::numeric_limits<double>::min())) / m.temperature;
          }
          return softmax(z)[c];
        } else if constexpr (std::is_same_v<M, PlattMap>) {
          const double p = std::clamp(top, 1e-15, 1.0 - 1e-15);
          return sigmoid(m.a * std::log(p / (1.0 - p)) + m.b);
        } else {
          return isotonic_lookup(m, top);
        }
      },
      map.variant());
}

// ---------------------------------------------------------------- temperature

double temperature_nll(const Dataset& ds, double temperature) {
  if (ds.empty()) throw ValidationError("temperature_nll: empty dataset");
  double total = 0.0;
  std::vector<double> scaled;
  for (const auto& r : ds.records()) {
    scaled.assign(r.logits.begin(), r.logits.end());
    const double m = *std::max_element(scaled.begin(), scaled.end());
    double sum = 0.0;
    for (double x : scaled) sum += std::exp((x - m) / temperature);
    total += std::log(sum) - (scaled[r.label] - m) / temperature;
  }
  return total / static_cast<double>(ds.size());
}

CalibrationFit fit_temperature(const Dataset& val) {
  if (val.empty()) throw ValidationError("fit_temperature: empty dataset");
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  const double lo0 = std::log(kTemperatureMin);
  const double hi0 = std::log(kTemperatureMax);
  double lo = lo0;
  double hi = hi0;
  auto f = [&](double log_t) { return temperature_nll(val, std::exp(log_t)); };

  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  double f1 = f(x1);
  double f2 = f(x2);
  while (hi - lo >= kLogTemperatureTol) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = f(x2);
    }
  }
  const double log_t = 0.5 * (lo + hi);
  CalibrationFit out{CalibrationMap::temperature(std::exp(log_t)), {}};
  if (log_t - lo0 < 2 * kLogTemperatureTol || hi0 - log_t < 2 * kLogTemperatureTol) {
    out.warnings.push_back("temperature search hit the bracket boundary (T=" + std::to_string(std::exp(log_t)) +
                           "); the fit is degenerate");
  }
  return out;
}

// ---------------------------------------------------------------- platt

double platt_log_likelihood(std::span<const double> x, std::span<const int> correct, double a, double b) {
  double ll = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double z = a * x[i] + b;
    ll += correct[i] ? log_sigmoid(z) : log_sigmoid(-z);
  }
  return ll;
}

CalibrationFit fit_platt(std::span<const double> x, std::span<const int> correct) {
  if (x.empty()) throw ValidationError("fit_platt: empty dataset");
  if (x.size() != correct.size()) throw ValidationError("fit_platt: length mismatch");

  const auto n_correct = std::count(correct.begin(), correct.end(), 1);
  const double acc = static_cast<double>(n_correct) / static_cast<double>(x.size());

  // Separable when one class is empty or a threshold on x splits them.
  double min_pos = std::numeric_limits<double>::infinity(), max_pos = -min_pos;
  double min_neg = min_pos, max_neg = -min_pos;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (correct[i]) {
      min_pos = std::min(min_pos, x[i]);
      max_pos = std::max(max_pos, x[i]);
    } else {
      min_neg = std::min(min_neg, x[i]);
      max_neg = std::max(max_neg, x[i]);
    }
  }
  const bool separable = n_correct == 0 || n_correct == static_cast<long>(x.size()) || max_neg < min_pos ||
                         max_pos < min_neg;

  const double acc_clipped = std::clamp(acc, 1e-6, 1.0 - 1e-6);
  double a = 0.0;
  double b = std::log(acc_clipped / (1.0 - acc_clipped));
  double ll = platt_log_likelihood(x, correct, a, b);

  constexpr int kMaxIter = 100;
  constexpr double kGradTol = 1e-10;
  for (int iter = 0; iter < kMaxIter; ++iter) {
    double ga = 0, gb = 0, haa = 0, hab = 0, hbb = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double p = sigmoid(a * x[i] + b);
      const double r = correct[i] - p;
      const double w = p * (1.0 - p);
      ga += r * x[i];
      gb += r;
      haa += w * x[i] * x[i];
      hab += w * x[i];
      hbb += w;
    }
    if (std::hypot(ga, gb) < kGradTol) break;
    const double ridge = 1e-12 * (haa + hbb) + 1e-300;
    haa += ridge;
    hbb += ridge;
    const double det = haa * hbb - hab * hab;
    double da = 0, db = 0;
    if (det > 0 && std::isfinite(det)) {
      da = (hbb * ga - hab * gb) / det;
      db = (haa * gb - hab * ga) / det;
    } else {
      da = ga / std::max(haa, 1e-300);
      db = gb / std::max(hbb, 1e-300);
    }
    // Halve the step until the likelihood does not decrease.
    double step = 1.0;
    bool improved = false;
    for (int h = 0; h < 60; ++h) {
      const double na = a + step * da;
      const double nb = b + step * db;
      const double nll = platt_log_likelihood(x, correct, na, nb);
      if (nll >= ll) {
        a = na;
        b = nb;
        ll = nll;
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved) break;
    if (std::abs(a) > kPlattSlopeLimit) break;
  }

  CalibrationFit out;
  if (separable) out.warnings.push_back("platt: correctness is perfectly separable by the top logit; fit diverges");
  if (std::abs(a) > kPlattSlopeLimit) {
    a = std::copysign(kPlattSlopeLimit, a);
    out.warnings.push_back("platt: slope clamped to +/-" + std::to_string(kPlattSlopeLimit));
  }
  out.map = CalibrationMap::platt(a, b);
  return out;
}

CalibrationFit fit_platt(const Dataset& val) {
  if (val.empty()) throw ValidationError("fit_platt: empty dataset");
  const auto s = top_stats(val);
  return fit_platt(s.top_logit, s.correct);
}

// ---------------------------------------------------------------- isotonic

std::vector<double> pava(std::span<const double> values, std::span<const double> weights) {
  if (values.size() != weights.size()) throw ValidationError("pava: length mismatch");
  struct Block {
    double value;
    double weight;
    std::size_t count;
  };
  std::vector<Block> stack;
  stack.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(weights[i] > 0)) throw ValidationError("pava: weights must be positive");
    stack.push_back({values[i], weights[i], 1});
    while (stack.size() > 1 && stack[stack.size() - 2].value > stack.back().value) {
      auto top = stack.back();
      stack.pop_back();
      auto& prev = stack.back();
      const double w = prev.weight + top.weight;
      prev.value = (prev.value * prev.weight + top.value * top.weight) / w;
      prev.weight = w;
      prev.count += top.count;
    }
  }
  std::vector<double> out;
  out.reserve(values.size());
  for (const auto& blk : stack) out.insert(out.end(), blk.count, blk.value);
  return out;
}

CalibrationFit fit_isotonic(std::span<const double> confidences, std::span<const int> correct) {
  if (confidences.empty()) throw ValidationError("fit_isotonic: empty dataset");
  if (confidences.size() != correct.size()) throw ValidationError("fit_isotonic: length mismatch");
  std::vector<std::size_t> order(confidences.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return confidences[i] < confidences[j]; });

  // Ties become one weighted point.
  std::vector<double> xs, ys, ws;
  for (auto i : order) {
    if (!xs.empty() && xs.back() == confidences[i]) {
      ys.back() += correct[i];
      ws.back() += 1.0;
    } else {
      xs.push_back(confidences[i]);
      ys.push_back(correct[i]);
      ws.push_back(1.0);
    }
  }
  for (std::size_t i = 0; i < ys.size(); ++i) ys[i] /= ws[i];

  const auto fitted = pava(ys, ws);
  std::vector<Breakpoint> bps;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (bps.empty() || fitted[i] != bps.back().value) bps.push_back({xs[i], std::clamp(fitted[i], 0.0, 1.0)});
  }
  return {CalibrationMap::isotonic(std::move(bps)), {}};
}

CalibrationFit fit_isotonic(const Dataset& val) {
  if (val.empty()) throw ValidationError("fit_isotonic: empty dataset");
  const auto s = top_stats(val);
  return fit_isotonic(s.confidence, s.correct);
}

CalibrationFit fit(MapKind kind, const Dataset& val) {
  switch (kind) {
    case MapKind::identity:
      if (val.empty()) throw ValidationError("fit: empty dataset");
      return {CalibrationMap::identity(), {}};
    case MapKind::temperature: return fit_temperature(val);
    case MapKind::platt: return fit_platt(val);
    case MapKind::isotonic: return fit_isotonic(val);
  }
  throw ValidationError("fit: unknown map kind");
}

// ---------------------------------------------------------------- json

std::string map_to_json(const CalibrationMap& map) {
  json j;
  j["schema"] = "calgate.map/1";
  j["kind"] = std::string(to_string(map.kind()));
  std::visit(
      [&](const auto& m) {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, TemperatureMap>) {
          j["temperature"] = m.temperature;
        } else if constexpr (std::is_same_v<M, PlattMap>) {
          j["a"] = m.a;
          j["b"] = m.b;
        } else if constexpr (std::is_same_v<M, IsotonicMap>) {
          json bps = json::array();
          for (const auto& bp : m.breakpoints) bps.push_back({bp.confidence, bp.value});
          j["breakpoints"] = std::move(bps);
        }
      },
      map.variant());
  return j.dump(2) + "\n";
}

CalibrationMap map_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("calibration map: invalid JSON: ") + e.what());
  }
  try {
    const auto kind = parse_map_kind(j.at("kind").get<std::string>());
    switch (kind) {
      case MapKind::identity: return CalibrationMap::identity();
      case MapKind::temperature: return CalibrationMap::temperature(j.at("temperature").get<double>());
      case MapKind::platt: return CalibrationMap::platt(j.at("a").get<double>(), j.at("b").get<double>());
      case MapKind::isotonic: {
        std::vector<Breakpoint> bps;
        for (const auto& bp : j.at("breakpoints")) bps.push_back({bp.at(0).get<double>(), bp.at(1).get<double>()});
        return CalibrationMap::isotonic(std::move(bps));
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("calibration map: ") + e.what());
  }
  throw ValidationError("calibration map: unknown kind");
}

void save_map(const CalibrationMap& map, const std::filesystem::path& path) {
  write_file_atomic(path, map_to_json(map));
}

CalibrationMap load_map(const std::filesystem::path& path) { return map_from_json(read_file(path)); }

}  // namespace calgate
