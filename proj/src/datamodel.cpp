#include "calgate/datamodel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "calgate/error.hpp"

namespace calgate {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string_view to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::train: return "train";
    case SplitTag::val: return "val";
    case SplitTag::test: return "test";
    case SplitTag::unsplit: return "unsplit";
  }
  return "unsplit";
}

FileFormat parse_format(std::string_view name) {
  if (name == "csv") return FileFormat::csv;
  if (name == "ndjson" || name == "jsonl") return FileFormat::ndjson;
  throw ValidationError("unknown dataset format '" + std::string(name) + "' (expected csv or ndjson)");
}

FileFormat format_from_path(const fs::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".csv") return FileFormat::csv;
  if (ext == ".ndjson" || ext == ".jsonl") return FileFormat::ndjson;
  throw ValidationError("cannot infer dataset format from '" + path.string() + "'");
}

void validate_record(const LogitRecord& r, int k) {
  if (static_cast<int>(r.logits.size()) != k) {
    throw ValidationError("record in stream '" + r.stream_id + "' has " + std::to_string(r.logits.size()) +
                          " logits, expected " + std::to_string(k));
  }
  for (double v : r.logits) {
    if (!std::isfinite(v)) throw ValidationError("non-finite logit in stream '" + r.stream_id + "'");
  }
  if (r.label < 0 || r.label >= k) {
    throw ValidationError("label " + std::to_string(r.label) + " out of range [0," + std::to_string(k) + ")");
  }
}

Dataset::Dataset(int k, std::vector<LogitRecord> records, SplitTag split) : k_(k), split_(split) {
  if (k < 2) throw ValidationError("class count K must be >= 2, got " + std::to_string(k));
  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<LogitRecord>> groups;
  for (auto& r : records) {
    validate_record(r, k);
    auto [it, inserted] = groups.try_emplace(r.stream_id);
    if (inserted) order.push_back(r.stream_id);
    auto& g = it->second;
    if (!g.empty() && r.t_ms <= g.back().t_ms) {
      throw ValidationError("non-monotone t_ms in stream '" + r.stream_id + "': " + std::to_string(r.t_ms) +
                            " after " + std::to_string(g.back().t_ms));
    }
    g.push_back(std::move(r));
  }
  records_.reserve(records.size());
  for (const auto& id : order) {
    auto& g = groups[id];
    std::move(g.begin(), g.end(), std::back_inserter(records_));
  }
}

std::vector<std::string> Dataset::stream_ids() const {
  std::vector<std::string> ids;
  for (const auto& r : records_) {
    if (ids.empty() || ids.back() != r.stream_id) ids.push_back(r.stream_id);
  }
  return ids;
}

std::vector<StreamSequence> streams_of(const Dataset& ds, std::int64_t tick_ms) {
  if (tick_ms <= 0) throw ValidationError("tick_ms must be positive");
  std::vector<StreamSequence> out;
  for (const auto& r : ds.records()) {
    if (out.empty() || out.back().stream_id != r.stream_id) {
      out.push_back(StreamSequence{r.stream_id, {}, tick_ms});
    }
    out.back().records.push_back(r);
  }
  return out;
}

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) throw ValidationError("cannot format double");
  return std::string(buf.data(), ptr);
}

double parse_double(std::string_view text) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last || first == last) {
    throw ValidationError("not a number: '" + std::string(text) + "'");
  }
  if (!std::isfinite(v)) throw ValidationError("non-finite value: '" + std::string(text) + "'");
  return v;
}

namespace {

std::int64_t parse_int(std::string_view text) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    throw ValidationError("not an integer: '" + std::string(text) + "'");
  }
  return v;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string_view trim_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

[[noreturn]] void fail_at(std::size_t line_no, const std::string& what) {
  throw ValidationError("line " + std::to_string(line_no) + ": " + what);
}

// Builds the dataset while mapping invariant violations back to source lines.
Dataset build_checked(int k, std::vector<LogitRecord> records, const std::vector<std::size_t>& lines,
                      SplitTag split) {
  std::unordered_map<std::string, std::int64_t> last_t;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    try {
      validate_record(r, k);
    } catch (const ValidationError& e) {
      fail_at(lines[i], e.what());
    }
    auto [it, inserted] = last_t.try_emplace(r.stream_id, r.t_ms);
    if (!inserted) {
      if (r.t_ms <= it->second) {
        fail_at(lines[i], "non-monotone t_ms " + std::to_string(r.t_ms) + " in stream '" + r.stream_id + "'");
      }
      it->second = r.t_ms;
    }
  }
  return Dataset(k, std::move(records), split);
}

}  // namespace

std::string to_csv(const Dataset& ds) {
  std::string out = "stream_id,t_ms,label";
  for (int j = 0; j < ds.k(); ++j) out += ",logit_" + std::to_string(j);
  out += '\n';
  for (const auto& r : ds.records()) {
    out += r.stream_id;
    out += ',';
    out += std::to_string(r.t_ms);
    out += ',';
    out += std::to_string(r.label);
    for (double v : r.logits) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

Dataset parse_csv(std::string_view text, SplitTag split) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  auto next_line = [&](std::string_view& line) {
    if (pos >= text.size()) return false;
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    line = trim_cr(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    return true;
  };

  std::string_view line;
  if (!next_line(line)) throw ValidationError("line 1: missing CSV header");
  auto header = split_commas(line);
  if (header.size() < 5 || header[0] != "stream_id" || header[1] != "t_ms" || header[2] != "label") {
    fail_at(1, "header must be stream_id,t_ms,label,logit_0..logit_{K-1} with K >= 2");
  }
  const int k = static_cast<int>(header.size()) - 3;
  for (int j = 0; j < k; ++j) {
    if (header[3 + j] != "logit_" + std::to_string(j)) {
      fail_at(1, "expected column logit_" + std::to_string(j) + ", got '" + std::string(header[3 + j]) + "'");
    }
  }

  std::vector<LogitRecord> records;
  std::vector<std::size_t> lines;
  while (next_line(line)) {
    if (line.empty()) continue;
    auto cells = split_commas(line);
    if (static_cast<int>(cells.size()) != k + 3) {
      fail_at(line_no, "expected " + std::to_string(k + 3) + " fields, got " + std::to_string(cells.size()));
    }
    LogitRecord r;
    try {
      r.stream_id = std::string(cells[0]);
      r.t_ms = parse_int(cells[1]);
      r.label = static_cast<int>(parse_int(cells[2]));
      r.logits.reserve(k);
      for (int j = 0; j < k; ++j) r.logits.push_back(parse_double(cells[3 + j]));
    } catch (const ValidationError& e) {
      fail_at(line_no, e.what());
    }
    records.push_back(std::move(r));
    lines.push_back(line_no);
  }
  return build_checked(k, std::move(records), lines, split);
}

std::string to_ndjson(const Dataset& ds) {
  std::string out;
  for (const auto& r : ds.records()) {
    json obj = json::object();
    obj["stream_id"] = r.stream_id;
    obj["t_ms"] = r.t_ms;
    obj["label"] = r.label;
    for (std::size_t j = 0; j < r.logits.size(); ++j) obj["logit_" + std::to_string(j)] = r.logits[j];
    out += obj.dump();
    out += '\n';
  }
  return out;
}

Dataset parse_ndjson(std::string_view text, SplitTag split) {
  std::vector<LogitRecord> records;
  std::vector<std::size_t> lines;
  int k = -1;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = trim_cr(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      fail_at(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) fail_at(line_no, "expected a JSON object");

    LogitRecord r;
    try {
      r.stream_id = obj.at("stream_id").get<std::string>();
      r.t_ms = obj.at("t_ms").get<std::int64_t>();
      r.label = obj.at("label").get<int>();
      if (obj.contains("logits")) {
        for (const auto& v : obj.at("logits")) {
          if (!v.is_number()) fail_at(line_no, "non-numeric logit");
          r.logits.push_back(v.get<double>());
        }
      } else {
        for (int j = 0;; ++j) {
          auto key = "logit_" + std::to_string(j);
          if (!obj.contains(key)) break;
          const auto& v = obj.at(key);
          if (!v.is_number()) fail_at(line_no, "non-numeric value for " + key);
          r.logits.push_back(v.get<double>());
        }
      }
    } catch (const json::exception& e) {
      fail_at(line_no, std::string("bad record: ") + e.what());
    }
    if (k < 0) {
      k = static_cast<int>(r.logits.size());
      if (k < 2) fail_at(line_no, "record declares K=" + std::to_string(k) + ", need K >= 2");
    }
    records.push_back(std::move(r));
    lines.push_back(line_no);
  }
  if (k < 0) throw ValidationError("ndjson dataset has no records; K cannot be inferred");
  return build_checked(k, std::move(records), lines, split);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failure on '" + path.string() + "'");
  return ss.str();
}

void write_file_atomic(const fs::path& path, std::string_view content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw IoError("write failure on '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move output into place at '" + path.string() + "'");
  }
}

Dataset load_dataset(const fs::path& path, FileFormat format, SplitTag split) {
  if (!fs::exists(path)) throw IoError("no such file: '" + path.string() + "'");
  const auto text = read_file(path);
  return format == FileFormat::csv ? parse_csv(text, split) : parse_ndjson(text, split);
}

void save_dataset(const Dataset& ds, const fs::path& path, FileFormat format) {
  write_file_atomic(path, format == FileFormat::csv ? to_csv(ds) : to_ndjson(ds));
}

std::tuple<Dataset, Dataset, Dataset> split_by_stream(const Dataset& ds, SplitFractions f,
                                                      std::uint64_t seed) {
  const std::array<double, 3> fr{f.train, f.val, f.test};
  for (double x : fr) {
    if (!(x >= 0.0)) throw ValidationError("split fractions must be nonnegative");
  }
  if (std::abs(fr[0] + fr[1] + fr[2] - 1.0) > 1e-9) throw ValidationError("split fractions must sum to 1");

  auto ids = ds.stream_ids();
  const auto n = ids.size();
  const auto nonzero = static_cast<std::size_t>(std::count_if(fr.begin(), fr.end(), [](double x) { return x > 0; }));
  if (n < nonzero) {
    throw ValidationError("too few streams: " + std::to_string(n) + " streams for " + std::to_string(nonzero) +
                          " nonempty splits");
  }

  // Largest-remainder allocation; every nonzero fraction gets at least one stream.
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> rem{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = fr[i] * static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    rem[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  while (assigned < n) {
    int best = 0;
    for (int i = 1; i < 3; ++i) {
      if (rem[i] > rem[best]) best = i;
    }
    ++counts[best];
    rem[best] = -1.0;
    ++assigned;
  }
  for (int i = 0; i < 3; ++i) {
    if (fr[i] > 0 && counts[i] == 0) {
      auto donor = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
      --counts[donor];
      ++counts[i];
    }
  }

  std::sort(ids.begin(), ids.end());
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);

  std::unordered_map<std::string, int> owner;
  std::size_t cursor = 0;
  for (int i = 0; i < 3; ++i) {
    for (std::size_t c = 0; c < counts[i]; ++c) owner[ids[cursor++]] = i;
  }

  std::array<std::vector<LogitRecord>, 3> parts;
  for (const auto& r : ds.records()) parts[owner.at(r.stream_id)].push_back(r);
  return {Dataset(ds.k(), std::move(parts[0]), SplitTag::train), Dataset(ds.k(), std::move(parts[1]), SplitTag::val),
          Dataset(ds.k(), std::move(parts[2]), SplitTag::test)};
}

}  // namespace calgate
