#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace calgate {

/// One prediction window. Logits are the canonical storage; probabilities
/// are always derived on demand.
struct LogitRecord {
  std::string stream_id;
  std::int64_t t_ms = 0;
  std::vector<double> logits;
  int label = 0;

  bool operator==(const LogitRecord&) const = default;
};

struct ProbRecord {
  std::string stream_id;
  std::int64_t t_ms = 0;
  std::vector<double> probs;
  int label = 0;
};

enum class SplitTag { train, val, test, unsplit };

std::string_view to_string(SplitTag tag);

enum class FileFormat { csv, ndjson };

FileFormat parse_format(std::string_view name);
/// Picks the format from the file extension (".csv" or ".ndjson"/".jsonl").
FileFormat format_from_path(const std::filesystem::path& path);

/// Validated collection of records sharing one class count. Records of a
/// stream are contiguous and strictly time-ordered; streams keep the order
/// of their first appearance.
class Dataset {
 public:
  Dataset() = default;
  /// Validates every invariant and regroups records per stream.
  Dataset(int k, std::vector<LogitRecord> records, SplitTag split = SplitTag::unsplit);

  int k() const { return k_; }
  const std::vector<LogitRecord>& records() const { return records_; }
  SplitTag split() const { return split_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  /// Stream ids in order of first appearance.
  std::vector<std::string> stream_ids() const;

  bool operator==(const Dataset&) const = default;

 private:
  int k_ = 0;
  std::vector<LogitRecord> records_;
  SplitTag split_ = SplitTag::unsplit;
};

struct StreamSequence {
  std::string stream_id;
  std::vector<LogitRecord> records;
  std::int64_t tick_ms = 40;
};

/// Contiguous per-stream views of a dataset.
std::vector<StreamSequence> streams_of(const Dataset& ds, std::int64_t tick_ms = 40);

/// Throws ValidationError if the record breaks a LogitRecord invariant for k.
void validate_record(const LogitRecord& r, int k);

/// Parse errors name the 1-based line number.
Dataset load_dataset(const std::filesystem::path& path, FileFormat format,
                     SplitTag split = SplitTag::unsplit);
/// Written atomically (temp file + rename); doubles use the shortest
/// representation that re-parses to the same bits.
void save_dataset(const Dataset& ds, const std::filesystem::path& path, FileFormat format);

std::string to_csv(const Dataset& ds);
std::string to_ndjson(const Dataset& ds);
Dataset parse_csv(std::string_view text, SplitTag split = SplitTag::unsplit);
Dataset parse_ndjson(std::string_view text, SplitTag split = SplitTag::unsplit);

struct SplitFractions {
  double train = 0.0;
  double val = 0.0;
  double test = 0.0;
};

/// Partitions whole streams into train/val/test. Deterministic per seed.
std::tuple<Dataset, Dataset, Dataset> split_by_stream(const Dataset& ds,
                                                      SplitFractions fractions,
                                                      std::uint64_t seed);

/// Shortest decimal text that round-trips to the same double.
std::string format_double(double v);
/// Strict full-string parse; throws ValidationError on junk or non-finite.
double parse_double(std::string_view text);

/// Writes `content` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

}  // namespace calgate
