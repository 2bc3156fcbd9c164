#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace phantom::inst {

struct Item {
  std::string id;
  std::string text;
  bool reverse = false;
};

struct Dimension {
  std::string name;
  std::vector<std::string> items;
};

/// A questionnaire: items on a common Likert scale, partitioned into
/// dimensions. Dimensions keep their file order.
struct Instrument {
  std::string id;
  std::string instructions;
  int scale_min = 1;
  int scale_max = 5;
  std::vector<std::string> scale_labels;  // optional; one per scale point
  std::vector<Item> items;
  std::vector<Dimension> dimensions;
  std::set<std::string> reverse_coded;

  std::size_t size() const noexcept { return items.size(); }
  int scale_points() const noexcept { return scale_max - scale_min + 1; }

  /// Position of `item_id` in `items`; throws PreconditionError if unknown.
  std::size_t index_of(std::string_view item_id) const;
  std::vector<std::string> item_ids() const;

  /// Name of the dimension containing `item_id`.
  const std::string& dimension_of(std::string_view item_id) const;

  /// Throws LoadError describing the first violated invariant.
  void validate() const;
};

struct RowMeta {
  std::string source_id;
  std::optional<double> temperature;
  std::optional<double> duration_seconds;
  std::optional<bool> attention_pass;
};

/// n x p integer responses. Column j corresponds to `items[j]`.
struct ResponseMatrix {
  std::string group;
  std::string instrument_id;
  std::vector<std::string> items;
  Eigen::MatrixXi values;
  std::vector<RowMeta> meta;

  Eigen::Index rows() const noexcept { return values.rows(); }
  Eigen::Index cols() const noexcept { return values.cols(); }
  Eigen::MatrixXd as_double() const { return values.cast<double>(); }
};

/// Checks column order and value range against `instrument`.
void validate(const ResponseMatrix& matrix, const Instrument& instrument);

Instrument parse_instrument(std::string_view json_text);
Instrument load_instrument(const std::filesystem::path& path);

/// Recodes reverse-keyed items as (min + max - x). Apply exactly once.
ResponseMatrix reverse_score(const ResponseMatrix& matrix, const Instrument& instrument);

struct CompositeScores {
  std::vector<std::string> dimensions;
  Eigen::MatrixXd scores;  // n x dimensions.size()
};

/// Per-row mean over each dimension's items.
CompositeScores composite_scores(const ResponseMatrix& matrix, const Instrument& instrument);

struct HumanImportFilter {
  double min_duration_seconds = 360.0;
  bool require_attention_pass = true;
};

enum class ExclusionReason { attention_failed, too_fast, missing_response, out_of_range, malformed };

std::string_view to_string(ExclusionReason reason);

struct ExclusionEntry {
  std::size_t line = 0;  // 1-based line in the file (header is line 1)
  std::string participant_id;
  ExclusionReason reason;
  std::string detail;
};

struct HumanImport {
  std::vector<ResponseMatrix> matrices;  // one per instrument, same rows
  std::vector<ExclusionEntry> exclusions;
  std::size_t input_rows = 0;
};

/// Reads the participant CSV (participant_id, age, sex, duration_seconds,
/// attention_pass, then item columns for every instrument in order) and
/// applies the exclusion filters. Every data row is either retained or
/// appears once in `exclusions`.
HumanImport import_human_csv(const std::filesystem::path& path,
                             std::span<const Instrument> instruments,
                             const HumanImportFilter& filter = {}, std::string group = "human");
HumanImport import_human_csv_text(std::string_view text, std::span<const Instrument> instruments,
                                  const HumanImportFilter& filter = {},
                                  std::string group = "human");

/// Response matrix files: header `source_id,temperature,<item ids...>`.
void write_matrix_csv(const std::filesystem::path& path, const ResponseMatrix& matrix);
std::string matrix_csv(const ResponseMatrix& matrix);
ResponseMatrix read_matrix_csv(const std::filesystem::path& path, const Instrument& instrument,
                               std::string group);

/// Selects the columns belonging to `instrument` from a wider matrix.
ResponseMatrix select_instrument(const ResponseMatrix& wide, const Instrument& instrument);

/// Splits a comma-separated line, honouring double-quoted fields.
std::vector<std::string> split_csv_line(std::string_view line);

}  // namespace phantom::inst
