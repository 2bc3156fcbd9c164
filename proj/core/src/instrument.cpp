#include "phantom/instrument.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "phantom/error.hpp"

namespace phantom::inst {

using ordered_json = nlohmann::ordered_json;

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::optional<long> parse_int(std::string_view s) {
  const std::string t = trim(s);
  long v = 0;
  const auto* end = t.data() + t.size();
  const auto [ptr, ec] = std::from_chars(t.data(), end, v);
  if (t.empty() || ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

std::optional<double> parse_double(std::string_view s) {
  const std::string t = trim(s);
  if (t.empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(t, &used);
    if (used != t.size()) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string line(text.substr(start, end - start));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    start = end + 1;
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  return lines;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::size_t Instrument::index_of(std::string_view item_id) const {
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].id == item_id) return i;
  }
  throw PreconditionError("instrument " + id + ": unknown item '" + std::string(item_id) + "'");
}

std::vector<std::string> Instrument::item_ids() const {
  std::vector<std::string> ids;
  ids.reserve(items.size());
  for (const auto& it : items) ids.push_back(it.id);
  return ids;
}

const std::string& Instrument::dimension_of(std::string_view item_id) const {
  for (const auto& dim : dimensions) {
    for (const auto& it : dim.items) {
      if (it == item_id) return dim.name;
    }
  }
  throw PreconditionError("instrument " + id + ": item '" + std::string(item_id) +
                          "' has no dimension");
}

void Instrument::validate() const {
  if (id.empty()) throw LoadError("instrument: empty id");
  if (scale_min >= scale_max) {
    throw LoadError("instrument " + id + ": scale min must be below max");
  }
  if (!scale_labels.empty() && static_cast<int>(scale_labels.size()) != scale_points()) {
    throw LoadError("instrument " + id + ": need one scale label per scale point");
  }
  if (items.empty()) throw LoadError("instrument " + id + ": no items");
  std::map<std::string, int> seen;
  for (const auto& it : items) {
    if (it.id.empty()) throw LoadError("instrument " + id + ": item with empty id");
    if (!seen.emplace(it.id, 0).second) {
      throw LoadError("instrument " + id + ": duplicate item id '" + it.id + "'");
    }
  }
  std::set<std::string> dim_names;
  for (const auto& dim : dimensions) {
    if (!dim_names.insert(dim.name).second) {
      throw LoadError("instrument " + id + ": duplicate dimension '" + dim.name + "'");
    }
    if (dim.items.empty()) {
      throw LoadError("instrument " + id + ": dimension '" + dim.name + "' is empty");
    }
    for (const auto& item : dim.items) {
      auto found = seen.find(item);
      if (found == seen.end()) {
        throw LoadError("instrument " + id + ": dimension '" + dim.name +
                        "' lists unknown item '" + item + "'");
      }
      if (++found->second > 1) {
        throw LoadError("instrument " + id + ": item '" + item +
                        "' appears in more than one dimension");
      }
    }
  }
  for (const auto& [item, count] : seen) {
    if (count == 0) {
      throw LoadError("instrument " + id + ": item '" + item + "' is not in any dimension");
    }
  }
  for (const auto& r : reverse_coded) {
    if (!seen.contains(r)) {
      throw LoadError("instrument " + id + ": reverse-coded id '" + r + "' is not an item");
    }
  }
}

Instrument parse_instrument(std::string_view json_text) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const ordered_json::parse_error& e) {
    throw LoadError(std::string("instrument: invalid JSON: ") + e.what());
  }
  Instrument ins;
  try {
    ins.id = j.at("id").get<std::string>();
    ins.instructions = j.value("instructions", "");
    const auto& scale = j.at("scale");
    ins.scale_min = scale.at("min").get<int>();
    ins.scale_max = scale.at("max").get<int>();
    if (scale.contains("labels")) ins.scale_labels = scale.at("labels").get<std::vector<std::string>>();
    for (const auto& it : j.at("items")) {
      Item item{it.at("id").get<std::string>(), it.value("text", ""), it.value("reverse", false)};
      if (item.reverse) ins.reverse_coded.insert(item.id);
      ins.items.push_back(std::move(item));
    }
    for (const auto& [name, ids] : j.at("dimensions").items()) {
      ins.dimensions.push_back({name, ids.get<std::vector<std::string>>()});
    }
  } catch (const ordered_json::exception& e) {
    throw LoadError(std::string("instrument: schema violation: ") + e.what());
  }
  ins.validate();
  return ins;
}

Instrument load_instrument(const std::filesystem::path& path) {
  return parse_instrument(read_file(path));
}

void validate(const ResponseMatrix& matrix, const Instrument& instrument) {
  if (matrix.items != instrument.item_ids()) {
    throw PreconditionError("response matrix columns do not match instrument " + instrument.id);
  }
  if (static_cast<std::size_t>(matrix.rows()) != matrix.meta.size()) {
    throw PreconditionError("response matrix: row metadata count mismatch");
  }
  if (matrix.rows() > 0 && (matrix.values.minCoeff() < instrument.scale_min ||
                            matrix.values.maxCoeff() > instrument.scale_max)) {
    throw PreconditionError("response matrix: value outside the scale of " + instrument.id);
  }
}

ResponseMatrix reverse_score(const ResponseMatrix& matrix, const Instrument& instrument) {
  validate(matrix, instrument);
  ResponseMatrix out = matrix;
  const int pivot = instrument.scale_min + instrument.scale_max;
  for (std::size_t j = 0; j < instrument.items.size(); ++j) {
    if (instrument.items[j].reverse) {
      const auto col = static_cast<Eigen::Index>(j);
      out.values.col(col) = (pivot - matrix.values.col(col).array()).matrix();
    }
  }
  return out;
}

CompositeScores composite_scores(const ResponseMatrix& matrix, const Instrument& instrument) {
  validate(matrix, instrument);
  CompositeScores out;
  out.scores.resize(matrix.rows(), static_cast<Eigen::Index>(instrument.dimensions.size()));
  Eigen::Index d = 0;
  for (const auto& dim : instrument.dimensions) {
    if (dim.items.empty()) {
      throw PreconditionError("composite_scores: dimension '" + dim.name + "' is empty");
    }
    out.dimensions.push_back(dim.name);
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(matrix.rows());
    for (const auto& item : dim.items) {
      acc += matrix.values.col(static_cast<Eigen::Index>(instrument.index_of(item))).cast<double>();
    }
    out.scores.col(d++) = acc / static_cast<double>(dim.items.size());
  }
  return out;
}

std::string_view to_string(ExclusionReason reason) {
  switch (reason) {
    case ExclusionReason::attention_failed: return "attention check failed";
    case ExclusionReason::too_fast: return "too fast";
    case ExclusionReason::missing_response: return "missing response";
    case ExclusionReason::out_of_range: return "out of range";
    case ExclusionReason::malformed: return "malformed row";
  }
  return "unknown";
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

HumanImport import_human_csv_text(std::string_view text, std::span<const Instrument> instruments,
                                  const HumanImportFilter& filter, std::string group) {
  if (filter.min_duration_seconds < 0) {
    throw PreconditionError("import_human_csv: min_duration_seconds must be >= 0");
  }
  if (instruments.empty()) throw PreconditionError("import_human_csv: no instruments");
  static const std::vector<std::string> kMetaColumns = {"participant_id", "age", "sex",
                                                        "duration_seconds", "attention_pass"};
  const auto lines = split_lines(text);
  if (lines.empty()) throw LoadError("import_human_csv: empty file");

  auto header = split_csv_line(lines.front());
  for (auto& h : header) h = trim(h);
  std::vector<std::string> expected = kMetaColumns;
  for (const auto& ins : instruments) {
    for (const auto& it : ins.items) expected.push_back(it.id);
  }
  if (header != expected) {
    throw LoadError(
        "import_human_csv: header must be participant_id,age,sex,duration_seconds,"
        "attention_pass followed by the item ids in instrument order");
  }

  HumanImport out;
  std::vector<std::vector<int>> kept;
  std::vector<RowMeta> kept_meta;
  const std::size_t total_items = expected.size() - kMetaColumns.size();

  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (trim(lines[li]).empty()) continue;
    ++out.input_rows;
    const auto fields = split_csv_line(lines[li]);
    ExclusionEntry entry{li + 1, fields.empty() ? std::string{} : trim(fields[0]),
                         ExclusionReason::malformed, {}};
    if (fields.size() != expected.size()) {
      entry.detail = "expected " + std::to_string(expected.size()) + " fields, got " +
                     std::to_string(fields.size());
      out.exclusions.push_back(std::move(entry));
      continue;
    }
    const auto duration = parse_double(fields[3]);
    const auto attention = parse_int(fields[4]);
    if (!duration || !attention || (*attention != 0 && *attention != 1)) {
      entry.detail = "unparseable duration_seconds or attention_pass";
      out.exclusions.push_back(std::move(entry));
      continue;
    }
    if (filter.require_attention_pass && *attention == 0) {
      entry.reason = ExclusionReason::attention_failed;
      out.exclusions.push_back(std::move(entry));
      continue;
    }
    if (*duration < filter.min_duration_seconds) {
      entry.reason = ExclusionReason::too_fast;
      entry.detail = "duration " + trim(fields[3]) + " s";
      out.exclusions.push_back(std::move(entry));
      continue;
    }

    std::vector<int> row;
    row.reserve(total_items);
    bool ok = true;
    std::size_t col = kMetaColumns.size();
    for (const auto& ins : instruments) {
      for (const auto& it : ins.items) {
        const std::string cell = trim(fields[col++]);
        if (cell.empty() || cell == "NA") {
          entry.reason = ExclusionReason::missing_response;
          entry.detail = it.id;
          ok = false;
        } else if (const auto v = parse_int(cell); !v) {
          entry.reason = ExclusionReason::malformed;
          entry.detail = it.id + "='" + cell + "'";
          ok = false;
        } else if (*v < ins.scale_min || *v > ins.scale_max) {
          entry.reason = ExclusionReason::out_of_range;
          entry.detail = it.id + "=" + cell;
          ok = false;
        } else {
          row.push_back(static_cast<int>(*v));
        }
        if (!ok) break;
      }
      if (!ok) break;
    }
    if (!ok) {
      out.exclusions.push_back(std::move(entry));
      continue;
    }
    kept.push_back(std::move(row));
    kept_meta.push_back({entry.participant_id, std::nullopt, *duration, *attention == 1});
  }

  std::size_t offset = 0;
  for (const auto& ins : instruments) {
    ResponseMatrix m;
    m.group = group;
    m.instrument_id = ins.id;
    m.items = ins.item_ids();
    m.meta = kept_meta;
    m.values.resize(static_cast<Eigen::Index>(kept.size()), static_cast<Eigen::Index>(ins.size()));
    for (std::size_t r = 0; r < kept.size(); ++r) {
      for (std::size_t c = 0; c < ins.size(); ++c) {
        m.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = kept[r][offset + c];
      }
    }
    offset += ins.size();
    out.matrices.push_back(std::move(m));
  }
  return out;
}

HumanImport import_human_csv(const std::filesystem::path& path,
                             std::span<const Instrument> instruments,
                             const HumanImportFilter& filter, std::string group) {
  return import_human_csv_text(read_file(path), instruments, filter, std::move(group));
}

std::string matrix_csv(const ResponseMatrix& matrix) {
  std::ostringstream os;
  os << "source_id,temperature";
  for (const auto& id : matrix.items) os << ',' << csv_field(id);
  os << '\n';
  for (Eigen::Index r = 0; r < matrix.rows(); ++r) {
    const auto& meta = matrix.meta[static_cast<std::size_t>(r)];
    os << csv_field(meta.source_id) << ',';
    if (meta.temperature) {
      char buf[32];
      const auto res = std::to_chars(buf, buf + sizeof buf, *meta.temperature);
      os << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
    }
    for (Eigen::Index c = 0; c < matrix.cols(); ++c) os << ',' << matrix.values(r, c);
    os << '\n';
  }
  return os.str();
}

void write_matrix_csv(const std::filesystem::path& path, const ResponseMatrix& matrix) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << matrix_csv(matrix);
}

ResponseMatrix read_matrix_csv(const std::filesystem::path& path, const Instrument& instrument,
                               std::string group) {
  const auto lines = split_lines(read_file(path));
  if (lines.empty()) throw LoadError(path.string() + ": empty file");
  auto header = split_csv_line(lines.front());
  for (auto& h : header) h = trim(h);
  if (header.size() < 2 || header[0] != "source_id" || header[1] != "temperature") {
    throw LoadError(path.string() + ": header must start with source_id,temperature");
  }
  const std::vector<std::string> items(header.begin() + 2, header.end());

  ResponseMatrix wide;
  wide.group = std::move(group);
  wide.items = items;
  std::vector<std::vector<int>> rows;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (trim(lines[li]).empty()) continue;
    const auto f = split_csv_line(lines[li]);
    if (f.size() != header.size()) {
      throw LoadError(path.string() + ":" + std::to_string(li + 1) + ": wrong field count");
    }
    RowMeta meta{trim(f[0]), parse_double(f[1]), std::nullopt, std::nullopt};
    std::vector<int> row;
    for (std::size_t c = 2; c < f.size(); ++c) {
      const auto v = parse_int(f[c]);
      if (!v) {
        throw LoadError(path.string() + ":" + std::to_string(li + 1) + ": non-integer response");
      }
      row.push_back(static_cast<int>(*v));
    }
    rows.push_back(std::move(row));
    wide.meta.push_back(std::move(meta));
  }
  wide.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(items.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < items.size(); ++c) {
      wide.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  auto m = select_instrument(wide, instrument);
  validate(m, instrument);
  return m;
}

ResponseMatrix select_instrument(const ResponseMatrix& wide, const Instrument& instrument) {
  ResponseMatrix out;
  out.group = wide.group;
  out.instrument_id = instrument.id;
  out.items = instrument.item_ids();
  out.meta = wide.meta;
  out.values.resize(wide.rows(), static_cast<Eigen::Index>(instrument.size()));
  for (std::size_t j = 0; j < instrument.size(); ++j) {
    const auto it = std::find(wide.items.begin(), wide.items.end(), instrument.items[j].id);
    if (it == wide.items.end()) {
      throw LoadError("matrix has no column for item '" + instrument.items[j].id + "'");
    }
    out.values.col(static_cast<Eigen::Index>(j)) =
        wide.values.col(static_cast<Eigen::Index>(it - wide.items.begin()));
  }
  return out;
}

}  // namespace phantom::inst
