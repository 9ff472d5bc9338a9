#include "noisebench/dataset.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "noisebench/error.hpp"
#include "noisebench/rng.hpp"

namespace noisebench {

using ordered_json = nlohmann::ordered_json;

LabelSet::LabelSet(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.size() < 2) {
    throw ValidationError("a label set needs at least 2 labels, got " +
                          std::to_string(names_.size()));
  }
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i].empty()) throw ValidationError("empty label name at index " + std::to_string(i));
    if (!index_.emplace(names_[i], i).second) {
      throw ValidationError("duplicate label '" + names_[i] + "'");
    }
  }
}

const std::string& LabelSet::name(LabelIndex index) const {
  if (index >= names_.size()) {
    throw ValidationError("label index " + std::to_string(index) + " out of range");
  }
  return names_[index];
}

std::optional<LabelIndex> LabelSet::find(std::string_view name) const {
  const auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

LabelIndex LabelSet::index_of(std::string_view name) const {
  if (auto index = find(name)) return *index;
  throw ValidationError("unknown label '" + std::string(name) + "'");
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::unset: return "unset";
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "unset";
}

Split split_from_string(std::string_view name) {
  if (name == "unset") return Split::unset;
  if (name == "train") return Split::train;
  if (name == "validation") return Split::validation;
  if (name == "test") return Split::test;
  throw ValidationError("unknown split '" + std::string(name) + "'");
}

Dataset::Dataset(LabelSet labels, std::vector<Instance> instances, Split split)
    : labels_(std::move(labels)), instances_(std::move(instances)), split_(split) {
  const auto k = labels_.size();
  std::unordered_set<std::string_view> ids;
  ids.reserve(instances_.size());
  for (const auto& inst : instances_) {
    if (!ids.insert(inst.id).second) throw ValidationError("duplicate instance id '" + inst.id + "'");
    const auto check = [&](LabelIndex label, std::string_view field) {
      if (label >= k) {
        throw ValidationError("instance '" + inst.id + "': " + std::string(field) + " index " +
                              std::to_string(label) + " out of range for " + std::to_string(k) +
                              " labels");
      }
    };
    check(inst.observed_label, "observed label");
    if (inst.gold_label) check(*inst.gold_label, "gold label");
    for (auto a : inst.annotator_labels) check(a, "annotator label");
  }
}

bool Dataset::has_gold_labels() const {
  return std::all_of(instances_.begin(), instances_.end(),
                     [](const Instance& inst) { return inst.gold_label.has_value(); });
}

void Dataset::require_gold_labels(std::string_view operation) const {
  for (const auto& inst : instances_) {
    if (!inst.gold_label) {
      throw ValidationError(std::string(operation) + " requires gold labels; instance '" + inst.id +
                            "' has none");
    }
  }
}

Dataset Dataset::with_split(Split split) const {
  Dataset copy = *this;
  copy.split_ = split;
  return copy;
}

Dataset Dataset::with_instances(std::vector<Instance> instances) const {
  return Dataset(labels_, std::move(instances), split_);
}

Dataset Dataset::with_gold_as_observed() const {
  require_gold_labels("with_gold_as_observed");
  Dataset copy = *this;
  for (auto& inst : copy.instances_) inst.observed_label = *inst.gold_label;
  return copy;
}

Dataset Dataset::subset(const std::vector<std::size_t>& positions) const {
  std::vector<Instance> picked;
  picked.reserve(positions.size());
  for (auto p : positions) {
    if (p >= instances_.size()) throw ValidationError("subset position out of range");
    picked.push_back(instances_[p]);
  }
  return Dataset(labels_, std::move(picked), split_);
}

DatasetFormat format_from_string(std::string_view name) {
  if (name == "jsonl") return DatasetFormat::jsonl;
  if (name == "tsv") return DatasetFormat::tsv;
  throw ValidationError("unknown dataset format '" + std::string(name) + "'");
}

DatasetFormat format_from_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".jsonl" || ext == ".json") return DatasetFormat::jsonl;
  if (ext == ".tsv") return DatasetFormat::tsv;
  throw ValidationError("cannot infer dataset format from '" + path.string() + "'");
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw ValidationError("write failed for '" + path.string() + "'");
}

std::vector<std::string_view> split_lines(std::string_view content) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < content.size()) {
    auto end = content.find('\n', start);
    if (end == std::string_view::npos) end = content.size();
    auto line = content.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto end = line.find('\t', start);
    if (end == std::string_view::npos) {
      cells.emplace_back(line.substr(start));
      break;
    }
    cells.emplace_back(line.substr(start, end - start));
    start = end + 1;
  }
  return cells;
}

std::string escape_tsv(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  return out;
}

std::string unescape_tsv(std::string_view text, std::size_t line_no) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '\\') {
      out += text[i];
      continue;
    }
    if (++i == text.size()) {
      throw ValidationError("line " + std::to_string(line_no) + ": dangling escape");
    }
    switch (text[i]) {
      case '\\': out += '\\'; break;
      case 't': out += '\t'; break;
      case 'n': out += '\n'; break;
      case 'r': out += '\r'; break;
      default:
        throw ValidationError("line " + std::to_string(line_no) + ": unknown escape \\" +
                              std::string(1, text[i]));
    }
  }
  return out;
}

// Raw row with label strings, resolved against the label set once known.
struct RawRow {
  std::size_t line_no;
  std::string id;
  std::string text;
  std::string label;
  std::optional<std::string> gold;
  std::vector<std::string> annotators;
};

Dataset resolve_rows(std::vector<RawRow> rows, const std::optional<LabelSet>& given) {
  LabelSet labels;
  if (given) {
    labels = *given;
  } else {
    std::vector<std::string> order;
    std::set<std::string> seen;
    const auto note = [&](const std::string& name) {
      if (seen.insert(name).second) order.push_back(name);
    };
    for (const auto& row : rows) {
      note(row.label);
      if (row.gold) note(*row.gold);
      for (const auto& a : row.annotators) note(a);
    }
    labels = LabelSet(std::move(order));
  }
  std::vector<Instance> instances;
  instances.reserve(rows.size());
  std::unordered_set<std::string> ids;
  for (auto& row : rows) {
    const auto resolve = [&](const std::string& name) {
      if (auto index = labels.find(name)) return *index;
      throw ValidationError("line " + std::to_string(row.line_no) + ": unknown label '" + name +
                            "'");
    };
    if (!ids.insert(row.id).second) {
      throw ValidationError("line " + std::to_string(row.line_no) + ": duplicate id '" + row.id +
                            "'");
    }
    Instance inst;
    inst.id = std::move(row.id);
    inst.text = std::move(row.text);
    inst.observed_label = resolve(row.label);
    if (row.gold) inst.gold_label = resolve(*row.gold);
    for (const auto& a : row.annotators) inst.annotator_labels.push_back(resolve(a));
    instances.push_back(std::move(inst));
  }
  return Dataset(std::move(labels), std::move(instances));
}

std::vector<RawRow> parse_jsonl_rows(std::string_view content) {
  std::vector<RawRow> rows;
  const auto lines = split_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto line_no = i + 1;
    if (lines[i].empty()) continue;
    const auto fail = [&](const std::string& why) {
      return ValidationError("line " + std::to_string(line_no) + ": " + why);
    };
    ordered_json obj;
    try {
      obj = ordered_json::parse(lines[i]);
    } catch (const nlohmann::json::parse_error& e) {
      throw fail(std::string("malformed JSON: ") + e.what());
    }
    if (!obj.is_object()) throw fail("expected a JSON object");
    const auto string_field = [&](const char* key) -> std::string {
      const auto it = obj.find(key);
      if (it == obj.end() || !it->is_string()) {
        throw fail(std::string("missing or non-string field '") + key + "'");
      }
      return it->get<std::string>();
    };
    RawRow row;
    row.line_no = line_no;
    row.id = string_field("id");
    row.text = string_field("text");
    row.label = string_field("label");
    if (auto it = obj.find("gold_label"); it != obj.end() && !it->is_null()) {
      if (!it->is_string()) throw fail("gold_label must be a string");
      row.gold = it->get<std::string>();
    }
    if (auto it = obj.find("annotator_labels"); it != obj.end() && !it->is_null()) {
      if (!it->is_array()) throw fail("annotator_labels must be an array");
      for (const auto& a : *it) {
        if (!a.is_string()) throw fail("annotator_labels entries must be strings");
        row.annotators.push_back(a.get<std::string>());
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<RawRow> parse_tsv_rows(std::string_view content) {
  const auto lines = split_lines(content);
  if (lines.empty()) throw ValidationError("line 1: missing TSV header");
  const auto header = split_tabs(lines[0]);
  const bool has_gold = header.size() == 4 && header[3] == "gold_label";
  if (header.size() < 3 || header[0] != "id" || header[1] != "text" || header[2] != "label" ||
      (header.size() == 4 && !has_gold) || header.size() > 4) {
    throw ValidationError("line 1: expected header 'id<TAB>text<TAB>label[<TAB>gold_label]'");
  }
  std::vector<RawRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto line_no = i + 1;
    if (lines[i].empty()) continue;
    auto cells = split_tabs(lines[i]);
    if (cells.size() != header.size()) {
      throw ValidationError("line " + std::to_string(line_no) + ": expected " +
                            std::to_string(header.size()) + " columns, found " +
                            std::to_string(cells.size()));
    }
    RawRow row;
    row.line_no = line_no;
    row.id = unescape_tsv(cells[0], line_no);
    row.text = unescape_tsv(cells[1], line_no);
    row.label = unescape_tsv(cells[2], line_no);
    if (row.id.empty()) throw ValidationError("line " + std::to_string(line_no) + ": empty id");
    if (row.label.empty()) throw ValidationError("line " + std::to_string(line_no) + ": empty label");
    if (has_gold && !cells[3].empty()) row.gold = unescape_tsv(cells[3], line_no);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

Dataset parse_dataset(std::string_view content, DatasetFormat format,
                      const std::optional<LabelSet>& labels) {
  auto rows = format == DatasetFormat::jsonl ? parse_jsonl_rows(content) : parse_tsv_rows(content);
  return resolve_rows(std::move(rows), labels);
}

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format,
                     const std::optional<std::filesystem::path>& labels_path) {
  std::optional<LabelSet> labels;
  if (labels_path) {
    labels = load_labels(*labels_path);
  } else {
    const auto sidecar = path.parent_path() / "labels.txt";
    if (std::filesystem::exists(sidecar)) labels = load_labels(sidecar);
  }
  return parse_dataset(read_file(path), format, labels);
}

std::string serialize_dataset(const Dataset& dataset, DatasetFormat format) {
  const auto& labels = dataset.labels();
  std::string out;
  if (format == DatasetFormat::jsonl) {
    for (const auto& inst : dataset.instances()) {
      ordered_json obj;
      obj["id"] = inst.id;
      obj["text"] = inst.text;
      obj["label"] = labels.name(inst.observed_label);
      if (inst.gold_label) obj["gold_label"] = labels.name(*inst.gold_label);
      if (!inst.annotator_labels.empty()) {
        auto arr = ordered_json::array();
        for (auto a : inst.annotator_labels) arr.push_back(labels.name(a));
        obj["annotator_labels"] = std::move(arr);
      }
      out += obj.dump();
      out += '\n';
    }
    return out;
  }
  const bool any_gold = std::any_of(dataset.instances().begin(), dataset.instances().end(),
                                    [](const Instance& i) { return i.gold_label.has_value(); });
  out += any_gold ? "id\ttext\tlabel\tgold_label\n" : "id\ttext\tlabel\n";
  for (const auto& inst : dataset.instances()) {
    out += escape_tsv(inst.id);
    out += '\t';
    out += escape_tsv(inst.text);
    out += '\t';
    out += escape_tsv(labels.name(inst.observed_label));
    if (any_gold) {
      out += '\t';
      if (inst.gold_label) out += escape_tsv(labels.name(*inst.gold_label));
    }
    out += '\n';
  }
  return out;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path,
                  DatasetFormat format) {
  write_file(path, serialize_dataset(dataset, format));
}

LabelSet load_labels(const std::filesystem::path& path) {
  std::vector<std::string> names;
  const auto text = read_file(path);
  for (auto line : split_lines(text)) {
    if (!line.empty()) names.emplace_back(line);
  }
  return LabelSet(std::move(names));
}

void save_labels(const LabelSet& labels, const std::filesystem::path& path) {
  std::string out;
  for (const auto& name : labels.names()) {
    out += name;
    out += '\n';
  }
  write_file(path, out);
}

void SplitSpec::validate() const {
  const double fractions[] = {train_fraction, validation_fraction, test_fraction};
  for (double f : fractions) {
    if (!(f >= 0.0) || !std::isfinite(f)) throw ValidationError("split fractions must be >= 0");
  }
  if (std::abs(train_fraction + validation_fraction + test_fraction - 1.0) > 1e-9) {
    throw ValidationError("split fractions must sum to 1");
  }
}

namespace {

DatasetSplits partition(const Dataset& dataset, std::vector<std::size_t> order, std::size_t n_train,
                        std::size_t n_val) {
  const std::vector<std::size_t> train(order.begin(), order.begin() + n_train);
  const std::vector<std::size_t> val(order.begin() + n_train, order.begin() + n_train + n_val);
  const std::vector<std::size_t> test(order.begin() + n_train + n_val, order.end());
  return {dataset.subset(train).with_split(Split::train),
          dataset.subset(val).with_split(Split::validation),
          dataset.subset(test).with_split(Split::test)};
}

std::vector<std::size_t> shuffled_positions(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "split"));
  rng.shuffle(order);
  return order;
}

}  // namespace

DatasetSplits split_dataset(const Dataset& dataset, const SplitSpec& spec) {
  spec.validate();
  if (dataset.split() != Split::unset && dataset.split() != Split::train) {
    throw ValidationError("only an unsplit or train dataset can be split");
  }
  const auto n = dataset.size();
  const auto size_for = [n](double fraction) -> std::size_t {
    if (fraction <= 0.0) return 0;
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * n)));
  };
  const auto n_val = size_for(spec.validation_fraction);
  const auto n_test = size_for(spec.test_fraction);
  if (n_val + n_test >= n || spec.train_fraction <= 0.0) {
    throw ValidationError("split of " + std::to_string(n) +
                          " instances leaves a required split empty");
  }
  return partition(dataset, shuffled_positions(n, spec.seed), n - n_val - n_test, n_val);
}

DatasetSplits split_dataset_by_counts(const Dataset& dataset, std::size_t train,
                                      std::size_t validation, std::size_t test,
                                      std::uint64_t seed) {
  if (train + validation + test != dataset.size()) {
    throw ValidationError("split counts do not add up to the dataset size");
  }
  if (train == 0) throw ValidationError("train split must be non-empty");
  return partition(dataset, shuffled_positions(dataset.size(), seed), train, validation);
}

}  // namespace noisebench
