#pragma once

#include <Eigen/Core>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mirror/detail/csv.hpp"
#include "mirror/error.hpp"

namespace mirror {

struct LikertScale {
  int min = 1;
  int max = 7;

  void validate() const {
    if (min < 1 || max <= min) {
      throw Error(ErrorCode::invalid_spec, "Likert scale needs 1 <= min < max, got [" + std::to_string(min) +
                                               ", " + std::to_string(max) + "]");
    }
  }
  bool contains(int v) const { return v >= min && v <= max; }
  int levels() const { return max - min + 1; }
  double midpoint() const { return 0.5 * (min + max); }

  friend bool operator==(const LikertScale&, const LikertScale&) = default;
};

enum class LatentRole { factor, outcome };

struct Item {
  std::string id;
  std::string text;
  friend bool operator==(const Item&, const Item&) = default;
};

struct LatentVariable {
  std::string name;
  std::string label;  // human-readable construct description; defaults to name
  LatentRole role = LatentRole::factor;
  std::vector<Item> items;
  friend bool operator==(const LatentVariable&, const LatentVariable&) = default;
};

struct StructuralPath {
  std::string from;
  std::string to;
  friend bool operator==(const StructuralPath&, const StructuralPath&) = default;
};

inline std::string to_string(const StructuralPath& p) { return p.from + " -> " + p.to; }

enum class DemographicKind { categorical, numeric };

struct DemographicField {
  std::string name;
  DemographicKind kind = DemographicKind::categorical;
  std::vector<std::string> values;  // known categories, informational
  friend bool operator==(const DemographicField&, const DemographicField&) = default;
};

/// Validated, immutable description of a questionnaire: constructs, their
/// reflective items, the structural path graph and the demographic fields.
/// Canonical item order is declaration order (latent by latent).
class SurveySpec {
 public:
  SurveySpec(std::string name, LikertScale scale, std::vector<LatentVariable> latents,
             std::vector<StructuralPath> paths, std::vector<DemographicField> demographics,
             std::string context = {})
      : name_(std::move(name)),
        context_(std::move(context)),
        scale_(scale),
        latents_(std::move(latents)),
        paths_(std::move(paths)),
        demographics_(std::move(demographics)) {
    validate_and_index();
  }

  const std::string& name() const { return name_; }
  const std::string& context() const { return context_; }
  const LikertScale& scale() const { return scale_; }
  const std::vector<LatentVariable>& latents() const { return latents_; }
  const std::vector<StructuralPath>& paths() const { return paths_; }
  const std::vector<DemographicField>& demographics() const { return demographics_; }
  const std::vector<std::string>& item_ids() const { return item_ids_; }

  bool has_latent(std::string_view name) const { return latent_index_.count(std::string(name)) != 0; }
  bool has_item(std::string_view id) const { return item_index_.count(std::string(id)) != 0; }

  std::size_t latent_index(std::string_view name) const {
    auto it = latent_index_.find(std::string(name));
    if (it == latent_index_.end()) throw Error(ErrorCode::unknown_latent, "unknown latent '" + std::string(name) + "'");
    return it->second;
  }
  const LatentVariable& latent(std::string_view name) const { return latents_[latent_index(name)]; }

  /// Position of the item in canonical order.
  std::size_t item_column(std::string_view id) const {
    auto it = item_index_.find(std::string(id));
    if (it == item_index_.end()) throw Error(ErrorCode::unknown_column, "unknown item '" + std::string(id) + "'");
    return it->second;
  }
  const Item& item(std::string_view id) const { return *items_by_column_[item_column(id)]; }
  const LatentVariable& latent_of(std::string_view item_id) const {
    return latents_[item_latent_[item_column(item_id)]];
  }

  /// Canonical column indices of a latent's block.
  const std::vector<std::size_t>& block_columns(std::size_t latent) const { return blocks_.at(latent); }
  /// Latent indices with a path into `latent`, in path declaration order.
  const std::vector<std::size_t>& predecessors(std::size_t latent) const { return predecessors_.at(latent); }
  /// Latent indices such that every predecessor precedes its successors.
  const std::vector<std::size_t>& topological_order() const { return topo_order_; }

  const DemographicField* demographic(std::string_view name) const {
    for (const auto& d : demographics_) {
      if (d.name == name) return &d;
    }
    return nullptr;
  }

  friend bool operator==(const SurveySpec& a, const SurveySpec& b) {
    return a.name_ == b.name_ && a.context_ == b.context_ && a.scale_ == b.scale_ && a.latents_ == b.latents_ &&
           a.paths_ == b.paths_ && a.demographics_ == b.demographics_;
  }

 private:
  void validate_and_index() {
    scale_.validate();
    if (latents_.empty()) throw Error(ErrorCode::invalid_spec, "survey declares no latent variables");

    for (std::size_t l = 0; l < latents_.size(); ++l) {
      auto& lv = latents_[l];
      if (lv.name.empty()) throw Error(ErrorCode::invalid_spec, "latent with empty name");
      if (lv.label.empty()) lv.label = lv.name;
      if (!latent_index_.emplace(lv.name, l).second) {
        throw Error(ErrorCode::invalid_spec, "duplicate latent '" + lv.name + "'");
      }
      if (lv.items.empty()) throw Error(ErrorCode::invalid_spec, "latent '" + lv.name + "' has no items");
      std::vector<std::size_t> block;
      for (const auto& it : lv.items) {
        if (it.id.empty()) throw Error(ErrorCode::invalid_spec, "item with empty id in '" + lv.name + "'");
        if (!item_index_.emplace(it.id, item_ids_.size()).second) {
          throw Error(ErrorCode::duplicate_item, "item id '" + it.id + "' declared more than once");
        }
        block.push_back(item_ids_.size());
        item_ids_.push_back(it.id);
        items_by_column_.push_back(&it);
        item_latent_.push_back(l);
      }
      blocks_.push_back(std::move(block));
    }

    std::set<std::string> seen_demo;
    for (const auto& d : demographics_) {
      if (d.name.empty() || d.name == "respondent_id" || has_item(d.name) || !seen_demo.insert(d.name).second) {
        throw Error(ErrorCode::invalid_spec, "invalid or duplicate demographic field '" + d.name + "'");
      }
    }

    predecessors_.assign(latents_.size(), {});
    std::set<std::pair<std::size_t, std::size_t>> edges;
    for (const auto& p : paths_) {
      if (!has_latent(p.from) || !has_latent(p.to)) {
        throw Error(ErrorCode::unknown_latent, "path " + to_string(p) + " references an undeclared latent");
      }
      const auto from = latent_index(p.from);
      const auto to = latent_index(p.to);
      if (from == to) throw Error(ErrorCode::self_loop, "path " + to_string(p) + " is a self-loop");
      if (!edges.emplace(from, to).second) throw Error(ErrorCode::invalid_spec, "duplicate path " + to_string(p));
      predecessors_[to].push_back(from);
    }

    // Kahn's algorithm; ties broken by declaration order.
    std::vector<std::size_t> indegree(latents_.size(), 0);
    for (const auto& [from, to] : edges) ++indegree[to];
    std::vector<bool> done(latents_.size(), false);
    for (std::size_t round = 0; round < latents_.size(); ++round) {
      std::size_t pick = latents_.size();
      for (std::size_t l = 0; l < latents_.size(); ++l) {
        if (!done[l] && indegree[l] == 0) {
          pick = l;
          break;
        }
      }
      if (pick == latents_.size()) throw Error(ErrorCode::cyclic_paths, "structural path graph contains a cycle");
      done[pick] = true;
      topo_order_.push_back(pick);
      for (const auto& [from, to] : edges) {
        if (from == pick) --indegree[to];
      }
    }
  }

  std::string name_;
  std::string context_;
  LikertScale scale_;
  std::vector<LatentVariable> latents_;
  std::vector<StructuralPath> paths_;
  std::vector<DemographicField> demographics_;

  std::vector<std::string> item_ids_;
  std::vector<const Item*> items_by_column_;
  std::vector<std::size_t> item_latent_;
  std::vector<std::vector<std::size_t>> blocks_;
  std::vector<std::vector<std::size_t>> predecessors_;
  std::vector<std::size_t> topo_order_;
  std::unordered_map<std::string, std::size_t> latent_index_;
  std::unordered_map<std::string, std::size_t> item_index_;

 public:
  // items_by_column_ points into latents_; copies must re-index.
  SurveySpec(const SurveySpec& other)
      : SurveySpec(other.name_, other.scale_, other.latents_, other.paths_, other.demographics_, other.context_) {}
  SurveySpec& operator=(const SurveySpec& other) {
    if (this != &other) *this = SurveySpec(other);
    return *this;
  }
  SurveySpec(SurveySpec&&) noexcept = default;
  SurveySpec& operator=(SurveySpec&&) noexcept = default;
};

// ---------------------------------------------------------------------------
// Study-spec JSON

inline std::string_view to_string(LatentRole r) { return r == LatentRole::factor ? "factor" : "outcome"; }
inline std::string_view to_string(DemographicKind k) { return k == DemographicKind::numeric ? "numeric" : "categorical"; }

inline nlohmann::ordered_json to_json(const SurveySpec& spec) {
  nlohmann::ordered_json j;
  j["name"] = spec.name();
  if (!spec.context().empty()) j["context"] = spec.context();
  j["scale"] = {{"min", spec.scale().min}, {"max", spec.scale().max}};
  j["latents"] = nlohmann::ordered_json::array();
  for (const auto& lv : spec.latents()) {
    nlohmann::ordered_json l;
    l["name"] = lv.name;
    l["label"] = lv.label;
    l["role"] = to_string(lv.role);
    l["items"] = nlohmann::ordered_json::array();
    for (const auto& it : lv.items) l["items"].push_back({{"id", it.id}, {"text", it.text}});
    j["latents"].push_back(std::move(l));
  }
  j["paths"] = nlohmann::ordered_json::array();
  for (const auto& p : spec.paths()) j["paths"].push_back({{"from", p.from}, {"to", p.to}});
  j["demographics"] = nlohmann::ordered_json::array();
  for (const auto& d : spec.demographics()) {
    nlohmann::ordered_json dj{{"name", d.name}, {"kind", to_string(d.kind)}};
    if (!d.values.empty()) dj["values"] = d.values;
    j["demographics"].push_back(std::move(dj));
  }
  return j;
}

inline SurveySpec load_study_spec(std::string_view document) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(document);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::parse, std::string("study spec is not valid JSON: ") + e.what());
  }
  try {
    LikertScale scale{j.at("scale").at("min").get<int>(), j.at("scale").at("max").get<int>()};
    std::vector<LatentVariable> latents;
    for (const auto& lj : j.at("latents")) {
      LatentVariable lv;
      lv.name = lj.at("name").get<std::string>();
      lv.label = lj.value("label", lv.name);
      const auto role = lj.value("role", std::string("factor"));
      if (role == "factor") {
        lv.role = LatentRole::factor;
      } else if (role == "outcome") {
        lv.role = LatentRole::outcome;
      } else {
        throw Error(ErrorCode::parse, "latent '" + lv.name + "' has unknown role '" + role + "'");
      }
      for (const auto& ij : lj.at("items")) {
        lv.items.push_back({ij.at("id").get<std::string>(), ij.at("text").get<std::string>()});
      }
      latents.push_back(std::move(lv));
    }
    std::vector<StructuralPath> paths;
    if (j.contains("paths")) {
      for (const auto& pj : j.at("paths")) paths.push_back({pj.at("from").get<std::string>(), pj.at("to").get<std::string>()});
    }
    std::vector<DemographicField> demographics;
    if (j.contains("demographics")) {
      for (const auto& dj : j.at("demographics")) {
        DemographicField d;
        d.name = dj.at("name").get<std::string>();
        const auto kind = dj.value("kind", std::string("categorical"));
        if (kind == "categorical") {
          d.kind = DemographicKind::categorical;
        } else if (kind == "numeric") {
          d.kind = DemographicKind::numeric;
        } else {
          throw Error(ErrorCode::parse, "demographic '" + d.name + "' has unknown kind '" + kind + "'");
        }
        if (dj.contains("values")) d.values = dj.at("values").get<std::vector<std::string>>();
        demographics.push_back(std::move(d));
      }
    }
    return SurveySpec(j.at("name").get<std::string>(), scale, std::move(latents), std::move(paths),
                      std::move(demographics), j.value("context", std::string{}));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse, std::string("malformed study spec: ") + e.what());
  }
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(ErrorCode::io, "write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Respondents and response matrices

/// nullopt marks a demographic value that was not provided.
using DemographicValue = std::optional<std::string>;

struct Respondent {
  std::string id;
  std::map<std::string, DemographicValue> demographics;
  std::map<std::string, int> answers;
};

inline std::optional<double> parse_number(std::string_view s) {
  s = detail::trim(s);
  if (s.empty()) return std::nullopt;
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::optional<int> parse_int(std::string_view s) {
  s = detail::trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

/// Respondent-by-item integer answers for a subset of a spec's items. Items
/// are kept in canonical spec order; respondent order is preserved.
class ResponseMatrix {
 public:
  ResponseMatrix(std::shared_ptr<const SurveySpec> spec, std::vector<std::string> items,
                 std::vector<Respondent> respondents)
      : spec_(std::move(spec)), respondents_(std::move(respondents)) {
    if (!spec_) throw Error(ErrorCode::invalid_argument, "response matrix needs a spec");
    std::set<std::size_t> cols;
    for (const auto& id : items) {
      if (!cols.insert(spec_->item_column(id)).second) {
        throw Error(ErrorCode::duplicate_item, "item '" + id + "' listed twice");
      }
    }
    if (cols.empty()) throw Error(ErrorCode::invalid_argument, "response matrix needs at least one item");
    for (auto c : cols) items_.push_back(spec_->item_ids()[c]);
    if (respondents_.empty()) throw Error(ErrorCode::empty_input, "response matrix needs at least one respondent");

    const auto& scale = spec_->scale();
    std::set<std::string> ids;
    for (std::size_t r = 0; r < respondents_.size(); ++r) {
      auto& resp = respondents_[r];
      const auto where = "row " + std::to_string(r + 1) + " (respondent '" + resp.id + "')";
      if (resp.id.empty() || !ids.insert(resp.id).second) {
        throw Error(ErrorCode::invalid_argument, where + ": respondent id empty or duplicated");
      }
      if (resp.answers.size() != items_.size()) {
        for (const auto& [item, v] : resp.answers) {
          if (std::find(items_.begin(), items_.end(), item) == items_.end()) {
            throw Error(ErrorCode::unknown_column, where + ": answer for item '" + item + "' not in matrix");
          }
        }
      }
      for (const auto& item : items_) {
        auto it = resp.answers.find(item);
        if (it == resp.answers.end()) throw Error(ErrorCode::missing_column, where + ": no answer for item '" + item + "'");
        if (!scale.contains(it->second)) {
          throw Error(ErrorCode::out_of_range, where + ", item '" + item + "': value " + std::to_string(it->second) +
                                                   " outside [" + std::to_string(scale.min) + ", " +
                                                   std::to_string(scale.max) + "]");
        }
      }
      for (const auto& [field, value] : resp.demographics) {
        const auto* d = spec_->demographic(field);
        if (!d) throw Error(ErrorCode::unknown_column, where + ": unknown demographic field '" + field + "'");
        if (value && d->kind == DemographicKind::numeric && !parse_number(*value)) {
          throw Error(ErrorCode::parse, where + ": demographic '" + field + "' is not numeric: '" + *value + "'");
        }
      }
      for (const auto& d : spec_->demographics()) resp.demographics.try_emplace(d.name, std::nullopt);
    }
  }

  const SurveySpec& spec() const { return *spec_; }
  const std::shared_ptr<const SurveySpec>& spec_ptr() const { return spec_; }
  const std::vector<std::string>& items() const { return items_; }
  const std::vector<Respondent>& respondents() const { return respondents_; }
  std::size_t size() const { return respondents_.size(); }

  const Respondent* find(std::string_view id) const {
    for (const auto& r : respondents_) {
      if (r.id == id) return &r;
    }
    return nullptr;
  }

  /// Dense rows x items matrix in this matrix's item order.
  Eigen::MatrixXd values() const { return values(items_); }

  Eigen::MatrixXd values(const std::vector<std::string>& items) const {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(respondents_.size()), static_cast<Eigen::Index>(items.size()));
    for (std::size_t r = 0; r < respondents_.size(); ++r) {
      for (std::size_t c = 0; c < items.size(); ++c) {
        auto it = respondents_[r].answers.find(items[c]);
        if (it == respondents_[r].answers.end()) throw Error(ErrorCode::missing_column, "item '" + items[c] + "' not in matrix");
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = it->second;
      }
    }
    return m;
  }

  std::vector<int> column(std::string_view item) const {
    std::vector<int> out;
    out.reserve(respondents_.size());
    for (const auto& r : respondents_) {
      auto it = r.answers.find(std::string(item));
      if (it == r.answers.end()) throw Error(ErrorCode::missing_column, "item '" + std::string(item) + "' not in matrix");
      out.push_back(it->second);
    }
    return out;
  }

  /// Same respondents, only the given items.
  ResponseMatrix restrict(const std::vector<std::string>& items) const {
    std::vector<Respondent> rows = respondents_;
    for (auto& r : rows) {
      std::map<std::string, int> kept;
      for (const auto& id : items) {
        auto it = r.answers.find(id);
        if (it == r.answers.end()) throw Error(ErrorCode::missing_column, "item '" + id + "' not in matrix");
        kept.emplace(id, it->second);
      }
      r.answers = std::move(kept);
    }
    return ResponseMatrix(spec_, items, std::move(rows));
  }

  /// Respondents with the given ids, in the given order.
  ResponseMatrix select(const std::vector<std::string>& ids) const {
    std::vector<Respondent> rows;
    rows.reserve(ids.size());
    for (const auto& id : ids) {
      const auto* r = find(id);
      if (!r) throw Error(ErrorCode::respondent_mismatch, "respondent '" + id + "' not in matrix");
      rows.push_back(*r);
    }
    return ResponseMatrix(spec_, items_, std::move(rows));
  }

 private:
  std::shared_ptr<const SurveySpec> spec_;
  std::vector<std::string> items_;
  std::vector<Respondent> respondents_;
};

/// Parses the response CSV: `respondent_id, <demographics...>, <items...>`.
/// Every spec item and demographic must have a column; empty demographic
/// cells (or NA) are recorded as not provided.
inline ResponseMatrix load_responses(std::string_view csv, std::shared_ptr<const SurveySpec> spec) {
  auto rows = detail::parse_csv(csv);
  if (rows.empty()) throw Error(ErrorCode::parse, "response file is empty");
  const auto& header = rows.front();
  if (header.empty() || detail::trim(header[0]) != "respondent_id") {
    throw Error(ErrorCode::parse, "first column must be respondent_id");
  }

  enum class Kind { item, demographic };
  std::vector<std::pair<Kind, std::string>> columns;
  std::set<std::string> seen;
  for (std::size_t c = 1; c < header.size(); ++c) {
    const std::string name(detail::trim(header[c]));
    if (!seen.insert(name).second) throw Error(ErrorCode::parse, "duplicate column '" + name + "'");
    if (spec->has_item(name)) {
      columns.emplace_back(Kind::item, name);
    } else if (spec->demographic(name)) {
      columns.emplace_back(Kind::demographic, name);
    } else {
      throw Error(ErrorCode::unknown_column, "column '" + name + "' is neither an item nor a demographic field");
    }
  }
  for (const auto& id : spec->item_ids()) {
    if (!seen.count(id)) throw Error(ErrorCode::missing_column, "missing item column '" + id + "'");
  }
  for (const auto& d : spec->demographics()) {
    if (!seen.count(d.name)) throw Error(ErrorCode::missing_column, "missing demographic column '" + d.name + "'");
  }

  std::vector<Respondent> respondents;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const auto where = "row " + std::to_string(r);
    if (row.size() != header.size()) {
      throw Error(ErrorCode::parse, where + ": expected " + std::to_string(header.size()) + " fields, got " +
                                        std::to_string(row.size()));
    }
    Respondent resp;
    resp.id = std::string(detail::trim(row[0]));
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const auto& [kind, name] = columns[c];
      const auto cell = detail::trim(row[c + 1]);
      if (kind == Kind::demographic) {
        if (cell.empty() || cell == "NA") {
          resp.demographics[name] = std::nullopt;
        } else {
          resp.demographics[name] = std::string(cell);
        }
        continue;
      }
      auto v = parse_int(cell);
      if (!v) throw Error(ErrorCode::non_integer, where + ", item '" + name + "': '" + std::string(cell) + "' is not an integer");
      if (!spec->scale().contains(*v)) {
        throw Error(ErrorCode::out_of_range, where + ", item '" + name + "': value " + std::to_string(*v) +
                                                 " outside [" + std::to_string(spec->scale().min) + ", " +
                                                 std::to_string(spec->scale().max) + "]");
      }
      resp.answers[name] = *v;
    }
    respondents.push_back(std::move(resp));
  }
  if (respondents.empty()) throw Error(ErrorCode::empty_input, "response file has a header but no rows");
  return ResponseMatrix(spec, spec->item_ids(), std::move(respondents));
}

inline std::string write_responses_csv(const ResponseMatrix& m) {
  detail::CsvRow header{"respondent_id"};
  for (const auto& d : m.spec().demographics()) header.push_back(d.name);
  for (const auto& id : m.items()) header.push_back(id);
  std::string out = detail::csv_line(header);
  for (const auto& r : m.respondents()) {
    detail::CsvRow row{r.id};
    for (const auto& d : m.spec().demographics()) {
      auto it = r.demographics.find(d.name);
      row.push_back(it != r.demographics.end() && it->second ? *it->second : std::string{});
    }
    for (const auto& id : m.items()) row.push_back(std::to_string(r.answers.at(id)));
    out += detail::csv_line(row);
  }
  return out;
}

/// Real-valued indicator table (same layout as the response CSV, demographic
/// columns ignored). Used for continuous synthetic data.
struct IndicatorTable {
  std::vector<std::string> respondent_ids;
  Eigen::MatrixXd values;  // rows x spec items in canonical order
};

inline IndicatorTable load_indicator_table(std::string_view csv, const SurveySpec& spec) {
  auto rows = detail::parse_csv(csv);
  if (rows.size() < 2) throw Error(ErrorCode::empty_input, "indicator table has no data rows");
  const auto& header = rows.front();
  if (header.empty() || detail::trim(header[0]) != "respondent_id") {
    throw Error(ErrorCode::parse, "first column must be respondent_id");
  }
  std::vector<std::ptrdiff_t> target(header.size(), -1);
  std::set<std::string> seen;
  for (std::size_t c = 1; c < header.size(); ++c) {
    const std::string name(detail::trim(header[c]));
    if (spec.has_item(name)) {
      target[c] = static_cast<std::ptrdiff_t>(spec.item_column(name));
      seen.insert(name);
    } else if (!spec.demographic(name)) {
      throw Error(ErrorCode::unknown_column, "column '" + name + "' is neither an item nor a demographic field");
    }
  }
  for (const auto& id : spec.item_ids()) {
    if (!seen.count(id)) throw Error(ErrorCode::missing_column, "missing item column '" + id + "'");
  }
  IndicatorTable t;
  t.values.resize(static_cast<Eigen::Index>(rows.size() - 1), static_cast<Eigen::Index>(spec.item_ids().size()));
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != header.size()) throw Error(ErrorCode::parse, "row " + std::to_string(r) + ": wrong field count");
    t.respondent_ids.emplace_back(detail::trim(rows[r][0]));
    for (std::size_t c = 1; c < header.size(); ++c) {
      if (target[c] < 0) continue;
      auto v = parse_number(rows[r][c]);
      if (!v) throw Error(ErrorCode::parse, "row " + std::to_string(r) + ", column '" + header[c] + "': not a number");
      t.values(static_cast<Eigen::Index>(r - 1), target[c]) = *v;
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Prior / target item partition

struct ItemSplit {
  std::vector<std::string> prior;   // items of latent factors, canonical order
  std::vector<std::string> target;  // items of the target latents, canonical order
};

inline ItemSplit split_items(const SurveySpec& spec, const std::vector<std::string>& target_latents) {
  if (target_latents.empty()) throw Error(ErrorCode::invalid_argument, "target latent set is empty");
  std::set<std::size_t> targets;
  for (const auto& name : target_latents) targets.insert(spec.latent_index(name));
  if (targets.size() == spec.latents().size()) {
    throw Error(ErrorCode::invalid_argument, "every latent is a target; no prior items would remain");
  }
  ItemSplit split;
  for (std::size_t l = 0; l < spec.latents().size(); ++l) {
    auto& dest = targets.count(l) ? split.target : split.prior;
    for (const auto& it : spec.latents()[l].items) dest.push_back(it.id);
  }
  return split;
}

/// Latents declared with role "outcome", in declaration order.
inline std::vector<std::string> outcome_latents(const SurveySpec& spec) {
  std::vector<std::string> out;
  for (const auto& lv : spec.latents()) {
    if (lv.role == LatentRole::outcome) out.push_back(lv.name);
  }
  return out;
}

}  // namespace mirror
