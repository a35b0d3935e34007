#include "hhmm/ingest.hpp"

#include "hhmm/model_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "json.hpp"

namespace hhmm {

namespace {

using nlohmann::json;
using Policy = InitialDistribution::Policy;

[[noreturn]] void schema_fail(const std::string &origin,
                              const std::string &what) {
  throw Error(ErrorCategory::data, "schema: " + origin + ": " + what);
}

[[noreturn]] void data_fail(const std::string &origin,
                            const std::string &what) {
  throw Error(ErrorCategory::data, "validation: " + origin + ": " + what);
}

const json &need(const json &j, const char *key, const std::string &origin) {
  const auto it = j.find(key);
  if (it == j.end())
    schema_fail(origin, std::string("missing key '") + key + "'");
  return *it;
}

Policy policy_from_config(const json &j, const char *key,
                          const std::string &origin) {
  if (!j.contains(key)) return Policy::Stationary;
  const std::string name = j.at(key).get<std::string>();
  if (name == "stationary") return Policy::Stationary;
  if (name == "estimated") return Policy::Estimated;
  schema_fail(origin, std::string(key) +
                          " initial policy must be \"stationary\" or "
                          "\"estimated\", got \"" +
                          name + "\"");
}

SegmentationRule segmentation_from_json(const json &j,
                                        const std::string &origin) {
  SegmentationRule rule;
  const std::string mode = need(j, "mode", origin).get<std::string>();
  if (j.contains("min_tail")) rule.min_tail = j.at("min_tail").get<int>();
  if (mode == "by_time_window") {
    rule.mode = SegmentationRule::Mode::ByTimeWindow;
    rule.window = need(j, "duration", origin).get<double>();
  } else if (mode == "by_count") {
    rule.mode = SegmentationRule::Mode::ByCount;
    rule.count = need(j, "n_obs", origin).get<int>();
  } else if (mode == "by_column") {
    rule.mode = SegmentationRule::Mode::ByColumn;
    rule.column = need(j, "column", origin).get<std::string>();
  } else {
    schema_fail(origin, "unknown segmentation mode '" + mode + "'");
  }
  return rule;
}

} // namespace

void ModelSpecConfig::validate() const {
  auto fail = [](const std::string &what) {
    throw Error(ErrorCategory::data, "invalid-parameter: " + what);
  };
  if (k_internal < 1) fail("k_internal must be >= 1");
  if (n_production < 1) fail("n_production must be >= 1");
  if (variables.empty()) fail("at least one variable is required");
  for (std::size_t i = 0; i < variables.size(); ++i) {
    const auto &name = variables[i].name;
    if (name.empty()) fail("variable names must be nonempty");
    for (std::size_t j = i + 1; j < variables.size(); ++j)
      if (variables[j].name == name) fail("duplicate variable '" + name + "'");
    if (name == time_column || (!animal_column.empty() && name == animal_column) ||
        (segmentation.mode == SegmentationRule::Mode::ByColumn &&
         name == segmentation.column))
      fail("variable '" + name + "' collides with a reserved column");
  }
  switch (segmentation.mode) {
  case SegmentationRule::Mode::ByTimeWindow:
    if (!(segmentation.window > 0.0)) fail("window duration must be > 0");
    if (time_column.empty()) fail("by_time_window needs a time column");
    break;
  case SegmentationRule::Mode::ByCount:
    if (segmentation.count < 1) fail("by_count needs n_obs >= 1");
    break;
  case SegmentationRule::Mode::ByColumn:
    if (segmentation.column.empty()) fail("by_column needs a column name");
    break;
  }
  if (segmentation.min_tail < 0) fail("min_tail must be >= 0");
  if (!(zero_epsilon >= 0.0)) fail("zero_epsilon must be >= 0");
}

ModelSpecConfig config_from_string(const std::string &text,
                                   const std::string &origin) {
  json j;
  try {
    j = json::parse(text, nullptr, true, true); // comments allowed
  } catch (const json::exception &e) {
    schema_fail(origin, std::string("cannot parse config: ") + e.what());
  }
  ModelSpecConfig config;
  try {
    config.k_internal = need(j, "k_internal", origin).get<int>();
    config.n_production = need(j, "n_production", origin).get<int>();
    if (j.contains("share_emissions"))
      config.share_emissions = j.at("share_emissions").get<bool>();
    if (j.contains("initial")) {
      const auto &init = j.at("initial");
      config.internal_initial = policy_from_config(init, "internal", origin);
      config.production_initial = policy_from_config(init, "production", origin);
    }
    for (const auto &v : need(j, "variables", origin)) {
      VariableSpec var;
      var.name = need(v, "name", origin).get<std::string>();
      var.family = family_from_name(need(v, "family", origin).get<std::string>());
      if (v.contains("transform"))
        var.transform =
            transform_from_name(v.at("transform").get<std::string>());
      config.variables.push_back(std::move(var));
    }
    config.segmentation =
        segmentation_from_json(need(j, "segmentation", origin), origin);
    if (j.contains("time_column"))
      config.time_column = j.at("time_column").get<std::string>();
    if (j.contains("animal_column"))
      config.animal_column = j.at("animal_column").get<std::string>();
    if (j.contains("zero_epsilon"))
      config.zero_epsilon = j.at("zero_epsilon").get<double>();
  } catch (const json::exception &e) {
    schema_fail(origin, std::string("malformed config: ") + e.what());
  }
  config.validate();
  return config;
}

ModelSpecConfig load_config(const std::string &path) {
  return config_from_string(read_text_file(path), path);
}

HierarchicalModel prototype_from_config(const ModelSpecConfig &config) {
  config.validate();
  const int k = config.k_internal;
  const int n = config.n_production;

  EmissionModel em;
  em.variables.reserve(config.variables.size());
  for (const auto &var : config.variables) {
    EmissionVariable ev;
    ev.name = var.name;
    for (int i = 0; i < n; ++i) {
      switch (var.family) {
      case Family::Gamma: ev.by_state.push_back(GammaParams{1.0, 1.0}); break;
      case Family::ZeroInflatedGamma:
        ev.by_state.push_back(ZeroInflatedGammaParams{0.1, {1.0, 1.0}});
        break;
      case Family::Normal: ev.by_state.push_back(NormalParams{0.0, 1.0}); break;
      }
    }
    em.variables.push_back(std::move(ev));
  }

  auto initial_for = [](Policy policy, int size) {
    return policy == Policy::Estimated
               ? InitialDistribution::estimated(std::vector<double>(size - 1, 0.0))
               : InitialDistribution::stationary();
  };

  HierarchicalModel model;
  model.share_emissions = config.share_emissions;
  model.internal_tpm = TransitionMatrix::uniform(k);
  model.internal_initial = initial_for(config.internal_initial, k);
  model.production.resize(k);
  std::shared_ptr<const EmissionModel> shared;
  if (config.share_emissions)
    shared = std::make_shared<const EmissionModel>(em);
  for (auto &chain : model.production) {
    chain.tpm = TransitionMatrix::uniform(n);
    chain.initial = initial_for(config.production_initial, n);
    chain.emissions =
        config.share_emissions ? shared
                               : std::make_shared<const EmissionModel>(em);
  }
  model.validate();
  return model;
}

namespace {

std::string trimmed(const std::string &s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

bool is_missing_token(const std::string &s) {
  return s.empty() || s == "NA" || s == "na" || s == "NaN" || s == "nan";
}

bool parse_double(const std::string &s, double &out) {
  const char *begin = s.data();
  const char *end = begin + s.size();
  const auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> line_of_row;
};

std::vector<std::string> split_cells(const std::string &line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    cells.push_back(trimmed(
        line.substr(start, comma == std::string::npos ? std::string::npos
                                                      : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return cells;
}

Table parse_csv(const std::string &text, const std::string &origin) {
  Table table;
  std::size_t pos = 0;
  int line_no = 0;
  bool have_header = false;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto cells = split_cells(line);
    if (!have_header) {
      table.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != table.header.size())
      data_fail(origin, "line " + std::to_string(line_no) + ": expected " +
                            std::to_string(table.header.size()) +
                            " cells, got " + std::to_string(cells.size()));
    table.rows.push_back(std::move(cells));
    table.line_of_row.push_back(line_no);
  }
  if (!have_header) data_fail(origin, "empty file (no header row)");
  return table;
}

struct ParsedRow {
  int line = 0;
  double time = 0.0;
  std::string animal;
  std::string segment_key;
  std::vector<double> y;
};

std::string format_number(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

} // namespace

SegmentedSeries ingest_from_string(const std::string &text,
                                   const ModelSpecConfig &config,
                                   const std::string &origin) {
  config.validate();
  const Table table = parse_csv(text, origin);
  const auto &seg = config.segmentation;
  const bool windowed = seg.mode == SegmentationRule::Mode::ByTimeWindow;
  const bool by_column = seg.mode == SegmentationRule::Mode::ByColumn;

  auto column_of = [&](const std::string &name, bool required) {
    const auto it =
        std::find(table.header.begin(), table.header.end(), name);
    if (it == table.header.end()) {
      if (required) schema_fail(origin, "missing column '" + name + "'");
      return -1;
    }
    return static_cast<int>(it - table.header.begin());
  };

  std::vector<int> var_col(config.variables.size());
  for (std::size_t r = 0; r < config.variables.size(); ++r)
    var_col[r] = column_of(config.variables[r].name, true);
  const int time_col = column_of(config.time_column, windowed);
  const int animal_col = config.animal_column.empty()
                             ? -1
                             : column_of(config.animal_column, true);
  const int segment_col = by_column ? column_of(seg.column, true) : -1;

  const int n_vars = static_cast<int>(config.variables.size());
  std::vector<ParsedRow> rows;
  rows.reserve(table.rows.size());
  // offenders for the non-negativity check, capped in the message
  std::vector<std::pair<int, double>> negative_lines;
  std::string negative_var;

  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto &cells = table.rows[i];
    ParsedRow row;
    row.line = table.line_of_row[i];
    row.y.resize(n_vars);
    for (int r = 0; r < n_vars; ++r) {
      const auto &spec = config.variables[r];
      const std::string &cell = cells[var_col[r]];
      if (is_missing_token(cell)) {
        row.y[r] = missing_value();
        continue;
      }
      double y = 0.0;
      if (!parse_double(cell, y))
        data_fail(origin, "line " + std::to_string(row.line) +
                              ": cannot parse '" + cell + "' in column '" +
                              spec.name + "'");
      if (spec.family == Family::ZeroInflatedGamma &&
          std::abs(y) <= config.zero_epsilon)
        y = 0.0;
      const bool needs_nonneg = spec.family == Family::Gamma ||
                                spec.family == Family::ZeroInflatedGamma ||
                                spec.transform == Transform::Sqrt;
      if (needs_nonneg && y < 0.0) {
        if (negative_lines.empty()) negative_var = spec.name;
        if (spec.name == negative_var)
          negative_lines.emplace_back(row.line, y);
        continue;
      }
      row.y[r] = apply_transform(spec.transform, y);
    }
    if (time_col >= 0) {
      const std::string &cell = cells[time_col];
      if (is_missing_token(cell)) {
        if (windowed)
          data_fail(origin, "line " + std::to_string(row.line) +
                                ": missing time value");
      } else if (!parse_double(cell, row.time)) {
        data_fail(origin, "line " + std::to_string(row.line) +
                              ": cannot parse '" + cell + "' in column '" +
                              config.time_column + "'");
      }
    }
    if (animal_col >= 0) {
      row.animal = cells[animal_col];
      if (row.animal.empty())
        data_fail(origin,
                  "line " + std::to_string(row.line) + ": empty animal id");
    }
    if (segment_col >= 0) {
      row.segment_key = cells[segment_col];
      if (row.segment_key.empty())
        data_fail(origin,
                  "line " + std::to_string(row.line) + ": empty segment id");
    }
    rows.push_back(std::move(row));
  }

  if (!negative_lines.empty()) {
    std::ostringstream msg;
    msg << "validation: " << origin << ": negative values for non-negative variable '"
        << negative_var << "':";
    const std::size_t shown = std::min<std::size_t>(negative_lines.size(), 10);
    for (std::size_t i = 0; i < shown; ++i)
      msg << (i ? ", " : " ") << "line " << negative_lines[i].first << " ("
          << format_number(negative_lines[i].second) << ")";
    if (negative_lines.size() > shown)
      msg << " and " << negative_lines.size() - shown << " more";
    throw Error(ErrorCategory::data, msg.str());
  }
  if (rows.empty()) data_fail(origin, "no data rows");

  // animals in order of first appearance
  std::vector<std::string> animal_order;
  std::map<std::string, std::vector<std::size_t>> rows_of_animal;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto &id = rows[i].animal; // "" for a single-animal file
    if (rows_of_animal.find(id) == rows_of_animal.end())
      animal_order.push_back(id);
    rows_of_animal[id].push_back(i);
  }

  SegmentedSeries out;
  for (const auto &var : config.variables)
    out.variable_names.push_back(var.name);

  for (std::size_t a = 0; a < animal_order.size(); ++a) {
    const auto &indices = rows_of_animal[animal_order[a]];
    // cut this animal's rows into [begin, end) runs plus a label each
    std::vector<std::pair<std::pair<std::size_t, std::size_t>, std::string>> runs;
    switch (seg.mode) {
    case SegmentationRule::Mode::ByCount: {
      for (std::size_t begin = 0; begin < indices.size();
           begin += seg.count) {
        const auto end = std::min(indices.size(),
                                  begin + static_cast<std::size_t>(seg.count));
        runs.push_back({{begin, end},
                        std::to_string(begin / seg.count + 1)});
      }
      break;
    }
    case SegmentationRule::Mode::ByTimeWindow: {
      const double t0 = rows[indices[0]].time;
      double prev = t0;
      std::size_t begin = 0;
      long current = 0;
      for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto &row = rows[indices[i]];
        if (row.time < prev)
          data_fail(origin,
                    "line " + std::to_string(row.line) +
                        ": time must be non-decreasing within an animal");
        prev = row.time;
        const long w =
            static_cast<long>(std::floor((row.time - t0) / seg.window));
        if (i == 0) current = w;
        if (w != current) {
          runs.push_back({{begin, i},
                          format_number(t0 + current * seg.window)});
          begin = i;
          current = w;
        }
      }
      runs.push_back(
          {{begin, indices.size()}, format_number(t0 + current * seg.window)});
      break;
    }
    case SegmentationRule::Mode::ByColumn: {
      std::size_t begin = 0;
      for (std::size_t i = 1; i <= indices.size(); ++i) {
        if (i == indices.size() ||
            rows[indices[i]].segment_key != rows[indices[begin]].segment_key) {
          runs.push_back({{begin, i}, rows[indices[begin]].segment_key});
          begin = i;
        }
      }
      break;
    }
    }

    // a trailing partial window/chunk is dropped when shorter than min_tail
    if (!runs.empty() && seg.mode != SegmentationRule::Mode::ByColumn) {
      const auto [bounds, label] = runs.back();
      const auto run_len = bounds.second - bounds.first;
      const bool partial =
          seg.mode == SegmentationRule::Mode::ByCount
              ? run_len < static_cast<std::size_t>(seg.count)
              : true; // the last window is cut short by the recording's end
      if (partial && run_len < static_cast<std::size_t>(seg.min_tail))
        runs.pop_back();
    }

    for (const auto &[bounds, label] : runs) {
      std::vector<double> values;
      values.reserve((bounds.second - bounds.first) * n_vars);
      for (std::size_t i = bounds.first; i < bounds.second; ++i)
        for (int r = 0; r < n_vars; ++r)
          values.push_back(rows[indices[i]].y[r]);
      out.segments.emplace_back(n_vars, std::move(values));
      out.segment_labels.push_back(label);
      out.group_of_segment.push_back(static_cast<int>(a));
    }
  }

  if (out.segments.empty())
    data_fail(origin, "segmentation produced no segments");
  out.validate();
  return out;
}

SegmentedSeries ingest(const std::string &path, const ModelSpecConfig &config) {
  return ingest_from_string(read_text_file(path), config, path);
}

} // namespace hhmm
