#ifndef HHMM_INGEST_HPP
#define HHMM_INGEST_HPP

#include "hhmm/hier.hpp"

#include <string>
#include <vector>

namespace hhmm {

// How raw rows are cut into segments. by_time_window groups rows of one
// animal into consecutive windows of the given duration (in time-column
// units), anchored at the animal's first timestamp; a row belongs to the
// window containing its start. by_count cuts fixed-size chunks in row
// order. by_column starts a new segment at every change of the id column.
// A trailing partial window or chunk is dropped when it holds fewer than
// min_tail rows.
struct SegmentationRule {
  enum class Mode { ByTimeWindow, ByCount, ByColumn };
  Mode mode = Mode::ByCount;
  double window = 0.0;  // ByTimeWindow
  int count = 0;        // ByCount
  std::string column;   // ByColumn
  int min_tail = 3;
};

struct VariableSpec {
  std::string name; // also the data column name
  Family family = Family::Normal;
  Transform transform = Transform::None;
};

// Everything needed to turn a delimited text file into a SegmentedSeries
// plus the shape of the model fitted to it.
struct ModelSpecConfig {
  int k_internal = 1;
  int n_production = 1;
  bool share_emissions = true;
  InitialDistribution::Policy internal_initial =
      InitialDistribution::Policy::Stationary;
  InitialDistribution::Policy production_initial =
      InitialDistribution::Policy::Stationary;
  std::vector<VariableSpec> variables;
  SegmentationRule segmentation;
  std::string time_column = "time";
  std::string animal_column;  // empty: the file is one animal
  double zero_epsilon = 0.0;  // |y| <= eps snaps to an exact zero
                              // (zero-inflated variables, before transforms)

  void validate() const;
};

// Config files are JSON (comments allowed).
ModelSpecConfig config_from_string(const std::string &text,
                                   const std::string &origin = "<config>");
ModelSpecConfig load_config(const std::string &path);

// Starting-shape model for fit(): uniform t.p.m.s, unit emissions, the
// configured policies. Parameter values are placeholders; fit() replaces
// them with its data-driven start.
HierarchicalModel prototype_from_config(const ModelSpecConfig &config);

// Reads a comma-delimited file with a header row: validates cells,
// applies zero-snapping and transforms, groups rows by animal and cuts
// segments per the rule. Cell values "", "NA", "na", "nan" are missing.
SegmentedSeries ingest(const std::string &path, const ModelSpecConfig &config);
SegmentedSeries ingest_from_string(const std::string &text,
                                   const ModelSpecConfig &config,
                                   const std::string &origin = "<memory>");

} // namespace hhmm

#endif
