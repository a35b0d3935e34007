#ifndef HHMM_MODEL_IO_HPP
#define HHMM_MODEL_IO_HPP

#include "hhmm/ingest.hpp"

#include <cstdint>
#include <string>

namespace hhmm {

// Provenance block a fit stamps into the model file.
struct FitInfo {
  bool present = false;
  double loglik = 0.0;
  double aic = 0.0;
  double bic = 0.0;
  int n_params = 0;
  bool converged = false;
  int n_restarts_used = 0;
  std::uint64_t best_restart = 0;
};

// A model plus the data bindings needed to apply it to raw files: fitted
// parameters, the ingestion spec (columns, transforms, segmentation) and
// optional fit provenance. On disk this is a versioned JSON document
// (schema tag "hhmm-model/1") with full-precision numbers.
struct StoredModel {
  HierarchicalModel model;
  ModelSpecConfig spec;
  FitInfo fit;
};

std::string model_to_string(const StoredModel &stored);
StoredModel model_from_string(const std::string &text,
                              const std::string &origin = "<model>");
void save_model(const StoredModel &stored, const std::string &path);
StoredModel load_model(const std::string &path);

// File plumbing shared by all formats: whole-file read, and write via a
// temp file plus rename so failures never leave partial outputs behind.
std::string read_text_file(const std::string &path);
void write_text_atomic(const std::string &path, const std::string &content);

} // namespace hhmm

#endif
