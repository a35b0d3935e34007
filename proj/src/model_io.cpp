#include "hhmm/model_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "json.hpp"

namespace hhmm {

namespace {

using nlohmann::json;
using Policy = InitialDistribution::Policy;

constexpr const char *kSchemaTag = "hhmm-model/1";

[[noreturn]] void schema_fail(const std::string &origin,
                              const std::string &what) {
  throw Error(ErrorCategory::data, "schema: " + origin + ": " + what);
}

const json &need(const json &j, const char *key, const std::string &origin) {
  const auto it = j.find(key);
  if (it == j.end())
    schema_fail(origin, std::string("missing key '") + key + "'");
  return *it;
}

json initial_to_json(const InitialDistribution &init) {
  switch (init.policy) {
  case Policy::Stationary: return {{"policy", "stationary"}};
  case Policy::Estimated: return {{"policy", "estimated"}, {"logits", init.params}};
  case Policy::Fixed: return {{"policy", "fixed"}, {"probs", init.params}};
  }
  return {};
}

InitialDistribution initial_from_json(const json &j, const std::string &origin) {
  const std::string policy = need(j, "policy", origin).get<std::string>();
  if (policy == "stationary") return InitialDistribution::stationary();
  if (policy == "estimated")
    return InitialDistribution::estimated(
        need(j, "logits", origin).get<std::vector<double>>());
  if (policy == "fixed")
    return InitialDistribution::fixed(
        need(j, "probs", origin).get<std::vector<double>>());
  schema_fail(origin, "unknown initial policy '" + policy + "'");
}

json tpm_to_json(const TransitionMatrix &g) {
  json rows = json::array();
  for (int i = 0; i < g.size(); ++i) {
    json row = json::array();
    for (int j = 0; j < g.size(); ++j) row.push_back(g(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

TransitionMatrix tpm_from_json(const json &j, const std::string &origin) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  if (rows.empty()) schema_fail(origin, "empty t.p.m.");
  return TransitionMatrix::from_rows(rows);
}

json density_to_json(const Density &d) {
  if (const auto *g = std::get_if<GammaParams>(&d))
    return {{"shape", g->shape}, {"rate", g->rate}};
  if (const auto *z = std::get_if<ZeroInflatedGammaParams>(&d))
    return {{"zero_mass", z->zero_mass},
            {"shape", z->gamma.shape},
            {"rate", z->gamma.rate}};
  const auto &n = std::get<NormalParams>(d);
  return {{"mean", n.mean}, {"sd", n.sd}};
}

Density density_from_json(Family family, const json &j,
                          const std::string &origin) {
  switch (family) {
  case Family::Gamma:
    return GammaParams{need(j, "shape", origin).get<double>(),
                       need(j, "rate", origin).get<double>()};
  case Family::ZeroInflatedGamma:
    return ZeroInflatedGammaParams{
        need(j, "zero_mass", origin).get<double>(),
        {need(j, "shape", origin).get<double>(),
         need(j, "rate", origin).get<double>()}};
  case Family::Normal:
    return NormalParams{need(j, "mean", origin).get<double>(),
                        need(j, "sd", origin).get<double>()};
  }
  schema_fail(origin, "unknown family");
}

json segmentation_to_json(const SegmentationRule &rule) {
  switch (rule.mode) {
  case SegmentationRule::Mode::ByTimeWindow:
    return {{"mode", "by_time_window"},
            {"duration", rule.window},
            {"min_tail", rule.min_tail}};
  case SegmentationRule::Mode::ByCount:
    return {{"mode", "by_count"},
            {"n_obs", rule.count},
            {"min_tail", rule.min_tail}};
  case SegmentationRule::Mode::ByColumn:
    return {{"mode", "by_column"}, {"column", rule.column}};
  }
  return {};
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

std::string model_to_string(const StoredModel &stored) {
  const auto &model = stored.model;
  model.validate();
  const int k = model.k_internal();
  const int n_vars = model.emissions(0).n_vars();
  if (static_cast<int>(stored.spec.variables.size()) != n_vars)
    throw Error(ErrorCategory::data,
                "layout: stored spec and model disagree on variable count");

  json j;
  j["schema"] = kSchemaTag;
  j["k_internal"] = k;
  j["n_production"] = model.n_production();
  j["share_emissions"] = model.share_emissions;
  j["internal"] = {{"tpm", tpm_to_json(model.internal_tpm)},
                   {"initial", initial_to_json(model.internal_initial)}};

  json production = json::array();
  for (const auto &chain : model.production)
    production.push_back({{"tpm", tpm_to_json(chain.tpm)},
                          {"initial", initial_to_json(chain.initial)}});
  j["production"] = std::move(production);

  const int blocks = model.share_emissions ? 1 : k;
  json emissions = json::array();
  for (int b = 0; b < blocks; ++b) {
    json block = json::array();
    for (int r = 0; r < n_vars; ++r) {
      const auto &var = model.emissions(b).variables[r];
      json states = json::array();
      for (const auto &d : var.by_state) states.push_back(density_to_json(d));
      block.push_back(
          {{"name", var.name},
           {"family", family_name(family_of(var.by_state[0]))},
           {"transform", transform_name(stored.spec.variables[r].transform)},
           {"states", std::move(states)}});
    }
    emissions.push_back(std::move(block));
  }
  j["emissions"] = std::move(emissions);

  json data;
  data["time_column"] = stored.spec.time_column;
  if (!stored.spec.animal_column.empty())
    data["animal_column"] = stored.spec.animal_column;
  if (stored.spec.zero_epsilon > 0.0)
    data["zero_epsilon"] = stored.spec.zero_epsilon;
  data["segmentation"] = segmentation_to_json(stored.spec.segmentation);
  j["data"] = std::move(data);

  if (stored.fit.present)
    j["fit"] = {{"loglik", stored.fit.loglik},
                {"aic", stored.fit.aic},
                {"bic", stored.fit.bic},
                {"n_params", stored.fit.n_params},
                {"converged", stored.fit.converged},
                {"n_restarts_used", stored.fit.n_restarts_used},
                {"best_restart", stored.fit.best_restart}};

  return j.dump(2) + "\n";
}

StoredModel model_from_string(const std::string &text,
                              const std::string &origin) {
  json j;
  try {
    j = json::parse(text, nullptr, true, true);
  } catch (const json::exception &e) {
    schema_fail(origin, std::string("cannot parse model file: ") + e.what());
  }

  StoredModel stored;
  try {
    const std::string tag = need(j, "schema", origin).get<std::string>();
    if (tag != kSchemaTag)
      schema_fail(origin, "unsupported schema tag '" + tag + "' (expected " +
                              kSchemaTag + ")");
    const int k = need(j, "k_internal", origin).get<int>();
    const int n = need(j, "n_production", origin).get<int>();
    if (k < 1 || n < 1) schema_fail(origin, "state counts must be >= 1");
    stored.model.share_emissions =
        need(j, "share_emissions", origin).get<bool>();

    const auto &internal = need(j, "internal", origin);
    stored.model.internal_tpm =
        tpm_from_json(need(internal, "tpm", origin), origin);
    if (stored.model.internal_tpm.size() != k)
      schema_fail(origin, "internal t.p.m. size disagrees with k_internal");
    stored.model.internal_initial =
        initial_from_json(need(internal, "initial", origin), origin);

    const auto &production = need(j, "production", origin);
    if (static_cast<int>(production.size()) != k)
      schema_fail(origin, "expected " + std::to_string(k) +
                              " production chains, got " +
                              std::to_string(production.size()));
    for (const auto &p : production) {
      HmmParams chain;
      chain.tpm = tpm_from_json(need(p, "tpm", origin), origin);
      if (chain.tpm.size() != n)
        schema_fail(origin, "production t.p.m. size disagrees with n_production");
      chain.initial = initial_from_json(need(p, "initial", origin), origin);
      stored.model.production.push_back(std::move(chain));
    }

    const auto &emissions = need(j, "emissions", origin);
    const int blocks = stored.model.share_emissions ? 1 : k;
    if (static_cast<int>(emissions.size()) != blocks)
      schema_fail(origin, "expected " + std::to_string(blocks) +
                              " emission blocks, got " +
                              std::to_string(emissions.size()));
    std::vector<std::shared_ptr<const EmissionModel>> parsed;
    std::vector<VariableSpec> var_specs;
    for (int b = 0; b < blocks; ++b) {
      EmissionModel em;
      int r = 0;
      for (const auto &v : emissions[b]) {
        EmissionVariable var;
        var.name = need(v, "name", origin).get<std::string>();
        const Family family =
            family_from_name(need(v, "family", origin).get<std::string>());
        Transform transform = Transform::None;
        if (v.contains("transform"))
          transform = transform_from_name(v.at("transform").get<std::string>());
        const auto &states = need(v, "states", origin);
        if (static_cast<int>(states.size()) != n)
          schema_fail(origin, "variable '" + var.name + "' needs " +
                                  std::to_string(n) + " states, got " +
                                  std::to_string(states.size()));
        for (const auto &s : states)
          var.by_state.push_back(density_from_json(family, s, origin));
        if (b == 0) {
          var_specs.push_back({var.name, family, transform});
        } else {
          if (r >= static_cast<int>(var_specs.size()) ||
              var_specs[r].name != var.name)
            schema_fail(origin, "emission blocks disagree on variable names");
        }
        em.variables.push_back(std::move(var));
        ++r;
      }
      if (r != static_cast<int>(var_specs.size()))
        schema_fail(origin, "emission blocks disagree on variable count");
      parsed.push_back(std::make_shared<const EmissionModel>(std::move(em)));
    }
    for (int c = 0; c < k; ++c)
      stored.model.production[c].emissions =
          parsed[stored.model.share_emissions ? 0 : c];

    stored.spec.k_internal = k;
    stored.spec.n_production = n;
    stored.spec.share_emissions = stored.model.share_emissions;
    stored.spec.internal_initial = stored.model.internal_initial.policy;
    stored.spec.production_initial = stored.model.production[0].initial.policy;
    stored.spec.variables = std::move(var_specs);

    const auto &data = need(j, "data", origin);
    stored.spec.time_column = need(data, "time_column", origin).get<std::string>();
    if (data.contains("animal_column"))
      stored.spec.animal_column = data.at("animal_column").get<std::string>();
    if (data.contains("zero_epsilon"))
      stored.spec.zero_epsilon = data.at("zero_epsilon").get<double>();
    stored.spec.segmentation =
        segmentation_from_json(need(data, "segmentation", origin), origin);

    if (j.contains("fit")) {
      const auto &fit = j.at("fit");
      stored.fit.present = true;
      stored.fit.loglik = need(fit, "loglik", origin).get<double>();
      stored.fit.aic = need(fit, "aic", origin).get<double>();
      stored.fit.bic = need(fit, "bic", origin).get<double>();
      stored.fit.n_params = need(fit, "n_params", origin).get<int>();
      stored.fit.converged = need(fit, "converged", origin).get<bool>();
      stored.fit.n_restarts_used =
          need(fit, "n_restarts_used", origin).get<int>();
      stored.fit.best_restart =
          need(fit, "best_restart", origin).get<std::uint64_t>();
    }
  } catch (const json::exception &e) {
    schema_fail(origin, std::string("malformed model file: ") + e.what());
  }

  stored.model.validate();
  stored.spec.validate();
  return stored;
}

void save_model(const StoredModel &stored, const std::string &path) {
  write_text_atomic(path, model_to_string(stored));
}

StoredModel load_model(const std::string &path) {
  return model_from_string(read_text_file(path), path);
}

std::string read_text_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorCategory::data, "io: cannot read file '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad())
    throw Error(ErrorCategory::data, "io: failed reading '" + path + "'");
  return buffer.str();
}

void write_text_atomic(const std::string &path, const std::string &content) {
  const std::string tmp = path + ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw Error(ErrorCategory::data,
                  "io: cannot open '" + tmp + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::remove(tmp.c_str());
      throw Error(ErrorCategory::data, "io: failed writing '" + tmp + "'");
    }
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw Error(ErrorCategory::data,
                "io: cannot move temporary file onto '" + path + "'");
  }
}

} // namespace hhmm
