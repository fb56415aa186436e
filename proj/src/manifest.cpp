#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "xlcw/errors.hpp"
#include "xlcw/experiments.hpp"

namespace xlcw {
namespace {

constexpr std::array<std::pair<Setup, std::string_view>, 7> kSetupNames{{
    {Setup::ZS, "ZS"},
    {Setup::ZS_TR_SRC, "ZS_TR_SRC"},
    {Setup::ZS_TR_TRG, "ZS_TR_TRG"},
    {Setup::FS, "FS"},
    {Setup::ZS_ADV, "ZS_ADV"},
    {Setup::MULTI_ZS, "MULTI_ZS"},
    {Setup::MONO_BASELINE, "MONO_BASELINE"},
}};

nlohmann::json prediction_json(const std::string& id, const Prediction& p) {
  return {{"id", id}, {"label", p.label}, {"p_pos", p.p_pos}};
}

// JSON has no infinities; a degenerate t statistic is written as a string.
nlohmann::json number_or_text(double x) {
  if (std::isfinite(x)) return x;
  return std::isnan(x) ? "nan" : (x > 0 ? "inf" : "-inf");
}

double number_from(const nlohmann::json& j) {
  if (j.is_number()) return j.get<double>();
  return std::stod(j.get<std::string>());
}

}  // namespace

std::string_view to_string(Setup setup) {
  for (const auto& [s, name] : kSetupNames) {
    if (s == setup) return name;
  }
  return "?";
}

Setup setup_from_string(std::string_view text) {
  for (const auto& [s, name] : kSetupNames) {
    if (name == text) return s;
  }
  throw ValidationError(fmt::format("unknown setup '{}'", text));
}

bool ExperimentManifest::is_baseline() const {
  return setup == Setup::MONO_BASELINE ||
         (setup == Setup::ZS && source_languages.size() == 1 &&
          source_languages.front() == target_language);
}

std::string ExperimentManifest::source_label() const {
  return fmt::format("{}", fmt::join(source_languages, "+"));
}

void ExperimentManifest::validate() const {
  auto fail = [&](std::string_view what) {
    throw ValidationError(fmt::format("manifest '{}': {}", id, what));
  };
  if (id.empty()) throw ValidationError("manifest without an id");
  if (target_language.empty()) fail("target_language is empty");
  if (backend_name.empty()) fail("backend_name is empty");
  try {
    hyperparams.validate();
  } catch (const ValidationError& e) {
    fail(e.what());
  }
  if (seeds.empty()) fail("no seeds");
  if (!allow_any_seed_count && seeds.size() != kDefaultSeeds.size()) {
    fail(fmt::format("expected {} seeds, got {}", kDefaultSeeds.size(), seeds.size()));
  }
  if (std::set(seeds.begin(), seeds.end()).size() != seeds.size()) fail("duplicate seeds");

  const std::set<std::string> sources(source_languages.begin(), source_languages.end());
  if (sources.size() != source_languages.size()) fail("duplicate source languages");
  if (setup == Setup::MULTI_ZS) {
    if (source_languages.size() < 2) fail("MULTI_ZS needs at least two source languages");
    if (sources.contains(target_language)) fail("MULTI_ZS sources must exclude the target");
    if (sampling.n_positive + sampling.n_negative == 0) fail("MULTI_ZS pool size is zero");
  } else if (source_languages.size() != 1) {
    fail(fmt::format("{} needs exactly one source language", to_string(setup)));
  }
  if (setup == Setup::MONO_BASELINE && source_languages.front() != target_language) {
    fail("MONO_BASELINE trains and tests on the target language");
  }
  if (setup == Setup::FS) {
    if (!few_shot_k || *few_shot_k < 1) fail("FS needs few_shot_k >= 1");
    if (shot_repeats < 1) fail("shot_repeats must be at least 1");
  } else if (few_shot_k) {
    fail("few_shot_k is only meaningful for FS");
  }
  if (setup == Setup::ZS_ADV) {
    if (!adv) fail("ZS_ADV needs an adv section");
    try {
      adv->validate();
    } catch (const ValidationError& e) {
      fail(e.what());
    }
    if (source_languages.front() == target_language) fail("ZS_ADV source equals target");
  }
  if (setup == Setup::FS && source_languages.front() == target_language) {
    fail("FS source equals target");
  }
}

void to_json(nlohmann::json& j, const ExperimentManifest& m) {
  j = nlohmann::json{{"id", m.id},
                     {"setup", to_string(m.setup)},
                     {"source_languages", m.source_languages},
                     {"target_language", m.target_language},
                     {"backend", m.backend_name},
                     {"hyperparams", m.hyperparams},
                     {"seeds", m.seeds},
                     {"allow_any_seed_count", m.allow_any_seed_count},
                     {"few_shot_seed", m.few_shot_seed},
                     {"shot_repeats", m.shot_repeats},
                     {"positive_majority", m.positive_majority},
                     {"sampling",
                      {{"n_positive", m.sampling.n_positive},
                       {"n_negative", m.sampling.n_negative},
                       {"seed", m.sampling.seed}}},
                     {"compare_with", m.compare_with},
                     {"variant", m.variant}};
  j["few_shot_k"] = m.few_shot_k ? nlohmann::json(*m.few_shot_k) : nlohmann::json();
  j["adv"] = m.adv ? nlohmann::json(*m.adv) : nlohmann::json();
}

void from_json(const nlohmann::json& j, ExperimentManifest& m) {
  if (!j.is_object()) throw ValidationError("manifest must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "id") m.id = value.get<std::string>();
    else if (key == "setup") m.setup = setup_from_string(value.get<std::string>());
    else if (key == "source_languages") m.source_languages = value.get<std::vector<std::string>>();
    else if (key == "source_language") m.source_languages = {value.get<std::string>()};
    else if (key == "target_language") m.target_language = value.get<std::string>();
    else if (key == "backend") m.backend_name = value.get<std::string>();
    else if (key == "hyperparams") {
      Hyperparams hp = m.hyperparams;
      from_json(value, hp);
      m.hyperparams = hp;
    } else if (key == "seeds") m.seeds = value.get<std::vector<std::uint64_t>>();
    else if (key == "allow_any_seed_count") m.allow_any_seed_count = value.get<bool>();
    else if (key == "few_shot_k") {
      if (value.is_null()) m.few_shot_k.reset();
      else m.few_shot_k = value.get<std::size_t>();
    } else if (key == "few_shot_seed") m.few_shot_seed = value.get<std::uint64_t>();
    else if (key == "shot_repeats") m.shot_repeats = value.get<std::size_t>();
    else if (key == "positive_majority") m.positive_majority = value.get<bool>();
    else if (key == "adv") {
      if (value.is_null()) {
        m.adv.reset();
      } else {
        AdvConfig adv;
        from_json(value, adv);
        m.adv = adv;
      }
    } else if (key == "sampling") {
      for (const auto& [skey, svalue] : value.items()) {
        if (skey == "n_positive") m.sampling.n_positive = svalue.get<std::size_t>();
        else if (skey == "n_negative") m.sampling.n_negative = svalue.get<std::size_t>();
        else if (skey == "seed") m.sampling.seed = svalue.get<std::uint64_t>();
        else throw ValidationError(fmt::format("unknown sampling setting '{}'", skey));
      }
    } else if (key == "compare_with") m.compare_with = value.get<std::vector<std::string>>();
    else if (key == "variant") m.variant = value.get<std::string>();
    else throw ValidationError(fmt::format("unknown manifest key '{}'", key));
  }
}

bool SeedResult::operator==(const SeedResult& o) const {
  return seed == o.seed && ids == o.ids && predictions == o.predictions && f1 == o.f1 &&
         repeat_f1 == o.repeat_f1 && lineage == o.lineage && audit == o.audit;
}

bool RunResult::operator==(const RunResult& o) const {
  return manifest_id == o.manifest_id && setup == o.setup && source == o.source &&
         target_language == o.target_language && baseline == o.baseline &&
         few_shot_k == o.few_shot_k && n_sources == o.n_sources && variant == o.variant &&
         per_seed == o.per_seed &&
         mean_f1 == o.mean_f1 && comparisons == o.comparisons && warnings == o.warnings;
}

nlohmann::json result_to_json(const RunResult& r, bool with_audit) {
  nlohmann::json per_seed = nlohmann::json::array();
  for (const auto& s : r.per_seed) {
    nlohmann::json predictions = nlohmann::json::array();
    for (std::size_t i = 0; i < s.predictions.size(); ++i) {
      predictions.push_back(prediction_json(s.ids[i], s.predictions[i]));
    }
    nlohmann::json lineage = nlohmann::json::array();
    for (const auto& l : s.lineage) {
      lineage.push_back({{"stage", l.stage}, {"manifest_id", l.manifest_id}, {"seed", l.seed}});
    }
    nlohmann::json entry{{"seed", s.seed},
                         {"f1_positive", s.f1.value},
                         {"true_positives", s.f1.true_positives},
                         {"false_positives", s.f1.false_positives},
                         {"false_negatives", s.f1.false_negatives},
                         {"degenerate", s.f1.degenerate},
                         {"repeat_f1", s.repeat_f1},
                         {"lineage", lineage},
                         {"predictions", predictions}};
    if (with_audit) {
      nlohmann::json audit = nlohmann::json::array();
      for (const auto& a : s.audit) {
        audit.push_back({{"stage", a.stage},
                         {"id", a.id},
                         {"language", a.language},
                         {"origin", to_string(a.origin)},
                         {"labeled", a.labeled}});
      }
      entry["audit"] = std::move(audit);
    }
    per_seed.push_back(std::move(entry));
  }
  nlohmann::json comparisons = nlohmann::json::array();
  for (const auto& c : r.comparisons) {
    comparisons.push_back({{"other_manifest_id", c.other_manifest_id},
                           {"p_value", c.p_value},
                           {"t_statistic", number_or_text(c.t_statistic)},
                           {"significant", c.significant}});
  }
  nlohmann::json j{{"manifest_id", r.manifest_id},
                   {"setup", to_string(r.setup)},
                   {"source", r.source},
                   {"target_language", r.target_language},
                   {"baseline", r.baseline},
                   {"n_sources", r.n_sources},
                   {"variant", r.variant},
                   {"per_seed", per_seed},
                   {"mean_f1", r.mean_f1},
                   {"comparisons", comparisons},
                   {"warnings", r.warnings}};
  j["few_shot_k"] = r.few_shot_k ? nlohmann::json(*r.few_shot_k) : nlohmann::json();
  return j;
}

RunResult result_from_json(const nlohmann::json& j) {
  RunResult r;
  r.manifest_id = j.at("manifest_id").get<std::string>();
  r.setup = setup_from_string(j.at("setup").get<std::string>());
  r.source = j.at("source").get<std::string>();
  r.target_language = j.at("target_language").get<std::string>();
  r.baseline = j.at("baseline").get<bool>();
  r.n_sources = j.at("n_sources").get<std::size_t>();
  r.variant = j.value("variant", std::string());
  if (!j.at("few_shot_k").is_null()) r.few_shot_k = j.at("few_shot_k").get<std::size_t>();
  r.mean_f1 = j.at("mean_f1").get<double>();
  r.warnings = j.value("warnings", std::vector<std::string>{});
  for (const auto& s : j.at("per_seed")) {
    SeedResult seed;
    seed.seed = s.at("seed").get<std::uint64_t>();
    seed.f1.value = s.at("f1_positive").get<double>();
    seed.f1.true_positives = s.value("true_positives", std::size_t{0});
    seed.f1.false_positives = s.value("false_positives", std::size_t{0});
    seed.f1.false_negatives = s.value("false_negatives", std::size_t{0});
    seed.f1.degenerate = s.value("degenerate", false);
    seed.repeat_f1 = s.value("repeat_f1", std::vector<double>{});
    for (const auto& l : s.value("lineage", nlohmann::json::array())) {
      seed.lineage.push_back({l.at("stage").get<std::string>(),
                              l.at("manifest_id").get<std::string>(),
                              l.at("seed").get<std::uint64_t>()});
    }
    for (const auto& p : s.value("predictions", nlohmann::json::array())) {
      seed.ids.push_back(p.at("id").get<std::string>());
      seed.predictions.push_back({p.at("label").get<int>(), p.at("p_pos").get<double>()});
    }
    for (const auto& a : s.value("audit", nlohmann::json::array())) {
      seed.audit.push_back({a.at("stage").get<std::string>(), a.at("id").get<std::string>(),
                            a.at("language").get<std::string>(),
                            origin_from_string(a.at("origin").get<std::string>()),
                            a.at("labeled").get<bool>()});
    }
    r.per_seed.push_back(std::move(seed));
  }
  for (const auto& c : j.value("comparisons", nlohmann::json::array())) {
    r.comparisons.push_back({c.at("other_manifest_id").get<std::string>(),
                             c.at("p_value").get<double>(), number_from(c.at("t_statistic")),
                             c.at("significant").get<bool>()});
  }
  return r;
}

}  // namespace xlcw
