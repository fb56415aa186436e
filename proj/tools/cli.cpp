#include "cli.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <nlohmann/json.hpp>

#include "xlcw/errors.hpp"
#include "xlcw/reporting.hpp"
#include "xlcw/rng.hpp"

namespace xlcw::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path resolve(const fs::path& base, const fs::path& p) {
  return p.empty() || p.is_absolute() ? p : base / p;
}

SamplingSpec parse_sampling(const json& j, SamplingSpec spec) {
  for (const auto& [key, value] : j.items()) {
    if (key == "n_positive") spec.n_positive = value.get<std::size_t>();
    else if (key == "n_negative") spec.n_negative = value.get<std::size_t>();
    else if (key == "seed") spec.seed = value.get<std::uint64_t>();
    else throw ValidationError(fmt::format("unknown sampling setting '{}'", key));
  }
  return spec;
}

SyntheticSpec parse_synthetic(const json& j) {
  SyntheticSpec s;
  for (const auto& [key, value] : j.items()) {
    if (key == "first_language") s.first_language = value.get<std::string>();
    else if (key == "second_language") s.second_language = value.get<std::string>();
    else if (key == "train_size") s.train_size = value.get<std::size_t>();
    else if (key == "test_size") s.test_size = value.get<std::size_t>();
    else if (key == "train_positive_rate") s.train_positive_rate = value.get<double>();
    else if (key == "test_positive_rate") s.test_positive_rate = value.get<double>();
    else if (key == "fillers") s.fillers = value.get<std::size_t>();
    else if (key == "cues_per_class") s.cues_per_class = value.get<std::size_t>();
    else if (key == "min_words") s.min_words = value.get<std::size_t>();
    else if (key == "max_words") s.max_words = value.get<std::size_t>();
    else if (key == "shared_vocabulary") s.shared_vocabulary = value.get<bool>();
    else if (key == "seed") s.seed = value.get<std::uint64_t>();
    else throw ValidationError(fmt::format("unknown synthetic setting '{}'", key));
  }
  return s;
}

json merged(json base, const json& patch) {
  if (!base.is_object()) base = json::object();
  base.merge_patch(patch);
  return base;
}

ExperimentManifest manifest_from(const json& defaults, const json& entry) {
  ExperimentManifest m;
  from_json(merged(defaults, entry), m);
  return m;
}

std::vector<json> expand_grid_entries(const json& grid) {
  const auto languages = grid.at("languages").get<std::vector<std::string>>();
  const auto setups = grid.value("setups", std::vector<std::string>{"MONO_BASELINE", "ZS"});
  const auto ks = grid.value("few_shot_k", std::vector<std::size_t>{});
  const bool incremental = grid.value("multilingual_incremental", false);
  const std::set<std::string> wanted(setups.begin(), setups.end());
  for (const auto& s : wanted) setup_from_string(s);

  auto pair_id = [](std::string_view setup, const std::string& s, const std::string& t) {
    return fmt::format("{}/{}->{}", setup, s, t);
  };
  std::vector<json> out;
  if (wanted.contains("MONO_BASELINE")) {
    for (const auto& l : languages) {
      out.push_back({{"id", fmt::format("MONO_BASELINE/{}", l)},
                     {"setup", "MONO_BASELINE"},
                     {"source_languages", {l}},
                     {"target_language", l}});
    }
  }
  for (const auto& s : languages) {
    for (const auto& t : languages) {
      if (s == t) continue;
      const auto zs_id = pair_id("ZS", s, t);
      const bool have_zs = wanted.contains("ZS");
      auto with_zs = [&](json m) {
        if (have_zs) m["compare_with"] = {zs_id};
        return m;
      };
      if (have_zs) {
        out.push_back({{"id", zs_id}, {"setup", "ZS"}, {"source_languages", {s}},
                       {"target_language", t}});
      }
      for (const auto* setup : {"ZS_TR_SRC", "ZS_TR_TRG"}) {
        if (!wanted.contains(setup)) continue;
        out.push_back(with_zs({{"id", pair_id(setup, s, t)}, {"setup", setup},
                               {"source_languages", {s}}, {"target_language", t}}));
      }
      if (wanted.contains("FS")) {
        for (const auto k : ks) {
          out.push_back(with_zs({{"id", pair_id(fmt::format("FS-k{}", k), s, t)},
                                 {"setup", "FS"},
                                 {"source_languages", {s}},
                                 {"target_language", t},
                                 {"few_shot_k", k}}));
        }
      }
      if (wanted.contains("ZS_ADV")) {
        // The ZS comparator is retrained at the adversarial batch size.
        const auto comparator = pair_id("ZS-b8", s, t);
        const json small_batch{{"batch_size", kAdversarialBatchSize}};
        out.push_back({{"id", comparator}, {"setup", "ZS"}, {"source_languages", {s}},
                       {"target_language", t}, {"hyperparams", small_batch},
                       {"variant", "b8"}});
        out.push_back({{"id", pair_id("ZS_ADV", s, t)},
                       {"setup", "ZS_ADV"},
                       {"source_languages", {s}},
                       {"target_language", t},
                       {"hyperparams", small_batch},
                       {"adv", json::object()},
                       {"variant", "b8"},
                       {"compare_with", {comparator}}});
      }
    }
  }
  if (wanted.contains("MULTI_ZS")) {
    for (const auto& t : languages) {
      std::vector<std::string> others;
      for (const auto& l : languages) {
        if (l != t) others.push_back(l);
      }
      const std::size_t lo = incremental ? 2 : others.size();
      for (std::size_t n = lo; n <= others.size(); ++n) {
        if (n < 2) continue;
        const std::vector<std::string> sources(others.begin(),
                                               others.begin() + static_cast<std::ptrdiff_t>(n));
        const auto id = n == others.size() ? fmt::format("MULTI_ZS/->{}", t)
                                           : fmt::format("MULTI_ZS-n{}/->{}", n, t);
        out.push_back({{"id", id}, {"setup", "MULTI_ZS"}, {"source_languages", sources},
                       {"target_language", t}});
      }
    }
  }
  return out;
}

std::string file_stem_for(const std::string& id) {
  std::string out;
  for (const char c : id) {
    const bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    out += keep ? c : '_';
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError(fmt::format("cannot write '{}'", path.string()));
  out << text;
}

fs::path split_path(const StudyConfig& c, const std::string& language, Role role) {
  return c.data_dir() / fmt::format("{}.{}.jsonl", language, to_string(role));
}

std::unique_ptr<TranslationProvider> make_provider(const StudyConfig& c) {
  const auto& t = c.translation;
  if (t.provider.empty()) return nullptr;
  if (t.provider == "dictionary") {
    const auto path = t.dictionary.empty() ? c.data_dir() / "dictionary.json" : t.dictionary;
    return std::make_unique<DictionaryProvider>(DictionaryProvider::load(path));
  }
  if (t.provider == "replay") {
    return std::make_unique<ReplayProvider>(t.replay_cache, t.replayed_provider);
  }
  if (t.provider == "http") return std::make_unique<HttpProvider>(t.http);
  throw ValidationError(fmt::format("unknown translation provider '{}'", t.provider));
}

TranslateOptions translate_options(const StudyConfig& c) {
  TranslateOptions o;
  o.max_attempts = c.translation.max_attempts;
  o.base_backoff = std::chrono::milliseconds(c.translation.backoff_ms);
  o.workers = c.workers;
  return o;
}

fs::path cache_path(const StudyConfig& c) {
  return c.translation.cache.empty() ? c.output / "translation-cache.jsonl" : c.translation.cache;
}

std::string summary_table(const std::map<std::string, std::pair<Split, Split>>& splits) {
  std::string out = "| Language | Train | Train #CW | Test | Test #CW |\n|---|---|---|---|---|\n";
  for (const auto& [language, pair] : splits) {
    out += fmt::format("| {} | {} | {} | {} | {} |\n", language, pair.first.size(),
                       pair.first.positives(), pair.second.size(), pair.second.positives());
  }
  return out;
}

}  // namespace

SamplingSpec StudyConfig::sampling_for(const std::string& language) const {
  const auto it = sampling_overrides.find(language);
  return it == sampling_overrides.end() ? sampling : it->second;
}

std::vector<std::string> StudyConfig::languages() const {
  std::set<std::string> out;
  for (const auto& [language, files] : raw) out.insert(language);
  if (synthetic) {
    out.insert(synthetic->first_language);
    out.insert(synthetic->second_language);
  }
  return {out.begin(), out.end()};
}

std::string StudyConfig::run_id() const { return fmt::format("{:016x}", fnv1a64(canonical)); }

std::vector<ExperimentManifest> expand_grid(const json& grid) {
  std::vector<ExperimentManifest> out;
  const json defaults = grid.value("defaults", json::object());
  for (const auto& entry : expand_grid_entries(grid)) out.push_back(manifest_from(defaults, entry));
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) continue;
    std::size_t used = 0;
    std::uint64_t value = 0;
    try {
      // stoull would wrap a leading minus sign.
      if (std::isdigit(static_cast<unsigned char>(item.front()))) value = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw ValidationError(fmt::format("bad seed '{}'", item));
    seeds.push_back(value);
  }
  if (seeds.empty()) throw ValidationError("empty seed list");
  return seeds;
}

StudyConfig parse_study_config(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ValidationError("study config must be a JSON object");
  static const std::set<std::string> known{
      "output", "workers",     "data",     "synthetic", "sampling", "sampling_overrides",
      "tsv_columns", "translation", "defaults", "manifests", "grid"};
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ValidationError(fmt::format("unknown config key '{}'", key));
  }
  StudyConfig c;
  c.canonical = j.dump();
  c.output = resolve(base_dir, j.value("output", std::string("out")));
  const auto workers = j.value("workers", 1LL);
  if (workers < 1) throw ValidationError("workers must be at least 1");
  c.workers = static_cast<std::size_t>(workers);

  const json data = j.value("data", json::object());
  for (const auto& [language, files] : data.items()) {
    LanguageFiles f;
    f.train = resolve(base_dir, files.at("train").get<std::string>());
    f.test = resolve(base_dir, files.at("test").get<std::string>());
    if (files.contains("dev")) f.dev = resolve(base_dir, files.at("dev").get<std::string>());
    c.raw[language] = f;
  }
  if (j.contains("synthetic")) c.synthetic = parse_synthetic(j.at("synthetic"));
  if (j.contains("sampling")) c.sampling = parse_sampling(j.at("sampling"), c.sampling);
  const json overrides = j.value("sampling_overrides", json::object());
  for (const auto& [language, spec] : overrides.items()) {
    c.sampling_overrides[language] = parse_sampling(spec, c.sampling);
  }
  if (j.contains("tsv_columns")) {
    const auto& cols = j.at("tsv_columns");
    c.columns.id = cols.value("id", c.columns.id);
    c.columns.text = cols.value("text", c.columns.text);
    c.columns.label = cols.value("label", c.columns.label);
  }
  if (j.contains("translation")) {
    const auto& t = j.at("translation");
    auto& s = c.translation;
    s.provider = t.value("provider", std::string());
    s.dictionary = resolve(base_dir, t.value("dictionary", std::string()));
    s.replay_cache = resolve(base_dir, t.value("replay_cache", std::string()));
    s.replayed_provider = t.value("replayed_provider", std::string("http"));
    s.cache = resolve(base_dir, t.value("cache", std::string()));
    s.max_attempts = t.value("max_attempts", s.max_attempts);
    s.backoff_ms = t.value("backoff_ms", s.backoff_ms);
    if (t.contains("http")) {
      const auto& h = t.at("http");
      s.http.base_url = h.value("base_url", s.http.base_url);
      s.http.path = h.value("path", s.http.path);
      s.http.api_key_env = h.value("api_key_env", s.http.api_key_env);
      s.http.provider_name = h.value("provider_name", s.http.provider_name);
      s.http.timeout = std::chrono::seconds(h.value("timeout_s", 30));
    }
  }

  const json defaults = j.value("defaults", json::object());
  for (const auto& entry : j.value("manifests", json::array())) {
    c.manifests.push_back(manifest_from(defaults, entry));
  }
  if (j.contains("grid")) {
    json grid = j.at("grid");
    grid["defaults"] = merged(defaults, grid.value("defaults", json::object()));
    for (auto& m : expand_grid(grid)) c.manifests.push_back(std::move(m));
  }
  return c;
}

StudyConfig load_study_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(fmt::format("cannot open config '{}'", path.string()));
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(fmt::format("config '{}': {}", path.string(), e.what()));
  }
  return parse_study_config(j, path.parent_path());
}

void apply_overrides(StudyConfig& config, const Overrides& o) {
  if (o.workers) {
    if (*o.workers < 1) throw ValidationError("--workers must be at least 1");
    config.workers = *o.workers;
  }
  if (o.output) config.output = *o.output;
  if (o.seeds) {
    for (auto& m : config.manifests) {
      m.seeds = *o.seeds;
      m.allow_any_seed_count = o.seeds->size() != kDefaultSeeds.size();
    }
    config.canonical += fmt::format("|seeds={}", fmt::join(*o.seeds, ","));
  }
}

DataStore load_prepared_data(const StudyConfig& config) {
  DataStore data;
  for (const auto& language : config.languages()) {
    for (const auto role : {Role::train, Role::test}) {
      const auto path = split_path(config, language, role);
      if (!fs::exists(path)) {
        throw PreconditionError(
            fmt::format("prepared split '{}' is missing; run prepare-data first", path.string()));
      }
      auto split = load_split(path, language, role);
      (role == Role::train ? data.train : data.test)[language] = std::move(split);
    }
  }
  return data;
}

int cmd_prepare_data(const StudyConfig& config, std::ostream& err) {
  std::map<std::string, std::pair<Split, Split>> prepared;
  if (config.synthetic) {
    const auto corpus = make_synthetic_corpus(*config.synthetic);
    for (const auto& [language, train] : corpus.train) {
      prepared[language] = {train, corpus.test.at(language)};
    }
    write_text(config.data_dir() / "dictionary.json", corpus.dictionary.to_json().dump(2) + "\n");
  }
  for (const auto& [language, files] : config.raw) {
    for (const auto& path : {files.train, files.test}) {
      if (!fs::exists(path)) {
        throw PreconditionError(
            fmt::format("missing input for language '{}': {}", language, path.string()));
      }
    }
    if (files.dev && !fs::exists(*files.dev)) {
      throw PreconditionError(
          fmt::format("missing input for language '{}': {}", language, files.dev->string()));
    }
    Split train = ingest_ct21_tsv(files.train, language, Role::train, config.columns);
    if (files.dev) {
      train = merge_train_dev(train, ingest_ct21_tsv(*files.dev, language, Role::train,
                                                     config.columns));
    }
    train = stratified_downsample(train, config.sampling_for(language));
    prepared[language] = {std::move(train),
                          ingest_ct21_tsv(files.test, language, Role::test, config.columns)};
  }
  json summary = json::object();
  for (const auto& [language, pair] : prepared) {
    save_split(split_path(config, language, Role::train), pair.first);
    save_split(split_path(config, language, Role::test), pair.second);
    summary[language] = {{"train", pair.first.size()},
                         {"train_positive", pair.first.positives()},
                         {"test", pair.second.size()},
                         {"test_positive", pair.second.positives()}};
  }
  const auto table = summary_table(prepared);
  write_text(config.data_dir() / "summary.md", table);
  write_text(config.data_dir() / "summary.json", summary.dump(2) + "\n");
  err << table;
  return 0;
}

int cmd_translate(const StudyConfig& config, const std::string& direction, std::ostream& err) {
  if (direction != "src" && direction != "trg" && direction != "both") {
    throw ValidationError(fmt::format("direction must be src, trg or both, got '{}'", direction));
  }
  const auto provider = make_provider(config);
  if (!provider) throw PreconditionError("translate: no translation provider configured");
  const auto data = load_prepared_data(config);
  TranslationCache cache(cache_path(config));
  const auto options = translate_options(config);

  // (language, role, target) jobs, deduplicated and in a stable order.
  std::set<std::tuple<std::string, Role, std::string>> jobs;
  for (const auto& m : config.manifests) {
    const auto& s = m.source_languages.front();
    if (s == m.target_language) continue;
    if (m.setup == Setup::ZS_TR_SRC && direction != "trg") jobs.insert({s, Role::train, m.target_language});
    if (m.setup == Setup::ZS_TR_TRG && direction != "src") jobs.insert({m.target_language, Role::test, s});
  }
  const auto calls_before = provider->calls();
  for (const auto& [language, role, target] : jobs) {
    const auto& split = role == Role::train ? data.train_split(language) : data.test_split(language);
    if (split.examples.empty()) continue;
    const auto translated = translate_corpus(split, target, *provider, cache, options);
    const auto report = verify_alignment(split, translated);
    if (!report.ok) {
      throw AlignmentError(fmt::format("{} {} -> {}: {}", language, to_string(role), target,
                                       fmt::join(report.diffs, "; ")));
    }
    save_split(config.output / "translations" /
                   fmt::format("{}.{}.to-{}.jsonl", language, to_string(role), target),
               translated);
    err << fmt::format("translated {} {} -> {} ({} examples)\n", language, to_string(role), target,
                       split.size());
  }
  err << fmt::format("{} translation jobs, {} provider calls, {} cached records\n", jobs.size(),
                     provider->calls() - calls_before, cache.size());
  return 0;
}

int cmd_run(const StudyConfig& config, bool dry_run, std::ostream& err) {
  std::vector<std::string> problems;
  std::set<std::string> ids;
  for (const auto& m : config.manifests) {
    try {
      m.validate();
      load_backend(m.backend_name);
    } catch (const Error& e) {
      problems.push_back(e.what());
    }
    if (!ids.insert(m.id).second) problems.push_back(fmt::format("duplicate manifest id '{}'", m.id));
  }
  if (!problems.empty()) {
    for (const auto& p : problems) err << "invalid manifest: " << p << '\n';
    return 2;
  }
  if (dry_run) {
    err << fmt::format("{} manifests valid (run id {})\n", config.manifests.size(), config.run_id());
    return 0;
  }

  const auto data = load_prepared_data(config);
  const auto provider = make_provider(config);
  std::optional<TranslationCache> cache;
  if (provider) cache.emplace(cache_path(config));
  CheckpointCache checkpoints;
  ExperimentContext ctx{&data, provider.get(), cache ? &*cache : nullptr,
                        translate_options(config), &checkpoints};
  const auto study = run_study(config.manifests, ctx, config.workers);

  const auto run_id = config.run_id();
  std::string log;
  for (const auto& r : study.results) {
    write_text(config.results_dir() / (file_stem_for(r.manifest_id) + ".json"),
               result_to_json(r, true).dump(2) + "\n");
    log += json{{"run_id", run_id}, {"event", "result"}, {"manifest_id", r.manifest_id},
                {"mean_f1", r.mean_f1}}.dump() + "\n";
    err << fmt::format("{:<28} mean F1 {:.4f}\n", r.manifest_id, r.mean_f1);
  }
  json failures = json::array();
  for (const auto& f : study.failures) {
    failures.push_back({{"manifest_id", f.manifest_id}, {"error", f.error}});
    log += json{{"run_id", run_id}, {"event", "failure"}, {"manifest_id", f.manifest_id},
                {"error", f.error}}.dump() + "\n";
    err << fmt::format("{:<28} FAILED: {}\n", f.manifest_id, f.error);
  }
  log += json{{"run_id", run_id}, {"event", "checkpoint_cache"}, {"hits", checkpoints.hits()},
              {"misses", checkpoints.misses()}}.dump() + "\n";
  write_text(config.output / "failures.json", failures.dump(2) + "\n");
  write_text(config.output / "logs" / (run_id + ".jsonl"), log);
  err << fmt::format("{} succeeded, {} failed; stage-1 cache hits {}\n", study.results.size(),
                     study.failures.size(), checkpoints.hits());
  return study.failures.empty() ? 0 : 1;
}

int cmd_report(const StudyConfig& config, std::ostream& err) {
  std::vector<RunResult> results;
  if (fs::exists(config.results_dir())) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(config.results_dir())) {
      if (entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& path : files) {
      std::ifstream in(path);
      results.push_back(result_from_json(json::parse(in)));
    }
  }
  const auto dir = config.report_dir();
  write_text(dir / "report.md", render_report(results));

  json grids = json::array();
  for (const auto& key : grid_keys(results)) {
    grids.push_back(
        grid_to_json(render_grid(results, key.setup, results, {}, key.k, key.variant)));
  }
  if (!results.empty()) grids.push_back(grid_to_json(render_comparison_table(results)));
  write_text(dir / "grids.json", grids.dump(2) + "\n");

  for (const auto& series : {few_shot_sweep(results), multilingual_sweep(results)}) {
    write_text(dir / (series.name + "_sweep.csv"), sweep_to_csv(series));
    write_text(dir / (series.name + "_sweep.meta.json"), sweep_metadata(series).dump(2) + "\n");
  }
  err << fmt::format("report for {} results written to {}\n", results.size(), dir.string());
  return 0;
}

}  // namespace xlcw::cli
