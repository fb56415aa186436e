#include "xlcw/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <set>
#include <thread>
#include <unordered_set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "xlcw/errors.hpp"
#include "xlcw/rng.hpp"

namespace xlcw {

const Split& DataStore::train_split(const std::string& language) const {
  const auto it = train.find(language);
  if (it == train.end()) {
    throw PreconditionError(fmt::format("no training split for language '{}'", language));
  }
  return it->second;
}

const Split& DataStore::test_split(const std::string& language) const {
  const auto it = test.find(language);
  if (it == test.end()) {
    throw PreconditionError(fmt::format("no test split for language '{}'", language));
  }
  return it->second;
}

CheckpointCache::Handle CheckpointCache::get_or_train(const std::string& key,
                                                      const std::function<Checkpoint()>& train) {
  std::promise<Handle> promise;
  std::shared_future<Handle> existing;
  {
    std::lock_guard lock(mutex_);
    const auto it = entries_.find(key);
    if (it != entries_.end()) {
      ++hits_;
      existing = it->second;
    } else {
      ++misses_;
      entries_.emplace(key, promise.get_future().share());
    }
  }
  // Readers wait outside the lock; the writer may still be training.
  if (existing.valid()) return existing.get();
  try {
    auto handle = std::make_shared<const Checkpoint>(train());
    promise.set_value(handle);
    return handle;
  } catch (...) {
    promise.set_exception(std::current_exception());
    throw;
  }
}

std::size_t CheckpointCache::hits() const {
  std::lock_guard lock(mutex_);
  return hits_;
}

std::size_t CheckpointCache::misses() const {
  std::lock_guard lock(mutex_);
  return misses_;
}

std::size_t CheckpointCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

namespace {

const DataStore& data_of(const ExperimentContext& ctx) {
  if (!ctx.data) throw PreconditionError("experiment context has no data store");
  return *ctx.data;
}

void expect_setup(const ExperimentManifest& m, std::initializer_list<Setup> allowed,
                  std::string_view op) {
  m.validate();
  if (std::find(allowed.begin(), allowed.end(), m.setup) == allowed.end()) {
    throw PreconditionError(fmt::format("{}: manifest '{}' has setup {}", op, m.id,
                                        to_string(m.setup)));
  }
}

Hyperparams seeded(const Hyperparams& hp, std::uint64_t seed) {
  Hyperparams out = hp;
  out.seed = seed;
  return out;
}

std::string stage1_key(std::string_view prefix, const ExperimentManifest& m, std::uint64_t seed) {
  const Hyperparams hp = seeded(m.hyperparams, 0);
  const auto hp_hash = fnv1a64(nlohmann::json(hp).dump());
  return fmt::format("{}|{}|{}|{:016x}|{}", prefix, m.source_label(), m.backend_name, hp_hash,
                     seed);
}

// Stage-1 supervised training, shared through the context's checkpoint cache when present.
CheckpointCache::Handle stage1(const ExperimentManifest& m, ExperimentContext& ctx,
                               std::string_view prefix, const Split& train, std::uint64_t seed) {
  const auto key = stage1_key(prefix, m, seed);
  auto train_fn = [&] {
    const auto backend = load_backend(m.backend_name);
    return train_supervised(train, *backend, seeded(m.hyperparams, seed),
                            StageInfo{"source", key, {}});
  };
  if (ctx.checkpoints) return ctx.checkpoints->get_or_train(key, train_fn);
  return std::make_shared<const Checkpoint>(train_fn());
}

SeedResult score(const Checkpoint& ckpt, std::uint64_t seed, const Split& evaluated,
                 const Split& gold) {
  SeedResult r;
  r.seed = seed;
  r.predictions = predict(ckpt, evaluated.examples);
  std::vector<int> predicted, labels;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    r.ids.push_back(gold.examples[i].id);
    labels.push_back(gold.examples[i].label);
    predicted.push_back(r.predictions[i].label);
  }
  r.f1 = f1_positive(predicted, labels);
  r.lineage = ckpt.lineage;
  r.audit = ckpt.audit;
  return r;
}

RunResult begin(const ExperimentManifest& m) {
  RunResult r;
  r.manifest_id = m.id;
  r.setup = m.setup;
  r.source = m.source_label();
  r.target_language = m.target_language;
  r.baseline = m.is_baseline();
  r.few_shot_k = m.few_shot_k;
  r.n_sources = m.source_languages.size();
  r.variant = m.variant;
  return r;
}

void finish(RunResult& r, const ExperimentManifest& m) {
  std::vector<double> f1s;
  for (const auto& s : r.per_seed) f1s.push_back(s.f1.value);
  r.mean_f1 = aggregate_seeds(f1s, m.allow_any_seed_count);
  for (const auto& s : r.per_seed) {
    if (s.f1.degenerate) {
      r.warnings.push_back(fmt::format("seed {}: degenerate F1 (no positives)", s.seed));
    }
  }
}

TranslationProvider& provider_of(const ExperimentContext& ctx, const ExperimentManifest& m) {
  if (!ctx.provider || !ctx.translation_cache) {
    throw PreconditionError(
        fmt::format("manifest '{}': translation provider and cache are required", m.id));
  }
  return *ctx.provider;
}

std::string manifest_snapshot(const ExperimentManifest& m) { return nlohmann::json(m).dump(); }

}  // namespace

RunResult run_zero_shot(const ExperimentManifest& m, ExperimentContext& ctx) {
  expect_setup(m, {Setup::ZS, Setup::MONO_BASELINE}, "run_zero_shot");
  const auto& data = data_of(ctx);
  const auto& train = data.train_split(m.source_languages.front());
  const auto& test = data.test_split(m.target_language);
  RunResult r = begin(m);
  for (const auto seed : m.seeds) {
    const auto ckpt = stage1(m, ctx, "source", train, seed);
    r.per_seed.push_back(score(*ckpt, seed, test, test));
  }
  finish(r, m);
  return r;
}

RunResult run_zs_tr_src(const ExperimentManifest& m, ExperimentContext& ctx) {
  expect_setup(m, {Setup::ZS_TR_SRC}, "run_zs_tr_src");
  const auto& data = data_of(ctx);
  const auto& source = m.source_languages.front();
  const auto& train = data.train_split(source);
  const auto& test = data.test_split(m.target_language);
  // Translating into the same language is the identity.
  Split translated = train;
  std::string prefix = "source";
  if (source != m.target_language) {
    auto& provider = provider_of(ctx, m);
    translated = translate_corpus(train, m.target_language, provider, *ctx.translation_cache,
                                  ctx.translate_options);
    prefix = fmt::format("translated-source:{}:{}", m.target_language, provider.name());
  }
  RunResult r = begin(m);
  for (const auto seed : m.seeds) {
    const auto ckpt = stage1(m, ctx, prefix, translated, seed);
    r.per_seed.push_back(score(*ckpt, seed, test, test));
  }
  finish(r, m);
  return r;
}

RunResult run_zs_tr_trg(const ExperimentManifest& m, ExperimentContext& ctx) {
  expect_setup(m, {Setup::ZS_TR_TRG}, "run_zs_tr_trg");
  const auto& data = data_of(ctx);
  const auto& source = m.source_languages.front();
  const auto& train = data.train_split(source);
  const auto& test = data.test_split(m.target_language);
  Split translated = test;
  if (source != m.target_language) {
    translated = translate_corpus(test, source, provider_of(ctx, m), *ctx.translation_cache,
                                  ctx.translate_options);
  }
  const auto alignment = verify_alignment(test, translated);
  if (!alignment.ok) {
    throw AlignmentError(fmt::format("manifest '{}': translated test set is misaligned: {}", m.id,
                                     fmt::join(alignment.diffs, "; ")));
  }
  RunResult r = begin(m);
  for (const auto seed : m.seeds) {
    const auto ckpt = stage1(m, ctx, "source", train, seed);
    r.per_seed.push_back(score(*ckpt, seed, translated, test));
  }
  finish(r, m);
  return r;
}

RunResult run_few_shot(const ExperimentManifest& m, ExperimentContext& ctx) {
  expect_setup(m, {Setup::FS}, "run_few_shot");
  const auto& data = data_of(ctx);
  const auto& train = data.train_split(m.source_languages.front());
  const auto& target_train = data.train_split(m.target_language);
  const auto& test = data.test_split(m.target_language);
  const auto k = *m.few_shot_k;

  std::vector<std::vector<Example>> shot_sets;
  for (std::size_t rep = 0; rep < m.shot_repeats; ++rep) {
    const auto shot_seed =
        rep == 0 ? m.few_shot_seed : derive_seed(m.few_shot_seed, fmt::format("repeat-{}", rep));
    shot_sets.push_back(sample_few_shots(target_train, k, shot_seed, m.positive_majority));
  }

  RunResult r = begin(m);
  const auto snapshot = manifest_snapshot(m);
  for (const auto seed : m.seeds) {
    const auto start = stage1(m, ctx, "source", train, seed);
    SeedResult first;
    double total = 0.0;
    for (std::size_t rep = 0; rep < shot_sets.size(); ++rep) {
      const auto ckpt = continue_training(*start, shot_sets[rep], seeded(m.hyperparams, seed),
                                          StageInfo{"few_shot", m.id, snapshot});
      auto s = score(ckpt, seed, test, test);
      total += s.f1.value;
      if (rep == 0) first = std::move(s);
      if (m.shot_repeats > 1) first.repeat_f1.push_back(rep == 0 ? first.f1.value : s.f1.value);
    }
    if (m.shot_repeats > 1) first.f1.value = total / static_cast<double>(m.shot_repeats);
    r.per_seed.push_back(std::move(first));
  }
  finish(r, m);
  return r;
}

RunResult run_adversarial(const ExperimentManifest& m, ExperimentContext& ctx) {
  expect_setup(m, {Setup::ZS_ADV}, "run_adversarial");
  const auto& data = data_of(ctx);
  const auto& train = data.train_split(m.source_languages.front());
  const auto& target_train = data.train_split(m.target_language);
  const auto& test = data.test_split(m.target_language);
  const auto& adv = *m.adv;
  const auto n_unlabeled =
      adv.unlabeled_target_size.value_or(std::min(train.size(), target_train.size()));

  RunResult r = begin(m);
  const auto snapshot = manifest_snapshot(m);
  const auto backend = load_backend(m.backend_name);
  for (const auto seed : m.seeds) {
    const auto pool =
        sample_unlabeled_target(target_train, n_unlabeled, derive_seed(seed, "unlabeled-target"));
    const auto ckpt = train_adversarial(train, pool, *backend, seeded(m.hyperparams, seed), adv,
                                        StageInfo{"adversarial", m.id, snapshot});
    r.per_seed.push_back(score(ckpt, seed, test, test));
  }
  finish(r, m);
  return r;
}

RunResult run_multilingual(const ExperimentManifest& m, ExperimentContext& ctx) {
  expect_setup(m, {Setup::MULTI_ZS}, "run_multilingual");
  const auto& data = data_of(ctx);
  std::vector<Split> sources;
  for (const auto& language : m.source_languages) sources.push_back(data.train_split(language));
  const auto& test = data.test_split(m.target_language);
  const auto pool = build_multilingual_pool(
      sources, m.sampling.n_positive + m.sampling.n_negative, m.sampling.n_positive,
      m.sampling.seed);
  const auto prefix = fmt::format("multilingual:{}+{}:{}", m.sampling.n_positive,
                                  m.sampling.n_negative, m.sampling.seed);
  RunResult r = begin(m);
  for (const auto seed : m.seeds) {
    const auto ckpt = stage1(m, ctx, prefix, pool, seed);
    r.per_seed.push_back(score(*ckpt, seed, test, test));
  }
  finish(r, m);
  return r;
}

RunResult run_manifest(const ExperimentManifest& m, ExperimentContext& ctx) {
  switch (m.setup) {
    case Setup::ZS:
    case Setup::MONO_BASELINE:
      return run_zero_shot(m, ctx);
    case Setup::ZS_TR_SRC:
      return run_zs_tr_src(m, ctx);
    case Setup::ZS_TR_TRG:
      return run_zs_tr_trg(m, ctx);
    case Setup::FS:
      return run_few_shot(m, ctx);
    case Setup::ZS_ADV:
      return run_adversarial(m, ctx);
    case Setup::MULTI_ZS:
      return run_multilingual(m, ctx);
  }
  throw PreconditionError("run_manifest: unknown setup");
}

void fill_comparisons(std::span<const ExperimentManifest> manifests,
                      std::vector<RunResult>& results) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < results.size(); ++i) index[results[i].manifest_id] = i;
  std::map<std::string, const ExperimentManifest*> by_id;
  for (const auto& m : manifests) by_id[m.id] = &m;

  for (auto& r : results) {
    const auto mit = by_id.find(r.manifest_id);
    if (mit == by_id.end()) continue;
    const auto& m = *mit->second;
    std::vector<std::string> others;
    if (!r.baseline) {
      for (const auto& other : manifests) {
        if (other.is_baseline() && other.target_language == m.target_language) {
          others.push_back(other.id);
        }
      }
    }
    for (const auto& id : m.compare_with) {
      if (std::find(others.begin(), others.end(), id) == others.end()) others.push_back(id);
    }
    r.comparisons.clear();
    for (const auto& id : others) {
      const auto it = index.find(id);
      if (it == index.end() || id == r.manifest_id) continue;
      const auto& other = results[it->second];
      std::map<std::uint64_t, double> other_f1;
      for (const auto& s : other.per_seed) other_f1[s.seed] = s.f1.value;
      std::vector<double> a, b;
      for (const auto& s : r.per_seed) {
        const auto hit = other_f1.find(s.seed);
        if (hit == other_f1.end()) continue;
        a.push_back(s.f1.value);
        b.push_back(hit->second);
      }
      if (a.size() < 2) {
        r.warnings.push_back(fmt::format("no paired seeds with '{}'", id));
        continue;
      }
      const auto t = paired_t_test(a, b);
      r.comparisons.push_back({id, t.p_value, t.t_statistic, is_significant(t.p_value)});
    }
  }
}

StudyResult run_study(std::span<const ExperimentManifest> manifests, ExperimentContext& ctx,
                      std::size_t workers) {
  std::set<std::string> ids;
  for (const auto& m : manifests) {
    if (!ids.insert(m.id).second) {
      throw ValidationError(fmt::format("duplicate manifest id '{}' in study", m.id));
    }
  }
  CheckpointCache local_cache;
  ExperimentContext run_ctx = ctx;
  if (!run_ctx.checkpoints) run_ctx.checkpoints = &local_cache;

  std::vector<std::optional<RunResult>> slots(manifests.size());
  std::vector<std::string> errors(manifests.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < manifests.size(); i = next++) {
      try {
        slots[i] = run_manifest(manifests[i], run_ctx);
      } catch (const std::exception& e) {
        errors[i] = e.what();
        if (errors[i].empty()) errors[i] = "unknown error";
      }
    }
  };
  const auto n_workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(1, manifests.size()));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }

  StudyResult study;
  for (std::size_t i = 0; i < manifests.size(); ++i) {
    if (slots[i]) {
      study.results.push_back(std::move(*slots[i]));
    } else {
      study.failures.push_back({manifests[i].id, errors[i]});
    }
  }
  fill_comparisons(manifests, study.results);
  return study;
}

LeakageReport audit_leakage(std::span<const ExperimentManifest> manifests,
                            std::span<const RunResult> results, const DataStore& data) {
  LeakageReport report;
  std::map<std::string, const RunResult*> by_id;
  for (const auto& r : results) by_id[r.manifest_id] = &r;
  for (const auto& m : manifests) {
    if (m.is_baseline()) continue;
    const auto it = by_id.find(m.id);
    if (it == by_id.end()) continue;
    ++report.checked_manifests;
    std::unordered_set<std::string> test_ids;
    for (const auto& e : data.test_split(m.target_language).examples) test_ids.insert(e.id);

    for (const auto& s : it->second->per_seed) {
      std::size_t labeled_target = 0;
      std::size_t unlabeled_target = 0;
      for (const auto& a : s.audit) {
        if (test_ids.contains(a.id)) {
          report.violations.push_back(fmt::format("{} seed {}: test id '{}' used in training",
                                                  m.id, s.seed, a.id));
        }
        if (a.language == m.target_language && a.origin == Origin::original) {
          ++(a.labeled ? labeled_target : unlabeled_target);
        }
      }
      const std::size_t allowed_labeled = m.setup == Setup::FS ? *m.few_shot_k : 0;
      if (labeled_target != allowed_labeled) {
        report.violations.push_back(fmt::format(
            "{} seed {}: {} labeled original target-language training examples, expected {}",
            m.id, s.seed, labeled_target, allowed_labeled));
      }
      if (unlabeled_target > 0 && m.setup != Setup::ZS_ADV) {
        report.violations.push_back(fmt::format(
            "{} seed {}: {} unlabeled target-language examples outside ZS_ADV", m.id, s.seed,
            unlabeled_target));
      }
    }
  }
  return report;
}

}  // namespace xlcw
