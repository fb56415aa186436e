#include <doctest.h>

#include <set>

#include <nlohmann/json.hpp>

#include "test_support.hpp"
#include "xlcw/errors.hpp"
#include "xlcw/experiments.hpp"
#include "xlcw/synthetic.hpp"

using namespace xlcw;

namespace {

struct Fixture {
  SyntheticCorpus corpus;
  DataStore data;
  TranslationCache cache;
  CheckpointCache checkpoints;
  ExperimentContext ctx;

  Fixture() : corpus(make_synthetic_corpus(spec())) {
    data.train = corpus.train;
    data.test = corpus.test;
    ctx.data = &data;
    ctx.provider = &corpus.dictionary;
    ctx.translation_cache = &cache;
    ctx.translate_options.base_backoff = std::chrono::milliseconds(0);
    ctx.checkpoints = &checkpoints;
  }

  static SyntheticSpec spec() {
    SyntheticSpec s;
    s.train_size = 48;
    s.test_size = 32;
    return s;
  }
};

Hyperparams quick() {
  Hyperparams hp;
  hp.learning_rate = 3e-3;
  hp.epochs = 2;
  hp.batch_size = 16;
  hp.max_sequence_length = 24;
  hp.hidden_units = 32;
  return hp;
}

ExperimentManifest manifest(std::string id, Setup setup, std::vector<std::string> sources,
                            std::string target) {
  ExperimentManifest m;
  m.id = std::move(id);
  m.setup = setup;
  m.source_languages = std::move(sources);
  m.target_language = std::move(target);
  m.hyperparams = quick();
  m.seeds = {1, 2};
  m.allow_any_seed_count = true;
  if (setup == Setup::FS) m.few_shot_k = 4;
  if (setup == Setup::ZS_ADV) m.adv = AdvConfig{};
  return m;
}

}  // namespace

TEST_SUITE("experiments") {
  TEST_CASE("setup names") {
    for (const auto s : {Setup::ZS, Setup::ZS_TR_SRC, Setup::ZS_TR_TRG, Setup::FS, Setup::ZS_ADV,
                         Setup::MULTI_ZS, Setup::MONO_BASELINE}) {
      CHECK(setup_from_string(to_string(s)) == s);
    }
    CHECK_THROWS_AS(setup_from_string("ZERO"), ValidationError);
  }

  TEST_CASE("manifest validation") {
    CHECK_NOTHROW(manifest("ok", Setup::ZS, {"xa"}, "xb").validate());
    auto m = manifest("seeds", Setup::ZS, {"xa"}, "xb");
    m.allow_any_seed_count = false;
    CHECK_THROWS_AS(m.validate(), ValidationError);
    m.seeds = {1, 2, 3, 4, 5};
    CHECK_NOTHROW(m.validate());
    m.seeds = {1, 1, 2, 3, 4};
    CHECK_THROWS_AS(m.validate(), ValidationError);

    CHECK_THROWS_AS(manifest("", Setup::ZS, {"xa"}, "xb").validate(), ValidationError);
    CHECK_THROWS_AS(manifest("two", Setup::ZS, {"xa", "xc"}, "xb").validate(), ValidationError);
    CHECK_THROWS_AS(manifest("multi1", Setup::MULTI_ZS, {"xa"}, "xb").validate(),
                    ValidationError);
    auto multi = manifest("multi", Setup::MULTI_ZS, {"xa", "xb"}, "xb");
    multi.sampling = {3, 3, 1};
    CHECK_THROWS_AS(multi.validate(), ValidationError);
    CHECK_THROWS_AS(manifest("mono", Setup::MONO_BASELINE, {"xa"}, "xb").validate(),
                    ValidationError);
    auto fs = manifest("fs", Setup::FS, {"xa"}, "xb");
    fs.few_shot_k.reset();
    CHECK_THROWS_AS(fs.validate(), ValidationError);
    auto zs_k = manifest("zsk", Setup::ZS, {"xa"}, "xb");
    zs_k.few_shot_k = 3;
    CHECK_THROWS_AS(zs_k.validate(), ValidationError);
    auto adv = manifest("adv", Setup::ZS_ADV, {"xa"}, "xb");
    adv.adv.reset();
    CHECK_THROWS_AS(adv.validate(), ValidationError);
    auto bad_hp = manifest("hp", Setup::ZS, {"xa"}, "xb");
    bad_hp.hyperparams.batch_size = 0;
    CHECK_THROWS_AS(bad_hp.validate(), ValidationError);

    CHECK(manifest("b", Setup::ZS, {"xa"}, "xa").is_baseline());
    CHECK(manifest("b", Setup::MONO_BASELINE, {"xa"}, "xa").is_baseline());
    CHECK_FALSE(manifest("b", Setup::ZS, {"xa"}, "xb").is_baseline());
  }

  TEST_CASE("manifest JSON roundtrip") {
    auto m = manifest("fs", Setup::FS, {"xa"}, "xb");
    m.compare_with = {"zs"};
    m.variant = "v";
    m.shot_repeats = 2;
    const nlohmann::json j = m;
    CHECK(j.get<ExperimentManifest>() == m);
    auto extra = j;
    extra["unexpected"] = 1;
    CHECK_THROWS_AS(extra.get<ExperimentManifest>(), ValidationError);
    const auto minimal = nlohmann::json{{"id", "x"},
                                        {"setup", "ZS"},
                                        {"source_languages", {"xa"}},
                                        {"target_language", "xb"}}
                             .get<ExperimentManifest>();
    CHECK(minimal.seeds == std::vector<std::uint64_t>(kDefaultSeeds.begin(), kDefaultSeeds.end()));
    CHECK(minimal.few_shot_seed == kDefaultShotSeed);
    CHECK(minimal.backend_name == "reference");
  }

  TEST_CASE("empty study") {
    Fixture f;
    const auto study = run_study({}, f.ctx);
    CHECK(study.results.empty());
    CHECK(study.failures.empty());
  }

  TEST_CASE("failures are recorded and do not stop the study") {
    Fixture f;
    std::vector<ExperimentManifest> ms{manifest("zs", Setup::ZS, {"xa"}, "xb"),
                                       manifest("missing", Setup::ZS, {"xa"}, "zz")};
    const auto study = run_study(ms, f.ctx);
    REQUIRE(study.results.size() == 1);
    REQUIRE(study.failures.size() == 1);
    CHECK(study.failures[0].manifest_id == "missing");
    CHECK(study.failures[0].error.find("zz") != std::string::npos);

    ms.push_back(ms[0]);
    CHECK_THROWS_AS(run_study(ms, f.ctx), ValidationError);
  }

  TEST_CASE("stage-1 checkpoints are shared") {
    Fixture f;
    std::vector<ExperimentManifest> ms{manifest("zs", Setup::ZS, {"xa"}, "xb"),
                                       manifest("trg", Setup::ZS_TR_TRG, {"xa"}, "xb"),
                                       manifest("fs", Setup::FS, {"xa"}, "xb")};
    const auto study = run_study(ms, f.ctx, 2);
    CHECK(study.failures.empty());
    CHECK(f.checkpoints.misses() == 2);
    CHECK(f.checkpoints.hits() == 4);
    CHECK(f.checkpoints.size() == 2);
  }

  TEST_CASE("checkpoint cache trains once per key") {
    CheckpointCache cache;
    int calls = 0;
    const auto a = cache.get_or_train("k", [&] {
      ++calls;
      return Checkpoint{};
    });
    const auto b = cache.get_or_train("k", [&] {
      ++calls;
      return Checkpoint{};
    });
    CHECK(calls == 1);
    CHECK(a.get() == b.get());
    CHECK_THROWS(cache.get_or_train("bad", []() -> Checkpoint { throw std::runtime_error("x"); }));
  }

  TEST_CASE("runs are deterministic regardless of workers and cache") {
    Fixture f1;
    Fixture f2;
    std::vector<ExperimentManifest> ms{manifest("zs", Setup::ZS, {"xa"}, "xb"),
                                       manifest("fs", Setup::FS, {"xa"}, "xb"),
                                       manifest("src", Setup::ZS_TR_SRC, {"xa"}, "xb")};
    const auto serial = run_study(ms, f1.ctx, 1);
    f2.ctx.checkpoints = nullptr;
    const auto parallel = run_study(ms, f2.ctx, 3);
    REQUIRE(serial.results.size() == 3);
    CHECK(serial.results == parallel.results);
  }

  TEST_CASE("mean F1 is the mean of per-seed F1") {
    Fixture f;
    const auto r = run_manifest(manifest("zs", Setup::ZS, {"xb"}, "xb"), f.ctx);
    REQUIRE(r.per_seed.size() == 2);
    CHECK(r.baseline);
    CHECK(r.mean_f1 == doctest::Approx((r.per_seed[0].f1.value + r.per_seed[1].f1.value) / 2));
    for (const auto& s : r.per_seed) {
      std::vector<int> pred, gold;
      for (std::size_t i = 0; i < s.ids.size(); ++i) {
        pred.push_back(s.predictions[i].label);
        gold.push_back(f.data.test_split("xb").examples[i].label);
        CHECK(s.ids[i] == f.data.test_split("xb").examples[i].id);
      }
      CHECK(f1_positive(pred, gold) == s.f1);
    }
  }

  TEST_CASE("same-language translation setups are the identity") {
    Fixture f;
    const auto zs = run_manifest(manifest("zs", Setup::ZS, {"xa"}, "xa"), f.ctx);
    const auto src = run_manifest(manifest("src", Setup::ZS_TR_SRC, {"xa"}, "xa"), f.ctx);
    const auto trg = run_manifest(manifest("trg", Setup::ZS_TR_TRG, {"xa"}, "xa"), f.ctx);
    for (std::size_t i = 0; i < zs.per_seed.size(); ++i) {
      CHECK(src.per_seed[i].predictions == zs.per_seed[i].predictions);
      CHECK(trg.per_seed[i].predictions == zs.per_seed[i].predictions);
    }
    CHECK(f.corpus.dictionary.calls() == 0);
  }

  TEST_CASE("translation setups need a provider") {
    Fixture f;
    f.ctx.provider = nullptr;
    CHECK_THROWS_AS(run_manifest(manifest("src", Setup::ZS_TR_SRC, {"xa"}, "xb"), f.ctx),
                    PreconditionError);
  }

  TEST_CASE("few-shot lineage and shot count") {
    Fixture f;
    auto m = manifest("fs", Setup::FS, {"xa"}, "xb");
    m.few_shot_k = 5;
    const auto r = run_manifest(m, f.ctx);
    for (const auto& s : r.per_seed) {
      REQUIRE(s.lineage.size() == 2);
      CHECK(s.lineage[0].stage == "source");
      CHECK(s.lineage[1] == LineageEntry{"few_shot", "fs", s.seed});
      std::size_t shots = 0;
      for (const auto& a : s.audit) shots += a.stage == "few_shot";
      CHECK(shots == 5);
    }
    m.shot_repeats = 2;
    m.id = "fs2";
    const auto rep = run_manifest(m, f.ctx);
    for (const auto& s : rep.per_seed) {
      REQUIRE(s.repeat_f1.size() == 2);
      CHECK(s.f1.value == doctest::Approx((s.repeat_f1[0] + s.repeat_f1[1]) / 2));
    }
  }

  TEST_CASE("leakage audit on every setup") {
    Fixture f;
    std::vector<ExperimentManifest> ms{manifest("base", Setup::MONO_BASELINE, {"xb"}, "xb"),
                                       manifest("zs", Setup::ZS, {"xa"}, "xb"),
                                       manifest("src", Setup::ZS_TR_SRC, {"xa"}, "xb"),
                                       manifest("trg", Setup::ZS_TR_TRG, {"xa"}, "xb"),
                                       manifest("fs", Setup::FS, {"xa"}, "xb"),
                                       manifest("adv", Setup::ZS_ADV, {"xa"}, "xb")};
    const auto study = run_study(ms, f.ctx);
    REQUIRE(study.failures.empty());
    const auto report = audit_leakage(ms, study.results, f.data);
    CHECK(report.checked_manifests == 5);
    CHECK(report.violations.empty());

    // A tampered audit is caught.
    auto tampered = study.results;
    for (auto& r : tampered) {
      if (r.manifest_id != "zs") continue;
      const auto& t = f.data.test_split("xb").examples[0];
      r.per_seed[0].audit.push_back({"source", t.id, "xb", Origin::original, true});
    }
    const auto bad = audit_leakage(ms, tampered, f.data);
    CHECK(bad.violations.size() == 2);
  }

  TEST_CASE("comparisons pair seeds against baseline and compare_with") {
    Fixture f;
    auto zs = manifest("zs", Setup::ZS, {"xa"}, "xb");
    auto src = manifest("src", Setup::ZS_TR_SRC, {"xa"}, "xb");
    src.compare_with = {"zs"};
    std::vector<ExperimentManifest> ms{manifest("base", Setup::MONO_BASELINE, {"xb"}, "xb"), zs,
                                       src};
    const auto study = run_study(ms, f.ctx);
    REQUIRE(study.results.size() == 3);
    const auto& base = study.results[0];
    CHECK(base.comparisons.empty());
    const auto& s = study.results[2];
    REQUIRE(s.comparisons.size() == 2);
    CHECK(s.comparisons[0].other_manifest_id == "base");
    CHECK(s.comparisons[1].other_manifest_id == "zs");
    std::vector<double> a, b;
    for (std::size_t i = 0; i < 2; ++i) {
      a.push_back(s.per_seed[i].f1.value);
      b.push_back(base.per_seed[i].f1.value);
    }
    CHECK(s.comparisons[0].p_value == paired_t_test(a, b).p_value);
  }

  TEST_CASE("result JSON roundtrip") {
    Fixture f;
    auto r = run_manifest(manifest("fs", Setup::FS, {"xa"}, "xb"), f.ctx);
    r.comparisons.push_back({"other", 0.0, std::numeric_limits<double>::infinity(), true});
    r.warnings.push_back("w");
    const auto back = result_from_json(result_to_json(r, true));
    CHECK(back == r);
    const auto slim = result_from_json(result_to_json(r, false));
    CHECK(slim.per_seed[0].audit.empty());
    CHECK(slim.mean_f1 == r.mean_f1);
  }

  TEST_CASE("adversarial runs use a seeded unlabeled pool") {
    Fixture f;
    auto m = manifest("adv", Setup::ZS_ADV, {"xa"}, "xb");
    m.adv->unlabeled_target_size = 10;
    const auto r = run_manifest(m, f.ctx);
    for (const auto& s : r.per_seed) {
      std::set<std::string> unlabeled;
      for (const auto& a : s.audit) {
        if (!a.labeled) unlabeled.insert(a.id);
      }
      CHECK(unlabeled.size() == 10);
    }
    m.adv->unlabeled_target_size = 1000;
    CHECK_THROWS_AS(run_manifest(m, f.ctx), CapacityError);
  }
}
