// Acceptance checks. Prints one PASS/FAIL/SKIP line per criterion; exits non-zero on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "gradient_cases.hpp"
#include "table_fixtures.hpp"
#include "test_support.hpp"
#include "xlcw/adversarial.hpp"
#include "xlcw/corpus.hpp"
#include "xlcw/errors.hpp"
#include "xlcw/experiments.hpp"
#include "xlcw/metrics.hpp"
#include "xlcw/reporting.hpp"
#include "xlcw/synthetic.hpp"

using namespace xlcw;
using namespace xlcw::testing;
namespace fs = std::filesystem;

namespace {

// Tolerances.
constexpr double kSamplingSeconds = 10.0;
constexpr double kTTestTolerance = 1e-9;
constexpr double kCriticalPTolerance = 5e-4;
constexpr double kPaddingTolerance = 1e-5;
constexpr double kProbabilitySumTolerance = 1e-6;
constexpr double kGradientTolerance = 1e-4;
constexpr double kBaselineFloor = 0.90;
constexpr double kRandomGuessBand = 0.10;
constexpr double kTranslationFloor = 0.90;
constexpr double kFewShotSlack = 0.05;
constexpr double kStudySeconds = 300.0;
constexpr double kDiagonalBand = 5.0;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  enum class Status { pass, fail, skip } status = Status::pass;
  std::vector<std::string> notes;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      status = Status::fail;
      notes.push_back("failed: " + what);
    }
  }
  void note(const std::string& what) { notes.push_back(what); }
};

int failures = 0;

void report(const std::string& name, const Outcome& o) {
  const char* tag = o.status == Outcome::Status::pass   ? "PASS"
                    : o.status == Outcome::Status::fail ? "FAIL"
                                                        : "SKIP";
  if (o.status == Outcome::Status::fail) ++failures;
  std::cout << tag << ' ' << name;
  if (!o.notes.empty()) std::cout << ": " << fmt::format("{}", fmt::join(o.notes, "; "));
  std::cout << std::endl;
}

void guarded(const std::string& name, const std::function<Outcome()>& check) {
  try {
    report(name, check());
  } catch (const std::exception& e) {
    Outcome o;
    o.require(false, std::string("exception: ") + e.what());
    report(name, o);
  }
}

// --- sampling ------------------------------------------------------------------------------

Outcome sampling_exactness() {
  Outcome o;
  const auto start = Clock::now();
  Rng rng(20210901);
  std::size_t cases = 0;
  for (int i = 0; i < 500; ++i) {
    const std::size_t pos = 1 + rng.below(200);
    const std::size_t neg = 1 + rng.below(800);
    auto split = make_split("xx", pos, neg);
    rng.shuffle(std::span(split.examples));
    const SamplingSpec spec{rng.below(pos + 1), rng.below(neg + 1), rng.next()};
    if (spec.n_positive + spec.n_negative == 0) continue;
    const auto a = stratified_downsample(split, spec);
    const auto b = stratified_downsample(split, spec);
    std::set<std::string> all, seen;
    for (const auto& e : split.examples) all.insert(e.id);
    bool subset = true;
    for (const auto& e : a.examples) {
      subset = subset && all.contains(e.id) && seen.insert(e.id).second;
    }
    const bool ok = a.positives() == spec.n_positive && a.negatives() == spec.n_negative &&
                    a == b && subset;
    if (!ok) {
      o.require(false, fmt::format("case {} (pos {}, neg {}, spec {}/{})", i, pos, neg,
                                   spec.n_positive, spec.n_negative));
      break;
    }
    ++cases;
  }
  const auto k17 = few_shot_counts(17);
  const auto k9 = few_shot_counts(9);
  o.require(k17.positives == 8 && k17.negatives == 9, "k=17 gives 8 positives");
  o.require(k9.positives == 4 && k9.negatives == 5, "k=9 gives 4 positives");
  const double elapsed = seconds_since(start);
  o.require(elapsed < kSamplingSeconds, fmt::format("runtime {:.2f}s", elapsed));
  o.note(fmt::format("{} cases in {:.2f}s", cases, elapsed));
  return o;
}

// --- metrics -------------------------------------------------------------------------------

Outcome metric_oracles() {
  Outcome o;
  Rng rng(99);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 1 + rng.below(60);
    std::vector<int> pred(n), gold(n);
    for (std::size_t j = 0; j < n; ++j) {
      pred[j] = static_cast<int>(rng.below(2));
      gold[j] = static_cast<int>(rng.below(2));
    }
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t j = 0; j < n; ++j) {
      tp += pred[j] == 1 && gold[j] == 1;
      fp += pred[j] == 1 && gold[j] == 0;
      fn += pred[j] == 0 && gold[j] == 1;
    }
    const auto f1 = f1_positive(pred, gold);
    const std::size_t den = 2 * tp + fp + fn;
    // Both sides are the correctly rounded value of the same rational.
    const double expected = den == 0 ? 0.0 : static_cast<double>(2 * tp) / static_cast<double>(den);
    if (f1.true_positives != tp || f1.false_positives != fp || f1.false_negatives != fn ||
        f1.value != expected || f1.degenerate != (den == 0)) {
      o.require(false, fmt::format("F1 case {}", i));
      break;
    }
  }

  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    std::vector<double> a(5), b(5);
    for (int j = 0; j < 5; ++j) {
      a[j] = rng.uniform();
      b[j] = rng.uniform();
    }
    double mean = 0.0;
    for (int j = 0; j < 5; ++j) mean += (a[j] - b[j]) / 5.0;
    double ss = 0.0;
    for (int j = 0; j < 5; ++j) ss += (a[j] - b[j] - mean) * (a[j] - b[j] - mean);
    const double t = mean / std::sqrt(ss / 4.0 / 5.0);
    const boost::math::students_t dist(4.0);
    const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
    const auto got = paired_t_test(a, b);
    worst = std::max({worst, std::fabs(got.p_value - p), std::fabs(got.t_statistic - t) / std::max(1.0, std::fabs(t))});
  }
  o.require(worst <= kTTestTolerance, fmt::format("t-test deviation {:.3g}", worst));
  const double critical = student_t_two_sided_p(2.776, 4.0);
  o.require(std::fabs(critical - 0.05) <= kCriticalPTolerance,
            fmt::format("p(df=4, t=2.776) = {:.6f}", critical));
  o.note(fmt::format("t-test max deviation {:.2g}, p(df=4, t=2.776) = {:.5f}", worst, critical));
  return o;
}

// --- architecture --------------------------------------------------------------------------

Outcome architecture_checks() {
  Outcome o;
  const auto backend = load_backend("reference");
  Rng rng(5);
  double pad_worst = 0.0;
  double prob_worst = 0.0;
  Classifier model(load_backend("reference"), 256, 17);
  for (int i = 0; i < 20; ++i) {
    const auto text = random_sentence(rng, 1 + rng.below(12));
    const auto t = tokenize(text, 32);
    const auto base = mean_pool(backend->forward(t), pooling_mask(t.attention_mask));
    const auto padded = pad_to(t, t.length() + 1 + rng.below(40));
    const auto with_pad = mean_pool(backend->forward(padded), pooling_mask(padded.attention_mask));
    pad_worst = std::max(pad_worst, (base - with_pad).cwiseAbs().maxCoeff());
    const auto [p_neg, p_pos] = model.probabilities(padded);
    prob_worst = std::max(prob_worst, std::fabs(p_neg + p_pos - 1.0));
  }
  o.require(pad_worst <= kPaddingTolerance, fmt::format("padding deviation {:.3g}", pad_worst));
  o.require(prob_worst <= kProbabilitySumTolerance,
            fmt::format("probability sum deviation {:.3g}", prob_worst));

  double task = 0.0, alternating = 0.0, reversal = 0.0;
  for (const std::uint64_t seed : {101u, 202u}) {
    task = std::max(task, task_gradient_error(seed));
    const double gen = generator_gradient_error(seed, 0.5);
    const double disc = discriminator_gradient_error(seed);
    alternating = std::max({alternating, gen < 0 ? 1.0 : gen, disc < 0 ? 1.0 : disc});
    reversal = std::max({reversal, reversal_gradient_error(seed, 0.5),
                         reversal_sign_error(seed, 0.5)});
  }
  o.require(task <= kGradientTolerance, fmt::format("task gradient error {:.3g}", task));
  o.require(alternating <= kGradientTolerance,
            fmt::format("alternating gradient error {:.3g}", alternating));
  o.require(reversal <= kGradientTolerance,
            fmt::format("reversal gradient error {:.3g}", reversal));

  // Zero adversarial weight against plain ZS under shared seeds.
  SyntheticSpec spec;
  spec.train_size = 64;
  spec.test_size = 64;
  const auto corpus = make_synthetic_corpus(spec);
  DataStore data{corpus.train, corpus.test};
  ExperimentContext ctx;
  ctx.data = &data;
  ExperimentManifest zs;
  zs.id = "zs";
  zs.source_languages = {"xa"};
  zs.target_language = "xb";
  zs.hyperparams.learning_rate = 3e-3;
  zs.hyperparams.epochs = 2;
  zs.hyperparams.batch_size = kAdversarialBatchSize;
  zs.hyperparams.max_sequence_length = 32;
  ExperimentManifest adv = zs;
  adv.id = "adv";
  adv.setup = Setup::ZS_ADV;
  adv.adv = AdvConfig{};
  adv.adv->adversarial_weight = 0.0;
  bool identical = true;
  for (const auto schedule : {AdvSchedule::alternating, AdvSchedule::gradient_reversal}) {
    adv.adv->schedule = schedule;
    const auto a = run_manifest(zs, ctx);
    const auto b = run_manifest(adv, ctx);
    for (std::size_t i = 0; i < a.per_seed.size(); ++i) {
      identical = identical && a.per_seed[i].predictions == b.per_seed[i].predictions;
    }
  }
  o.require(identical, "lambda=0 adversarial predictions equal ZS");
  o.note(fmt::format("padding {:.1e}, prob sum {:.1e}, grad task {:.1e} alt {:.1e} rev {:.1e}",
                     pad_worst, prob_worst, task, alternating, reversal));
  return o;
}

// --- synthetic study -----------------------------------------------------------------------

struct Study {
  cli::StudyConfig config;
  DataStore data;
  StudyResult result;
  double seconds = 0.0;
};

Study run_synthetic_study() {
  Study s;
  s.config = cli::load_study_config(fs::path(XLCW_CONFIG_DIR) / "synthetic.json");
  if (!s.config.synthetic) throw PreconditionError("synthetic config has no synthetic section");
  const auto start = Clock::now();
  const auto corpus = make_synthetic_corpus(*s.config.synthetic);
  s.data.train = corpus.train;
  s.data.test = corpus.test;
  auto provider = corpus.dictionary;
  TranslationCache cache;
  CheckpointCache checkpoints;
  ExperimentContext ctx;
  ctx.data = &s.data;
  ctx.provider = &provider;
  ctx.translation_cache = &cache;
  ctx.translate_options.base_backoff = std::chrono::milliseconds(0);
  ctx.checkpoints = &checkpoints;
  s.result = run_study(s.config.manifests, ctx, s.config.workers);
  s.seconds = seconds_since(start);
  return s;
}

const RunResult* find(const Study& s, const std::string& id) {
  for (const auto& r : s.result.results) {
    if (r.manifest_id == id) return &r;
  }
  return nullptr;
}

Outcome leakage_audit(const Study& s) {
  Outcome o;
  o.require(s.result.failures.empty(), fmt::format("{} manifests failed", s.result.failures.size()));
  for (const auto& f : s.result.failures) o.note(f.manifest_id + ": " + f.error);
  const auto audit = audit_leakage(s.config.manifests, s.result.results, s.data);
  o.require(audit.violations.empty(), fmt::format("{} violations", audit.violations.size()));
  for (std::size_t i = 0; i < std::min<std::size_t>(3, audit.violations.size()); ++i) {
    o.note(audit.violations[i]);
  }
  std::size_t fs_checked = 0;
  for (const auto& m : s.config.manifests) fs_checked += m.setup == Setup::FS;
  o.require(audit.checked_manifests > 0, "no manifests audited");
  o.note(fmt::format("{} manifests audited ({} FS), 0 violations required", audit.checked_manifests,
                     fs_checked));
  return o;
}

Outcome synthetic_mechanism(const Study& s) {
  Outcome o;
  const auto& languages = std::vector<std::string>{s.config.synthetic->first_language,
                                                   s.config.synthetic->second_language};
  auto mean_of = [&](const std::string& id) -> std::optional<double> {
    if (const auto* r = find(s, id)) return r->mean_f1;
    o.require(false, "missing result " + id);
    return std::nullopt;
  };
  std::vector<std::string> summary;
  for (const auto& l : languages) {
    if (const auto v = mean_of("MONO_BASELINE/" + l)) {
      o.require(*v >= kBaselineFloor, fmt::format("baseline {} = {:.3f}", l, *v));
      summary.push_back(fmt::format("base {} {:.3f}", l, *v));
    }
  }
  for (const auto& src : languages) {
    for (const auto& trg : languages) {
      if (src == trg) continue;
      const auto pair = src + "->" + trg;
      // Uniform random guessing: precision = prior, recall = 1/2.
      const double prior = static_cast<double>(s.data.test_split(trg).positives()) /
                           static_cast<double>(s.data.test_split(trg).size());
      const double random_f1 = 2.0 * prior * 0.5 / (prior + 0.5);
      if (const auto v = mean_of("ZS/" + pair)) {
        o.require(std::fabs(*v - random_f1) <= kRandomGuessBand,
                  fmt::format("ZS {} = {:.3f} vs random {:.3f}", pair, *v, random_f1));
        summary.push_back(fmt::format("ZS {} {:.3f} (random {:.3f})", pair, *v, random_f1));
      }
      for (const auto* setup : {"ZS_TR_SRC", "ZS_TR_TRG"}) {
        if (const auto v = mean_of(fmt::format("{}/{}", setup, pair))) {
          o.require(*v >= kTranslationFloor, fmt::format("{} {} = {:.3f}", setup, pair, *v));
          summary.push_back(fmt::format("{} {} {:.3f}", setup, pair, *v));
        }
      }
      const auto lo = mean_of("FS-k2/" + pair);
      const auto hi = mean_of("FS-k200/" + pair);
      if (lo && hi) {
        o.require(*hi >= *lo - kFewShotSlack,
                  fmt::format("FS {} k=200 {:.3f} < k=2 {:.3f} - {}", pair, *hi, *lo, kFewShotSlack));
        summary.push_back(fmt::format("FS {} k2 {:.3f} k200 {:.3f}", pair, *lo, *hi));
      }
    }
  }
  o.require(s.seconds < kStudySeconds, fmt::format("study took {:.1f}s", s.seconds));
  summary.push_back(fmt::format("{} manifests in {:.1f}s", s.config.manifests.size(), s.seconds));
  for (auto& line : summary) o.note(line);
  return o;
}

// --- report arithmetic ---------------------------------------------------------------------

Outcome report_arithmetic() {
  Outcome o;
  o.require(percent_diff(31.2, 35.2) == -11, "(31.2, 35.2) -> -11");
  o.require(percent_diff(9.7, 4.6) == 111, "(9.7, 4.6) -> 111");
  o.require(percent_diff(1.5, 0.3) == 400, "(1.5, 0.3) -> 400");
  const auto results = published_zs_results();
  const auto grid = render_grid(results, Setup::ZS, results, published_languages());
  o.require(grid.at("ar", "ar").best && format_f1(*grid.at("ar", "ar").f1_x100) == "49.5",
            "49.5 bold in the ar column");
  o.require(grid.at("en", "ar").second && format_f1(*grid.at("en", "ar").f1_x100) == "47.7",
            "47.7 underlined in the ar column");
  std::size_t bold = 0, underline = 0;
  for (const auto& row : grid.rows) {
    bold += grid.at(row, "ar").best;
    underline += grid.at(row, "ar").second;
  }
  o.require(bold == 1 && underline == 1, "one bold and one underlined cell in the ar column");
  return o;
}

// --- real-data diagonal --------------------------------------------------------------------

// Needs results from a real CT21 study run with a genuine multilingual encoder; point
// XLCW_CT21_RESULTS at its results directory to enable.
Outcome real_data_diagonal() {
  Outcome o;
  const char* dir = std::getenv("XLCW_CT21_RESULTS");
  if (!dir || !*dir) {
    o.status = Outcome::Status::skip;
    o.note("data-gated: set XLCW_CT21_RESULTS to a results directory from a real-data run");
    return o;
  }
  const std::map<std::string, double> published{
      {"ar", 49.5}, {"bg", 58.2}, {"en", 13.3}, {"es", 54.0}, {"tr", 28.4}};
  std::map<std::string, double> found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".json") continue;
    std::ifstream in(entry.path());
    const auto r = result_from_json(nlohmann::json::parse(in));
    if (r.baseline && r.source == r.target_language) found[r.target_language] = 100.0 * r.mean_f1;
  }
  for (const auto& [language, expected] : published) {
    const auto it = found.find(language);
    if (it == found.end()) {
      o.require(false, "no baseline for " + language);
      continue;
    }
    o.require(std::fabs(it->second - expected) <= kDiagonalBand,
              fmt::format("{} baseline {:.1f} vs {:.1f}", language, it->second, expected));
    o.note(fmt::format("{} {:.1f} (published {:.1f})", language, it->second, expected));
  }
  return o;
}

}  // namespace

int main() {
  guarded("sampling-exactness", sampling_exactness);
  guarded("metric-oracles", metric_oracles);
  guarded("architecture-checks", architecture_checks);

  std::optional<Study> study;
  std::string study_error;
  try {
    study = run_synthetic_study();
  } catch (const std::exception& e) {
    study_error = e.what();
  }
  auto with_study = [&](const std::string& name, Outcome (*check)(const Study&)) {
    if (!study) {
      Outcome o;
      o.require(false, "synthetic study did not run: " + study_error);
      report(name, o);
      return;
    }
    guarded(name, [&] { return check(*study); });
  };
  with_study("leakage-audit", leakage_audit);
  with_study("synthetic-mechanism", synthetic_mechanism);

  guarded("report-arithmetic", report_arithmetic);
  guarded("real-data-diagonal", real_data_diagonal);
  return failures == 0 ? 0 : 1;
}
