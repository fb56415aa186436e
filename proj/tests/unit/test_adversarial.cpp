#include <doctest.h>

#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "gradient_cases.hpp"
#include "test_support.hpp"
#include "xlcw/adversarial.hpp"
#include "xlcw/errors.hpp"
#include "xlcw/synthetic.hpp"

using namespace xlcw;
using namespace xlcw::testing;

namespace {

void zero_mlp(Mlp& mlp) {
  for (auto* p : mlp.parameters()) p->value.setZero();
}

SyntheticSpec tiny_synthetic() {
  SyntheticSpec spec;
  spec.train_size = 40;
  spec.test_size = 20;
  return spec;
}

}  // namespace

TEST_SUITE("adversarial") {
  TEST_CASE("discriminator output") {
    Discriminator d(4, 3, 1);
    zero_mlp(d.mlp());
    CHECK(d.forward(Vector::Random(4)) == 0.5);

    // Output bias alone sets the logit.
    auto params = d.parameters();
    params[3]->value(0, 0) = std::log(3.0);
    CHECK(d.forward(Vector::Zero(4)) == doctest::Approx(0.75).epsilon(1e-12));

    Discriminator r(8, 5, 2);
    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
      Vector v(8);
      for (int k = 0; k < 8; ++k) v(k) = 20.0 * (rng.uniform() - 0.5);
      const double p = r.forward(v);
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
    }
    CHECK(sigmoid(-800.0) >= 0.0);
    CHECK(sigmoid(800.0) == 1.0);
    CHECK(sigmoid(0.0) == 0.5);
  }

  TEST_CASE("unlabeled target sampling") {
    const auto split = make_split("xb", 5, 5);
    const auto a = sample_unlabeled_target(split, 4, 9);
    REQUIRE(a.size() == 4);
    std::set<std::string> ids;
    for (const auto& e : a) {
      CHECK(e.label == kUnlabeled);
      CHECK(e.language == "xb");
      ids.insert(e.id);
    }
    CHECK(ids.size() == 4);
    CHECK(sample_unlabeled_target(split, 4, 9) == a);
    CHECK(sample_unlabeled_target(split, 10, 1).size() == 10);
    CHECK_THROWS_AS(sample_unlabeled_target(split, 11, 1), CapacityError);
    CHECK_THROWS_AS(sample_unlabeled_target(split, 0, 1), PreconditionError);
  }

  TEST_CASE("config validation and JSON") {
    AdvConfig adv;
    adv.unlabeled_target_size = 12;
    adv.adversarial_weight = 0.3;
    adv.schedule = AdvSchedule::gradient_reversal;
    const nlohmann::json j = adv;
    CHECK(j.get<AdvConfig>() == adv);
    CHECK(nlohmann::json{{"lambda", 0.7}}.get<AdvConfig>().adversarial_weight == 0.7);
    CHECK_THROWS_AS(nlohmann::json({{"schedule", "sometimes"}}).get<AdvConfig>(),
                    ValidationError);
    CHECK_THROWS_AS(nlohmann::json({{"weight", 1}}).get<AdvConfig>(), ValidationError);
    AdvConfig bad;
    bad.adversarial_weight = -1;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = {};
    bad.unlabeled_target_size = 0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
  }

  TEST_CASE("zero adversarial weight reproduces plain training") {
    const auto train = make_split("xa", 6, 6);
    const auto test = make_split("xb", 4, 4, Role::test);
    const auto pool = sample_unlabeled_target(make_split("xb", 6, 6), 8, 3);
    const auto backend = load_backend("reference");
    for (const auto schedule : {AdvSchedule::alternating, AdvSchedule::gradient_reversal}) {
      AdvConfig adv;
      adv.adversarial_weight = 0.0;
      adv.schedule = schedule;
      const auto hp = small_hyperparams(11);
      const auto plain = train_supervised(train, *backend, hp);
      const auto adversarial = train_adversarial(train, pool, *backend, hp, adv);
      CHECK(predict(adversarial, test.examples) == predict(plain, test.examples));
      CHECK(adversarial.head_weights == plain.head_weights);
    }
  }

  TEST_CASE("nonzero weight changes the model") {
    const auto train = make_split("xa", 6, 6);
    const auto pool = sample_unlabeled_target(make_split("xb", 6, 6), 8, 3);
    const auto backend = load_backend("reference");
    AdvConfig adv;
    adv.adversarial_weight = 1.0;
    const auto hp = small_hyperparams(11);
    CHECK(train_adversarial(train, pool, *backend, hp, adv).encoder_weights !=
          train_supervised(train, *backend, hp).encoder_weights);
  }

  TEST_CASE("generator and discriminator phases stay isolated") {
    auto f = make_gradient_fixture(21);
    const auto src = f.source();
    const auto trg = f.target();
    f.zero_grad();
    adversarial_objective(f.model, f.discriminator, src, f.labels, trg, 1.0, AdvPhase::generator);
    CHECK(all_zero(f.discriminator.parameters()));
    CHECK_FALSE(all_zero(f.model.encoder_parameters()));

    // Weights are never mutated by the objective itself.
    std::vector<Matrix> before;
    for (auto* p : concat(f.model.parameters(), f.discriminator.parameters())) {
      before.push_back(p->value);
    }
    adversarial_objective(f.model, f.discriminator, src, f.labels, trg, 1.0, AdvPhase::reversal);
    std::size_t i = 0;
    for (auto* p : concat(f.model.parameters(), f.discriminator.parameters())) {
      CHECK(p->value == before[i++]);
    }
  }

  TEST_CASE("audit marks target examples unlabeled") {
    const auto train = make_split("xa", 4, 4);
    const auto pool = sample_unlabeled_target(make_split("xb", 4, 4), 5, 3);
    AdvConfig adv;
    const auto ckpt = train_adversarial(train, pool, *load_backend("reference"),
                                        small_hyperparams(), adv, {"adversarial", "adv", ""});
    REQUIRE(ckpt.audit.size() == 13);
    std::size_t unlabeled = 0;
    for (const auto& a : ckpt.audit) {
      if (!a.labeled) {
        ++unlabeled;
        CHECK(a.language == "xb");
      }
    }
    CHECK(unlabeled == 5);
    CHECK(ckpt.lineage.back().stage == "adversarial");
  }

  TEST_CASE("input errors") {
    const auto train = make_split("xa", 4, 4);
    const auto backend = load_backend("reference");
    AdvConfig adv;
    CHECK_THROWS_AS(train_adversarial(train, {}, *backend, small_hyperparams(), adv),
                    PreconditionError);
    const auto same_language = sample_unlabeled_target(make_split("xa", 2, 2), 2, 1);
    CHECK_THROWS_AS(train_adversarial(train, same_language, *backend, small_hyperparams(), adv),
                    PreconditionError);
  }

  TEST_CASE("discriminator learns to separate disjoint vocabularies on a frozen encoder") {
    const auto corpus = make_synthetic_corpus(tiny_synthetic());
    Classifier model(load_backend("reference"), 16, 1);
    Discriminator disc(32, 32, 2);
    const auto& a = corpus.train.at("xa");
    const auto& b = corpus.train.at("xb");
    std::vector<TokenizedInput> a_in, b_in;
    for (const auto& e : a.examples) a_in.push_back(tokenize(e.text, 32));
    for (const auto& e : b.examples) b_in.push_back(tokenize(e.text, 32));
    std::vector<const TokenizedInput*> src, trg;
    std::vector<int> labels;
    for (std::size_t i = 0; i < a_in.size(); ++i) {
      src.push_back(&a_in[i]);
      labels.push_back(a.examples[i].label);
    }
    for (auto& t : b_in) trg.push_back(&t);

    const auto encoder_params = model.encoder_parameters();
    const std::vector<const Param*> frozen(encoder_params.begin(), encoder_params.end());
    const auto encoder_before = snapshot(frozen);
    AdamW opt(disc.parameters());
    std::vector<double> losses;
    for (int step = 0; step < 60; ++step) {
      opt.zero_grad();
      losses.push_back(adversarial_objective(model, disc, src, labels, trg, 1.0,
                                             AdvPhase::discriminator)
                           .discriminator);
      opt.step(1e-2);
    }
    CHECK(losses.front() > 0.5);
    CHECK(losses.back() < 0.5 * losses.front());
    CHECK(snapshot(frozen) == encoder_before);
  }

  TEST_CASE("alternating training records discriminator losses") {
    const auto corpus = make_synthetic_corpus(tiny_synthetic());
    const auto pool = sample_unlabeled_target(corpus.train.at("xb"), 20, 5);
    AdvConfig adv;
    auto hp = small_hyperparams(3);
    hp.batch_size = 8;
    TrainingLog log;
    const auto run = train_adversarial_run(corpus.train.at("xa"), pool, *load_backend("reference"),
                                           hp, adv, {"adversarial", "adv", ""}, &log);
    CHECK(run.discriminator_losses.size() == 2 * 5);
    std::size_t disc_entries = 0;
    for (const auto& e : log.entries()) disc_entries += e.kind == "discriminator";
    CHECK(disc_entries == 10);
    for (const double l : run.discriminator_losses) CHECK(std::isfinite(l));
  }
}
