#include <doctest.h>

#include "gradient_cases.hpp"

using namespace xlcw;
using namespace xlcw::testing;

namespace {
constexpr double kTolerance = 1e-4;
}

TEST_SUITE("gradients") {
  TEST_CASE("task loss matches finite differences") {
    for (const std::uint64_t seed : {1u, 2u, 3u}) {
      CAPTURE(seed);
      CHECK(task_gradient_error(seed) < kTolerance);
    }
  }

  TEST_CASE("alternating generator step matches finite differences") {
    for (const double lambda : {0.0, 0.3, 1.0}) {
      CAPTURE(lambda);
      const double err = generator_gradient_error(4, lambda);
      CHECK(err >= 0.0);
      CHECK(err < kTolerance);
    }
  }

  TEST_CASE("alternating discriminator step matches finite differences") {
    for (const std::uint64_t seed : {5u, 6u}) {
      CAPTURE(seed);
      const double err = discriminator_gradient_error(seed);
      CHECK(err >= 0.0);
      CHECK(err < kTolerance);
    }
  }

  TEST_CASE("gradient reversal matches finite differences") {
    for (const double lambda : {0.5, 1.0}) {
      CAPTURE(lambda);
      CHECK(reversal_gradient_error(7, lambda) < kTolerance);
    }
  }

  TEST_CASE("reversal flips and scales the discriminator gradient") {
    for (const double lambda : {0.25, 1.0, 2.0}) {
      CAPTURE(lambda);
      CHECK(reversal_sign_error(8, lambda) < kTolerance);
    }
  }

  TEST_CASE("discriminator step leaves the classifier untouched") {
    auto f = make_gradient_fixture(9);
    const auto src = f.source();
    const auto trg = f.target();
    f.zero_grad();
    adversarial_objective(f.model, f.discriminator, src, f.labels, trg, 1.0,
                          AdvPhase::discriminator);
    CHECK(all_zero(f.model.parameters()));
    CHECK_FALSE(all_zero(f.discriminator.parameters()));
  }
}
