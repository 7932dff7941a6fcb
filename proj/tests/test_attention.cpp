#include "attention.hpp"
#include "doctest.h"
#include "errors.hpp"

using namespace rest::attention;

TEST_CASE("modality-specific grid, T=2 N=2") {
  auto m = build_mask({2, 2}, Scheme::kModalitySpecific);
  CHECK(render(m) ==
        "1 1 1 0 0\n"
        "1 1 1 0 0\n"
        "1 1 1 0 0\n"
        "1 1 1 1 0\n"
        "1 1 1 1 1\n");
  CHECK_NOTHROW(validate_mask(m, {2, 2}));
}

TEST_CASE("modality-specific grid, T=1 N=1") {
  CHECK(render(build_mask({1, 1}, Scheme::kModalitySpecific)) ==
        "1 1 0\n"
        "1 1 0\n"
        "1 1 1\n");
}

TEST_CASE("full-cross grid, T=2 N=2") {
  auto m = build_mask({2, 2}, Scheme::kFullCross);
  CHECK(render(m) ==
        "1 1 1 1 1\n"
        "1 1 1 1 1\n"
        "1 1 1 1 1\n"
        "1 1 1 1 0\n"
        "1 1 1 1 1\n");
  CHECK_NOTHROW(validate_mask(m, {2, 2}));
}

TEST_CASE("block structure holds for many layouts") {
  for (std::size_t t = 1; t <= 5; ++t) {
    for (std::size_t n = 1; n <= 4; ++n) {
      SequenceLayout layout{t, n};
      auto m = build_mask(layout, Scheme::kModalitySpecific);
      for (std::size_t q = 0; q < layout.total(); ++q) {
        for (std::size_t k = 0; k < layout.total(); ++k) {
          bool expected;
          if (!layout.is_word(q)) expected = !layout.is_word(k);
          else expected = !layout.is_word(k) || k <= q;
          CHECK(m.allow(q, k) == expected);
        }
      }
      CHECK(build_mask(layout, Scheme::kModalitySpecific).allow == m.allow);
    }
  }
}

TEST_CASE("validate_mask names the offending cell") {
  SequenceLayout layout{2, 2};
  auto m = build_mask(layout, Scheme::kModalitySpecific);
  m.allow.set(1, 3, true);
  try {
    validate_mask(m, layout);
    FAIL("expected a validation error");
  } catch (const rest::ValidationError& e) {
    CHECK(std::string(e.what()).find("(q=1, k=3)") != std::string::npos);
  }
  auto d = build_mask(layout, Scheme::kModalitySpecific);
  d.allow.set(4, 4, false);
  CHECK_THROWS_AS(validate_mask(d, layout), rest::ValidationError);
}

TEST_CASE("padding removes padded keys and keeps rows non-empty") {
  SequenceLayout layout{3, 3};
  auto m = build_mask(layout, Scheme::kModalitySpecific);
  apply_padding(m, layout, 2, 1);
  // frame 3 (pos 3) and words 2,3 (pos 5,6) are padding
  for (std::size_t q = 0; q < layout.total(); ++q) {
    bool any = false;
    for (std::size_t k = 0; k < layout.total(); ++k) {
      any = any || m.allow(q, k);
      const bool padded_key = k == 3 || k == 5 || k == 6;
      if (padded_key && q != k) CHECK_FALSE(m.allow(q, k));
    }
    CHECK(any);
  }
  CHECK(m.allow(4, 0));
  CHECK(m.allow(4, 2));
}

TEST_CASE("scheme names") {
  CHECK(parse_scheme("modality") == Scheme::kModalitySpecific);
  CHECK(parse_scheme("full_cross") == Scheme::kFullCross);
  CHECK(to_string(Scheme::kFullCross) == "cross");
  CHECK_THROWS_AS(parse_scheme("diagonal"), rest::ConfigError);
}
