#include <gtest/gtest.h>

#include <random>
#include <regex>
#include <string>
#include <vector>

#include "affinity/error.hpp"
#include "affinity/regex.hpp"

using affinity::Error;
using affinity::ErrorCode;
using affinity::MatchSpan;
using affinity::Pattern;

namespace {

std::optional<std::string> match_text(std::string_view pattern, std::string_view text) {
  auto m = Pattern(pattern).search(text);
  if (!m) return std::nullopt;
  return std::string(text.substr(m->offset, m->length));
}

ErrorCode compile_error(std::string_view pattern) {
  try {
    Pattern p(pattern);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "pattern compiled: " << pattern;
  return ErrorCode::Io;
}

// std::regex with ECMAScript grammar is a backtracking, leftmost-first engine
// with greedy quantifiers: the semantics the matcher promises.
std::optional<MatchSpan> oracle(const std::string& pattern, const std::string& text) {
  std::regex re(pattern, std::regex::ECMAScript);
  std::smatch m;
  if (!std::regex_search(text, m, re)) return std::nullopt;
  return MatchSpan{static_cast<std::size_t>(m.position(0)), static_cast<std::size_t>(m.length(0))};
}

}  // namespace

TEST(Regex, PoolTablePatterns) {
  EXPECT_EQ(match_text("/[a-zA-Z0-9]+_", "/frames/little3_42"), "/little3_");
  EXPECT_EQ(match_text("/[a-zA-Z0-9]+_", "/states/little3_42"), "/little3_");
  EXPECT_EQ(match_text("/[a-zA-Z0-9]+_[0-9]+_", "/positions/little3_7_42"), "/little3_7_");
  EXPECT_EQ(match_text("/[a-zA-Z0-9]+_[0-9]+_", "/predictions/little3_42_7"), "/little3_42_");
}

TEST(Regex, ListingExample) { EXPECT_EQ(match_text("_[0-9]+", "/grouping/example_1"), "_1"); }

TEST(Regex, NoMatch) {
  EXPECT_EQ(match_text("/[0-9]+_", "/frames/little3"), std::nullopt);
  EXPECT_EQ(match_text("/[0-9]+_", "/frames/little3_42"), std::nullopt);
}

TEST(Regex, LeftmostThenGreedy) {
  EXPECT_EQ(match_text("a+", "baaab"), "aaa");
  EXPECT_EQ(match_text("a|ab", "ab"), "a");
  EXPECT_EQ(match_text("ab|a", "ab"), "ab");
}

TEST(Regex, Anchors) {
  EXPECT_EQ(match_text("^/f", "/frames"), "/f");
  EXPECT_EQ(match_text("^f", "/frames"), std::nullopt);
  EXPECT_EQ(match_text("s$", "/frames"), "s");
  auto end = Pattern("$").search("abc");
  ASSERT_TRUE(end);
  EXPECT_EQ(end->offset, 3u);
  EXPECT_EQ(end->length, 0u);
}

TEST(Regex, EmptyTextAndEmptyMatch) {
  auto m = Pattern("x*").search("");
  ASSERT_TRUE(m);
  EXPECT_EQ(m->length, 0u);
  EXPECT_FALSE(Pattern("x").search(""));
}

TEST(Regex, CountedRepetition) {
  EXPECT_EQ(match_text("a{2}", "aaaa"), "aa");
  EXPECT_EQ(match_text("a{2,}", "aaaa"), "aaaa");
  EXPECT_EQ(match_text("a{1,3}", "aaaa"), "aaa");
  EXPECT_EQ(match_text("_[0-9]{3}_", "/x_12_345_"), "_345_");
}

TEST(Regex, ClassesAndEscapes) {
  EXPECT_EQ(match_text("[^/]+", "/abc/def"), "abc");
  EXPECT_EQ(match_text("\\d+", "ab12c"), "12");
  EXPECT_EQ(match_text("\\w+", "--a_b9--"), "a_b9");
  EXPECT_EQ(match_text("\\.", "a.b"), ".");
  EXPECT_EQ(match_text("[a\\-z]+", "x-az"), "-az");
  EXPECT_EQ(match_text("(?:ab)+", "xababx"), "abab");
}

TEST(Regex, RejectsUnsupportedSyntax) {
  EXPECT_EQ(compile_error("(a)\\1"), ErrorCode::BadRegex);
  EXPECT_EQ(compile_error("(?=a)"), ErrorCode::BadRegex);
  EXPECT_EQ(compile_error("(?!a)"), ErrorCode::BadRegex);
  EXPECT_EQ(compile_error("a**"), ErrorCode::BadRegex);
  EXPECT_EQ(compile_error("[a-"), ErrorCode::BadRegex);
  EXPECT_EQ(compile_error("(ab"), ErrorCode::BadRegex);
  EXPECT_EQ(compile_error("ab)"), ErrorCode::BadRegex);
  EXPECT_EQ(compile_error("*a"), ErrorCode::BadRegex);
  EXPECT_EQ(compile_error("a{3,1}"), ErrorCode::BadRegex);
  EXPECT_EQ(compile_error("[z-a]"), ErrorCode::BadRegex);
  EXPECT_EQ(compile_error("\\"), ErrorCode::BadRegex);
}

TEST(Regex, LinearOnPathologicalInput) {
  // Exponential for naive backtracking.
  std::string text(5000, 'a');
  auto m = Pattern("(a|aa)*b").search(text);
  EXPECT_FALSE(m);
  auto m2 = Pattern("(a*)*c").search(text + "c");
  ASSERT_TRUE(m2);
  EXPECT_EQ(m2->length, 5001u);
}

// Matches V8. libstdc++ and Python stop at 5 because they treat the empty
// [^a]* iteration differently.
TEST(Regex, NullableLoopBodyFollowsEcmaScript) {
  auto m = Pattern("([^a]*|.*[^a].)+(\\d?){1,2}[^a]").search("/11cbab");
  ASSERT_TRUE(m);
  EXPECT_EQ(m->offset, 0u);
  EXPECT_EQ(m->length, 7u);
}

// Random patterns from a small grammar, compared with std::regex.
namespace {

struct Gen {
  std::mt19937_64 rng;
  explicit Gen(std::uint64_t seed) : rng(seed) {}

  int pick(int n) { return static_cast<int>(rng() % static_cast<std::uint64_t>(n)); }

  std::string atom(int depth) {
    switch (pick(depth > 0 ? 7 : 5)) {
      case 0: return std::string(1, "ab_/1"[pick(5)]);
      case 1: return "[a-b]";
      case 2: return "[^a]";
      case 3: return ".";
      case 4: return "\\d";
      case 5: return "(" + alt(depth - 1) + ")";
      default: return "(?:" + concat(depth - 1) + ")";
    }
  }

  // Engines disagree on empty iterations of a nullable loop body, so only
  // non-nullable atoms get a repeating quantifier here.
  std::string piece(int depth) {
    std::string a = atom(depth);
    const bool nullable = Pattern(a).search("").has_value();
    switch (pick(7)) {
      case 0: return nullable ? a : a + "*";
      case 1: return nullable ? a : a + "+";
      case 2: return a + "?";
      case 3: return nullable ? a : a + "{1,2}";
      default: return a;
    }
  }

  std::string concat(int depth) {
    std::string s;
    int n = 1 + pick(3);
    for (int i = 0; i < n; ++i) s += piece(depth);
    return s;
  }

  std::string alt(int depth) {
    std::string s = concat(depth);
    if (pick(3) == 0) s += "|" + concat(depth);
    return s;
  }

  std::string text() {
    std::string s;
    int n = pick(12);
    for (int i = 0; i < n; ++i) s += "ab_/1c"[pick(6)];
    return s;
  }
};

}  // namespace

TEST(Regex, AgreesWithBacktrackingOracle) {
  Gen g(20241019);
  int compared = 0;
  for (int i = 0; i < 3000; ++i) {
    std::string pat = g.alt(2);
    if (i % 5 == 0) pat = "^" + pat;
    Pattern p(pat);
    for (int j = 0; j < 8; ++j) {
      std::string text = g.text();
      auto want = oracle(pat, text);
      auto got = p.search(text);
      ASSERT_EQ(got.has_value(), want.has_value()) << "pattern " << pat << " text '" << text << "'";
      if (got) {
        ASSERT_EQ(got->offset, want->offset) << "pattern " << pat << " text '" << text << "'";
        ASSERT_EQ(got->length, want->length) << "pattern " << pat << " text '" << text << "'";
      }
      ++compared;
    }
  }
  EXPECT_EQ(compared, 24000);
}
