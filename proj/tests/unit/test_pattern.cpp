#include <random>
#include <regex>

#include "catch_amalgamated.hpp"
#include "smolsh/pattern.hpp"

using namespace smolsh;

TEST_CASE("basic matches") {
  CHECK(match(compile("ap?"), "app"));
  CHECK_FALSE(match(compile("ap?"), "appall"));
  CHECK(match(compile("*"), ""));
  CHECK(match(compile("*"), "anything"));
  CHECK(match(compile("[!a]b"), "zb"));
  CHECK_FALSE(match(compile("[!a]b"), "ab"));
  CHECK(match(compile("[a-c]x"), "bx"));
  CHECK_FALSE(match(compile("[a-c]x"), "dx"));
  CHECK(match(compile("a[[:digit:]]"), "a7"));
  CHECK_FALSE(match(compile("a[[:digit:]]"), "ax"));
  // C-locale degenerations: [=c=] and [.x.] are the character itself
  CHECK(match(compile("ap[=p=]*a*"), "appall"));
  CHECK(match(compile("[.z.]"), "z"));
}

TEST_CASE("quoted bytes only match themselves") {
  MarkedStr p = mark("a", false);
  for (auto qb : mark("*", true)) p.push_back(qb);
  CompiledPattern cp = compile(p);
  CHECK(match(cp, "a*"));
  CHECK_FALSE(match(cp, "ab"));
}

TEST_CASE("malformed brackets degrade to literals") {
  CHECK(match(compile("a[b"), "a[b"));
  CHECK_FALSE(match(compile("a[b"), "ab"));
  CHECK(match(compile("["), "["));
}

TEST_CASE("filename matching requires an explicit leading dot") {
  CHECK_FALSE(match_filename(compile("*"), ".profile"));
  CHECK(match_filename(compile(".*"), ".profile"));
  CHECK(match_filename(compile("a?"), "ab"));
  CHECK_FALSE(match_filename(compile("[.]profile"), ".profile"));
}

TEST_CASE("remove_affix") {
  Str s = "a b c";
  CHECK(remove_affix(SubSide::Prefix, SubMode::Shortest, compile("*[ab]"), s) == " b c");
  CHECK(remove_affix(SubSide::Prefix, SubMode::Longest, compile("*[ab]"), s) == " c");
  CHECK(remove_affix(SubSide::Suffix, SubMode::Shortest, compile("[bc]*"), s) == "a b ");
  CHECK(remove_affix(SubSide::Suffix, SubMode::Longest, compile("[bc]*"), s) == "a ");
  CHECK(remove_affix(SubSide::Prefix, SubMode::Shortest, compile("z"), s) == s);
}

namespace {

// Independent oracle: translate a shell pattern to an anchored ECMAScript
// regex. Only handles the literal/star/question subset used by the
// exhaustive sweep.
std::optional<std::regex> pattern_to_regex(const Str& pat) {
  Str re;
  for (char c : pat) {
    if (c == '*') re += ".*";
    else if (c == '?') re += ".";
    else if (c == '.') re += "\\.";
    else re += c;
  }
  try {
    return std::regex("^" + re + "$");
  } catch (...) {
    return std::nullopt;
  }
}

}  // namespace

TEST_CASE("exhaustive agreement with a regex oracle") {
  // patterns of length <= 4 over {a,b,.,*,?}; strings of length <= 6 over {a,b,.}
  const Str pat_alpha = "ab.*?";
  const Str str_alpha = "ab.";
  std::vector<Str> strings = {""};
  for (int len = 1; len <= 6; len++) {
    std::vector<Str> next;
    for (auto& s : strings)
      if (s.size() == static_cast<size_t>(len - 1))
        for (char c : str_alpha) next.push_back(s + c);
    strings.insert(strings.end(), next.begin(), next.end());
  }
  std::vector<Str> patterns = {""};
  size_t first_of_prev = 0;
  for (int len = 1; len <= 4; len++) {
    size_t end = patterns.size();
    for (size_t i = first_of_prev; i < end; i++)
      for (char c : pat_alpha) patterns.push_back(patterns[i] + c);
    first_of_prev = end;
  }
  size_t checked = 0;
  for (auto& p : patterns) {
    auto re = pattern_to_regex(p);
    REQUIRE(re);
    CompiledPattern cp = compile(p);
    for (auto& s : strings) {
      bool expected = std::regex_match(s, *re);
      bool got = match(cp, s);
      if (expected != got) {
        CAPTURE(p, s, expected, got);
        REQUIRE(expected == got);
      }
      checked++;
    }
  }
  CHECK(checked > 500000);
}

TEST_CASE("remove_affix shortest never removes more than longest") {
  std::mt19937 rng(12345);
  const Str alpha = "ab*?.";
  for (int i = 0; i < 2000; i++) {
    Str pat, s;
    int plen = rng() % 5, slen = rng() % 7;
    for (int k = 0; k < plen; k++) pat += alpha[rng() % alpha.size()];
    for (int k = 0; k < slen; k++) s += "ab."[rng() % 3];
    CompiledPattern cp = compile(pat);
    for (auto side : {SubSide::Prefix, SubSide::Suffix}) {
      Str shortest = remove_affix(side, SubMode::Shortest, cp, s);
      Str longest = remove_affix(side, SubMode::Longest, cp, s);
      CHECK(shortest.size() >= longest.size());
    }
  }
}
