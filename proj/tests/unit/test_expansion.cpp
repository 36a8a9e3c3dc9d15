#include <random>

#include "catch_amalgamated.hpp"
#include "helpers.hpp"

using namespace smolsh;
using namespace smolsh_test;

namespace {

struct ExpandEnv {
  SymbolicSystem sys;
  ShellState st;
  std::unique_ptr<SymbolicOs> os;

  explicit ExpandEnv(SymbolicSpec spec = {}) {
    sys.fs_root = spec.fs_root;
    sys.passwd = spec.passwd;
    sys.fuel = 100000;
    SymbolicSystem::Process root;
    root.pid = sys.next_pid++;
    root.state = initial_symbolic_state(spec);
    root.cmd = mk(DoneCmd{});
    sys.processes[1] = std::move(root);
    os = std::make_unique<SymbolicOs>(sys, 1);
    st = sys.processes[1].state;
  }
};

Word parse_word(const Str& text) {
  auto s = ParseSession::from_string("echo " + text + "\n");
  auto r = parse_next(*s, {}, "", "");
  REQUIRE(r.kind == ParseResult::Kind::Complete);
  auto* simple = as<Simple>(r.cmd);
  REQUIRE(simple);
  Word w(simple->words.begin() + 2, simple->words.end());
  return w;
}

Fields expand_in(ExpandEnv& env, const Str& text, bool split = true, bool glob = true) {
  auto r = expand_full(env.st, *env.os, ExpansionOptions{split, glob}, parse_word(text));
  REQUIRE(r.ok);
  return r.fields;
}

Fields expand_err(ExpandEnv& env, const Str& text) {
  auto r = expand_full(env.st, *env.os, ExpansionOptions{true, true}, parse_word(text));
  REQUIRE_FALSE(r.ok);
  return r.error;
}

}  // namespace

TEST_CASE("start over a word in the six-file directory") {
  ExpandEnv env(glob_fixture());
  env.st.cwd = "/";
  CHECK(expand_in(env, "ap?") == Fields{"app"});
  CHECK(expand_in(env, "a*") ==
        Fields{"ap", "app", "appall", "apparition", "appendix", "applejack"});
  CHECK(expand_in(env, "appa*") == Fields{"appall", "apparition"});
  CHECK(expand_in(env, "ap[=p=]*a*") == Fields{"appall", "apparition", "applejack"});
  CHECK(expand_in(env, "\"a*\"") == Fields{"a*"});
  CHECK(expand_in(env, "z*") == Fields{"z*"});  // no match stays literal
}

TEST_CASE("empty word expands to zero fields") {
  ExpandEnv env;
  auto r = expand_full(env.st, *env.os, ExpansionOptions{true, true}, Word{});
  REQUIRE(r.ok);
  CHECK(r.fields.empty());
}

TEST_CASE("quoted empty makes one empty field") {
  ExpandEnv env;
  CHECK(expand_in(env, "\"\"") == Fields{""});
  CHECK(expand_in(env, "''") == Fields{""});
  env.st.global_env["e"] = "";
  CHECK(expand_in(env, "\"$e\"") == Fields{""});
  CHECK(expand_in(env, "$e") == Fields{});
}

TEST_CASE("field splitting of parameter values") {
  ExpandEnv env;
  env.st.global_env["x"] = "a b";
  CHECK(expand_in(env, "$x") == Fields{"a", "b"});
  CHECK(expand_in(env, "\"$x\"") == Fields{"a b"});
  env.st.global_env["IFS"] = ",";
  env.st.global_env["y"] = "a,,b";
  CHECK(expand_in(env, "$y") == Fields{"a", "", "b"});
}

TEST_CASE("paper transcript: substitution and parameter formats") {
  ExpandEnv env(abc_fixture());
  env.st.cwd = "/";
  // x=$(ls) gives "a\nb\nc"; the transcript line is
  //   echo $x,${#x},${x#*[ab]},${x##*[ab]}.  ->  a b c,5, b c, c.
  env.st.global_env["x"] = "a b c";
  auto fields = expand_in(env, "$x,${#x},${x#*[ab]},${x##*[ab]}.");
  CHECK(to_string_fields(fields) == "a b c,5, b c, c.");
}

TEST_CASE("tilde expansion") {
  SymbolicSpec spec;
  spec.passwd["root"] = "/var/root";
  ExpandEnv env(spec);
  env.st.global_env["HOME"] = "/home/me";
  CHECK(expand_in(env, "~") == Fields{"/home/me"});
  CHECK(expand_in(env, "~root") == Fields{"/var/root"});
  CHECK(expand_in(env, "~nosuch") == Fields{"~nosuch"});
  env.st.global_env["usr"] = "root";
  CHECK(expand_in(env, "~$usr") == Fields{"~root"});  // indirection is not expanded
  env.st.global_env.erase("HOME");
  CHECK(expand_in(env, "~") == Fields{"~"});
  // the tilde result is quoted: no field splitting of homes with spaces
  env.st.global_env["HOME"] = "/spacey home";
  CHECK(expand_in(env, "~") == Fields{"/spacey home"});
}

TEST_CASE("parameter formats") {
  ExpandEnv env;
  CHECK(expand_in(env, "${y-w}") == Fields{"w"});
  CHECK(expand_in(env, "${y-a b}") == Fields{"a", "b"});
  CHECK(expand_in(env, "\"${y-a b}\"") == Fields{"a b"});
  env.st.global_env["y"] = "set";
  CHECK(expand_in(env, "${y-w}") == Fields{"set"});
  CHECK(expand_in(env, "${y+alt}") == Fields{"alt"});
  env.st.global_env["n"] = "";
  CHECK(expand_in(env, "${n-dflt}") == Fields{});          // set (null) -> value
  CHECK(expand_in(env, "${n:-dflt}") == Fields{"dflt"});   // null counts as unset
  CHECK(expand_in(env, "${n:+alt}") == Fields{});
  CHECK(expand_in(env, "${n+alt}") == Fields{"alt"});
  // assignment format writes through
  CHECK(expand_in(env, "${unset_v=a b}") == Fields{"a", "b"});
  CHECK(lookup(env.st, "unset_v") == Str("a b"));
  // length of unset is 0
  CHECK(expand_in(env, "${#nope}") == Fields{"0"});
  env.st.global_env["x"] = "a b c";
  CHECK(expand_in(env, "${#x}") == Fields{"5"});
}

TEST_CASE("error format carries the expanded message") {
  ExpandEnv env;
  auto err = expand_err(env, "${nope?custom msg}");
  REQUIRE(err.size() == 1);
  CHECK(err[0] == "nope: custom msg");
  auto err2 = expand_err(env, "${nope?}");
  CHECK(err2[0] == "nope: parameter not set");
  env.st.global_env["null_v"] = "";
  auto err3 = expand_err(env, "${null_v:?}");
  CHECK(err3[0] == "null_v: parameter not set or null");
}

TEST_CASE("nounset makes unset lookups error") {
  ExpandEnv env;
  env.st.options.insert("nounset");
  auto err = expand_err(env, "$missing");
  CHECK(err[0] == "missing: parameter not set");
  CHECK(expand_in(env, "$@") == Fields{});  // @ and * are exempt
  CHECK(expand_in(env, "${missing-d}") == Fields{"d"});
}

TEST_CASE("command substitution captures and trims") {
  ExpandEnv env;
  CHECK(expand_in(env, "$(echo hi)") == Fields{"hi"});
  CHECK(expand_in(env, "\"$(echo 'a  b')\"") == Fields{"a  b"});
  CHECK(expand_in(env, "$(echo a; echo b)") == Fields{"a", "b"});
  // exit status of the substitution lands in $?
  expand_in(env, "$(exit 5)x");
  CHECK(env.st.last_status == 5);
}

TEST_CASE("arithmetic expansion assigns through the state") {
  ExpandEnv env;
  env.st.global_env["y"] = "42";
  env.st.global_env["x"] = "5";
  CHECK(expand_in(env, "$((y += $x))") == Fields{"47"});
  CHECK(env.st.global_env["y"] == "47");
  CHECK(expand_in(env, "$((y)) $y") == Fields{"47", "47"});
  auto err = expand_err(env, "$((1/0))");
  CHECK(err[0].find("division by zero") != Str::npos);
}

TEST_CASE("positional parameter expansions") {
  ExpandEnv env;
  env.st.positional = {"p one", "two"};
  CHECK(expand_in(env, "\"$@\"") == Fields{"p one", "two"});
  CHECK(expand_in(env, "$@") == Fields{"p", "one", "two"});
  CHECK(expand_in(env, "\"$*\"") == Fields{"p one two"});
  CHECK(expand_in(env, "\"x$@y\"") == Fields{"xp one", "twoy"});
  env.st.global_env["IFS"] = ",";
  CHECK(expand_in(env, "\"$*\"") == Fields{"p one,two"});
  CHECK(expand_in(env, "$*") == Fields{"p one", "two"});
  env.st.positional = {};
  CHECK(expand_in(env, "\"$@\"") == Fields{});
  CHECK(expand_in(env, "\"$*\"") == Fields{""});
  env.st.positional = {"", "x"};
  CHECK(expand_in(env, "\"$@\"") == Fields{"", "x"});
}

TEST_CASE("trim_rnl") {
  CHECK(trim_rnl("abc\n\n") == "abc");
  CHECK(trim_rnl("\n") == "");
  CHECK(trim_rnl("a\nb") == "a\nb");
}

TEST_CASE("skip_splitting and to_fields") {
  ExpandedWords e;
  e.push_back({ExpExpTxt{"a b"}});
  IntermediateFields i = skip_splitting(e);
  REQUIRE(i.size() == 1);
  CHECK(std::get<IStr>(i[0].v).text == "a b");
  CHECK(to_fields({}) == Fields{});
  ExpandedWords e2;
  e2.push_back({ExpSrc{"x"}});
  e2.push_back({ExpQuotedStr{"y"}});
  CHECK(to_fields(e2) == Fields{"xy"});
}

TEST_CASE("state machine shape") {
  // Split is skipped when do_split is false; Path always runs
  ExpandEnv env;
  ExpansionState es = es_start(ExpansionOptions{false, true}, parse_word("a"));
  std::vector<Str> rules;
  while (!es_terminal(es)) rules.push_back(step_expansion(env.st, *env.os, es).rule);
  CHECK(rules == std::vector<Str>{"ExpStart", "EWLit", "ExpExpandNoSplit", "ExpPath",
                                  "ExpQuote"});
  ExpansionState es2 = es_start(ExpansionOptions{true, true}, parse_word("a"));
  rules.clear();
  while (!es_terminal(es2)) rules.push_back(step_expansion(env.st, *env.os, es2).rule);
  CHECK(rules == std::vector<Str>{"ExpStart", "EWLit", "ExpExpandSplit", "ExpSplit",
                                  "ExpPath", "ExpQuote"});
  // noglob routes through ExpPathNoGlob
  env.st.options.insert("noglob");
  ExpansionState es3 = es_start(ExpansionOptions{true, true}, parse_word("a*"));
  rules.clear();
  while (!es_terminal(es3)) rules.push_back(step_expansion(env.st, *env.os, es3).rule);
  CHECK(rules.at(4) == Str("ExpPathNoGlob"));
}

TEST_CASE("did_cmd_subst reported exactly on substitution steps") {
  ExpandEnv env;
  ExpansionState es = es_start(ExpansionOptions{true, true}, parse_word("$(echo q)"));
  int subst_steps = 0;
  std::vector<Str> rules;
  while (!es_terminal(es)) {
    auto r = step_expansion(env.st, *env.os, es);
    rules.push_back(r.rule);
    if (r.did_cmd_subst) subst_steps++;
  }
  CHECK(subst_steps == 3);  // CmdSubst, CmdSubstRead, CmdSubstWait
  CHECK(std::count(rules.begin(), rules.end(), Str("CmdSubst")) == 1);
  CHECK(std::count(rules.begin(), rules.end(), Str("CmdSubstRead")) == 1);
  CHECK(std::count(rules.begin(), rules.end(), Str("CmdSubstWait")) == 1);
}

TEST_CASE("quoted content is bit-identical through expansion") {
  ExpandEnv env;
  env.st.global_env["IFS"] = "ab ";
  CHECK(expand_in(env, "\"a  b*?[x]\"") == Fields{"a  b*?[x]"});
}

// ---------------------------------------------------------------------------
// Brute-force field splitting oracle (POSIX 2.6.5, written independently).

namespace {

std::vector<Str> oracle_split(const Str& s, const Str& ifs) {
  auto is_ifs = [&](char c) { return ifs.find(c) != Str::npos; };
  auto is_ws = [&](char c) {
    return is_ifs(c) && (c == ' ' || c == '\t' || c == '\n');
  };
  std::vector<Str> fields;
  size_t i = 0, n = s.size();
  // rule (a): leading IFS whitespace is ignored
  while (i < n && is_ws(s[i])) i++;
  Str cur;
  bool have_cur = false;
  while (i < n) {
    char c = s[i];
    if (is_ifs(c) && !is_ws(c)) {
      // rule (b): a non-ws IFS byte with adjacent ws delimits a field
      fields.push_back(cur);
      cur.clear();
      have_cur = false;
      i++;
      while (i < n && is_ws(s[i])) i++;
      continue;
    }
    if (is_ws(c)) {
      size_t j = i;
      while (j < n && is_ws(s[j])) j++;
      if (j < n && is_ifs(s[j]) && !is_ws(s[j])) {
        // ws adjacent to a non-ws delimiter folds into it
        fields.push_back(cur);
        cur.clear();
        have_cur = false;
        i = j + 1;
        while (i < n && is_ws(s[i])) i++;
        continue;
      }
      if (j >= n) break;  // rule (a): trailing ws ignored
      // rule (c): a ws run delimits (no empty field)
      if (have_cur) {
        fields.push_back(cur);
        cur.clear();
        have_cur = false;
      }
      i = j;
      continue;
    }
    cur += c;
    have_cur = true;
    i++;
  }
  if (have_cur) fields.push_back(cur);
  return fields;
}

Fields production_split(ExpandEnv& env, const Str& s, const Str& ifs) {
  env.st.global_env["IFS"] = ifs;
  ExpandedWords e;
  e.push_back({ExpExpTxt{s}});
  return combine_fields(remove_quotes(field_split(env.st, e)));
}

}  // namespace

TEST_CASE("field splitting matches the brute-force oracle on 5000 random pairs") {
  ExpandEnv env;
  std::mt19937 rng(987654);
  const Str str_alpha = "ab \t,:x";
  const std::vector<Str> ifs_choices = {" \t\n", ",", " ,", ", ", ":", "x", " ", "",
                                        ",:", " \t,:"};
  for (int i = 0; i < 5000; i++) {
    Str ifs = ifs_choices[rng() % ifs_choices.size()];
    int len = static_cast<int>(rng() % 13);
    Str s;
    for (int k = 0; k < len; k++) s += str_alpha[rng() % str_alpha.size()];
    auto expected = oracle_split(s, ifs);
    auto got = production_split(env, s, ifs);
    if (expected != got) {
      CAPTURE(s, ifs, expected, got);
      REQUIRE(expected == got);
    }
  }
}

TEST_CASE("splitting fixed cases") {
  ExpandEnv env;
  CHECK(production_split(env, "a,,b", ",") == Fields{"a", "", "b"});
  CHECK(production_split(env, "a,", ",") == Fields{"a"});
  CHECK(production_split(env, ",a", ",") == Fields{"", "a"});
  CHECK(production_split(env, ",", ",") == Fields{""});
  CHECK(production_split(env, "", ",") == Fields{});
  CHECK(production_split(env, " a , ", ", ") == Fields{"a"});
  CHECK(production_split(env, " ,a", " ,") == Fields{"", "a"});
  CHECK(production_split(env, "a  b", " ") == Fields{"a", "b"});
  CHECK(production_split(env, "ab", "") == Fields{"ab"});
}
