#include "catch_amalgamated.hpp"
#include "smolsh/state.hpp"

using namespace smolsh;

TEST_CASE("lookup resolution order") {
  ShellState st;
  st.last_status = 47;
  CHECK(lookup(st, "?") == Str("47"));
  st.root_pid = 1234;
  CHECK(lookup(st, "$") == Str("1234"));
  CHECK(lookup(st, "!") == std::nullopt);  // no background job yet
  st.last_bg_pid = 99;
  CHECK(lookup(st, "!") == Str("99"));
  st.positional = {"a", "b"};
  CHECK(lookup(st, "#") == Str("2"));
  CHECK(lookup(st, "1") == Str("a"));
  CHECK(lookup(st, "2") == Str("b"));
  CHECK(lookup(st, "3") == std::nullopt);
  st.arg0 = "sh0";
  CHECK(lookup(st, "0") == Str("sh0"));

  st.global_env["x"] = "0";
  push_scope(st);
  set_local(st, "x", Str("1"));
  CHECK(lookup(st, "x") == Str("1"));  // newest-first shadowing
  pop_scope(st);
  CHECK(lookup(st, "x") == Str("0"));
  CHECK(lookup(st, "unset_name") == std::nullopt);
}

TEST_CASE("option letters are alphabetical") {
  ShellState st;
  st.options = {"errexit", "xtrace"};
  CHECK(option_letters(st) == "ex");
  st.options.insert("allexport");
  CHECK(option_letters(st) == "aex");
}

TEST_CASE("set_global writes through to locals") {
  ShellState st;
  st.global_env["x"] = "0";
  push_scope(st);
  set_local(st, "x", Str("1"));
  CHECK_FALSE(set_global(st, "x", "2"));
  CHECK(lookup(st, "x") == Str("2"));
  pop_scope(st);
  CHECK(lookup(st, "x") == Str("0"));  // the outer value is untouched
}

TEST_CASE("readonly violations") {
  ShellState st;
  st.global_env["r"] = "v";
  st.readonly_set.insert("r");
  auto err = set_global(st, "r", "w");
  REQUIRE(err.has_value());
  CHECK(err->name == "r");
  push_scope(st);
  CHECK(set_local(st, "r", Str("local")).has_value());  // local over readonly errors
  CHECK(unset_var(st, "r").has_value());
  pop_scope(st);
}

TEST_CASE("local with no value shadows as unset") {
  ShellState st;
  st.global_env["y"] = "outer";
  push_scope(st);
  set_local(st, "y", std::nullopt);
  st.locals.back()["y"].value.reset();
  CHECK(lookup(st, "y") == std::nullopt);
  pop_scope(st);
  CHECK(lookup(st, "y") == Str("outer"));
}

TEST_CASE("push then pop is identity on visible bindings") {
  ShellState st;
  st.global_env["a"] = "1";
  st.global_env["b"] = "2";
  push_scope(st);
  set_local(st, "c", Str("3"));
  pop_scope(st);
  CHECK(lookup(st, "a") == Str("1"));
  CHECK(lookup(st, "b") == Str("2"));
  CHECK(lookup(st, "c") == std::nullopt);
}

TEST_CASE("nested pushes pop in LIFO order") {
  ShellState st;
  push_scope(st);
  set_local(st, "x", Str("1"));
  push_scope(st);
  set_local(st, "x", Str("2"));
  CHECK(lookup(st, "x") == Str("2"));
  pop_scope(st);
  CHECK(lookup(st, "x") == Str("1"));
  pop_scope(st);
  CHECK(lookup(st, "x") == std::nullopt);
}

TEST_CASE("allexport marks assignments exported") {
  ShellState st;
  st.options.insert("allexport");
  set_global(st, "n", "v");
  CHECK(st.export_set.count("n") == 1);
}

TEST_CASE("environment import and export") {
  ShellState st;
  import_host_env(st, {{"PATH", "/bin"}, {"2BAD", "x"}, {"OK_1", "y"}});
  CHECK(st.global_env.count("PATH") == 1);
  CHECK(st.export_set.count("PATH") == 1);
  CHECK(st.global_env.count("2BAD") == 0);  // invalid names dropped
  push_scope(st);
  st.locals.back()["LOCAL_EXP"] = LocalVar{Str("lv"), false, true};
  auto env = export_env(st, {{"EXTRA", "e"}});
  CHECK(env.at("PATH") == "/bin");
  CHECK(env.at("LOCAL_EXP") == "lv");
  CHECK(env.at("EXTRA") == "e");
  CHECK(env.count("OK_1") == 1);
}

TEST_CASE("child state resets traps, keeps root pid") {
  ShellState st;
  st.root_pid = 7;
  st.traps[Sig::TERM] = "echo T";
  st.traps[Sig::INT] = "";  // ignored
  st.jobs[1] = JobInfo{};
  ShellState child = make_child_state(st);
  CHECK(child.root_pid == 7);
  CHECK_FALSE(child.outermost);
  CHECK(child.traps.count(Sig::TERM) == 0);
  CHECK(child.traps.count(Sig::INT) == 1);  // ignored stays ignored
  REQUIRE(child.supershell_traps.has_value());
  CHECK(child.supershell_traps->at(Sig::TERM) == "echo T");
  CHECK(child.jobs.empty());
}

TEST_CASE("status clamps to 0..255") {
  ShellState st;
  set_status(st, 256);
  CHECK(st.last_status == 0);
  set_status(st, 257);
  CHECK(st.last_status == 1);
  set_status(st, -1);
  CHECK(st.last_status == 255);
}
