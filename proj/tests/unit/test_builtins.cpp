#include "catch_amalgamated.hpp"
#include "helpers.hpp"

using namespace smolsh;
using namespace smolsh_test;

TEST_CASE("dispatch classification") {
  CHECK(dispatch("break") == BuiltinKind::Special);
  CHECK(dispatch("local") == BuiltinKind::Special);
  CHECK(dispatch(".") == BuiltinKind::Special);
  CHECK(dispatch("cd") == BuiltinKind::Mandatory);
  CHECK(dispatch("getopts") == BuiltinKind::Mandatory);
  CHECK(dispatch("echo") == BuiltinKind::Extra);
  CHECK(dispatch("[") == BuiltinKind::Extra);
  CHECK(dispatch("fg") == BuiltinKind::Unsupported);
  CHECK(dispatch("ls") == BuiltinKind::None);
}

TEST_CASE("unsupported mandatory builtins diagnose with 127") {
  auto r = sym_run("fg\necho $?\n");
  CHECK(r.out == "127\n");
  CHECK(r.err.find("fg") != Str::npos);
}

TEST_CASE("set positional and flags") {
  auto r = sym_run("set -- a b; echo $# $1 $2\n");
  CHECK(r.out == "2 a b\n");
  r = sym_run("set -e; echo $-\n");
  CHECK(r.out == "e\n");
  r = sym_run("set -ex; case $- in (*e*x*|*x*e*) echo both;; esac\n");
  CHECK(r.out == "both\n");
  r = sym_run("set -o nounset; echo $nope\n");
  CHECK(r.status == 2);
  r = sym_run("set -u; set +u; echo ${nope-ok}\n");
  CHECK(r.out == "ok\n");
  // errexit end to end: bare false exits the shell with 1
  r = sym_run("set -e; false; echo not reached\n");
  CHECK(r.status == 1);
  CHECK(r.out.empty());
  // nonlexicalctrl is a named option
  r = sym_run("set -o nonlexicalctrl; echo on\n");
  CHECK(r.out == "on\n");
}

TEST_CASE("shift") {
  auto r = sym_run("set -- a b c; shift 2; echo $1\n");
  CHECK(r.out == "c\n");
  r = sym_run("set -- a; shift 5; echo after\n");
  CHECK(r.status == 2);  // special-builtin error exits non-interactive shells
  CHECK(r.out.empty());
}

TEST_CASE("trap set, reset, print") {
  auto r = sym_run("trap 'echo T' TERM; trap\n");
  CHECK(r.out == "trap -- 'echo T' TERM\n");
  r = sym_run("trap 'echo T' TERM; trap - TERM; trap\n");
  CHECK(r.out.empty());
  r = sym_run("trap '' INT TERM; trap\n");
  CHECK(r.out == "trap -- '' INT\ntrap -- '' TERM\n");
  // a command substitution reports the supershell's traps
  r = sym_run("trap 'echo T' TERM; t=$(trap); echo \"captured: $t\"\n");
  CHECK(r.out == "captured: trap -- 'echo T' TERM\n");
  // but a subshell that modifies traps reports its own
  r = sym_run("trap 'echo T' TERM; t=$(trap 'echo U' HUP; trap); echo \"$t\"\n");
  CHECK(r.out == "trap -- 'echo U' HUP\n");
}

TEST_CASE("exit trap runs once at termination") {
  auto r = sym_run("trap 'echo bye' EXIT; echo hi\n");
  CHECK(r.out == "hi\nbye\n");
  CHECK(r.status == 0);
  r = sym_run("trap 'echo bye' EXIT; exit 3\n");
  CHECK(r.out == "bye\n");
  CHECK(r.status == 3);
}

TEST_CASE("getopts sequence from the paper") {
  Str script =
      "getopts \"ab:c:\" opt -ab hi -c hello\n"
      "echo \"1: opt=$opt OPTIND=$OPTIND OPTARG=${OPTARG-}\"\n"
      "getopts \"ab:c:\" opt -ab hi -c hello\n"
      "echo \"2: opt=$opt OPTIND=$OPTIND OPTARG=${OPTARG-}\"\n"
      "getopts \"ab:c:\" opt -ab hi -c hello\n"
      "echo \"3: opt=$opt OPTIND=$OPTIND OPTARG=${OPTARG-}\"\n"
      "getopts \"ab:c:\" opt -ab hi -c hello; st=$?\n"
      "echo \"4: opt=$opt OPTIND=$OPTIND st=$st\"\n";
  auto r = sym_run(script);
  CHECK(r.out ==
        "1: opt=a OPTIND=2 OPTARG=\n"
        "2: opt=b OPTIND=3 OPTARG=hi\n"
        "3: opt=c OPTIND=5 OPTARG=hello\n"
        "4: opt=? OPTIND=5 st=1\n");
}

TEST_CASE("getopts silent and loud unknown options") {
  auto r = sym_run("getopts :ax opt -q; echo \"$opt ${OPTARG-}\"\n");
  CHECK(r.out == "? q\n");
  CHECK(r.err.empty());
  r = sym_run("getopts ax opt -q; echo \"$opt\"\n");
  CHECK(r.out == "?\n");
  CHECK_FALSE(r.err.empty());
  // missing argument, silent mode
  r = sym_run("getopts :a: opt -a; echo \"$opt ${OPTARG-}\"\n");
  CHECK(r.out == ": a\n");
  // getopts with no explicit args parses the positional parameters
  r = sym_run("set -- -x val; getopts x:y opt; echo \"$opt ${OPTARG-} $OPTIND\"\n");
  CHECK(r.out == "x val 3\n");
}

TEST_CASE("local scoping") {
  auto r = sym_run(
      "x=outer\n"
      "f() { local x; x=inner; echo \"in: ${x-unset}\"; }\n"
      "f\n"
      "echo \"out: $x\"\n");
  CHECK(r.out == "in: inner\nout: outer\n");
  // local with no value shadows as unset
  r = sym_run("y=o; f() { local y; echo \"${y-unset}\"; }; f; echo $y\n");
  CHECK(r.out == "unset\no\n");
  // local outside a function is an error and exits (special builtin)
  r = sym_run("local q; echo no\n");
  CHECK(r.status == 2);
  CHECK(r.out.empty());
  // readonly collision errors and the non-interactive shell exits
  r = sym_run("readonly g=1; f() { local g; echo no; }; f; echo after\n");
  CHECK(r.out.empty());
  CHECK(r.status == 2);
}

TEST_CASE("readonly and export") {
  auto r = sym_run("readonly r=1; r=2\necho no\n");
  CHECK(r.out.empty());  // assignment to readonly aborts
  r = sym_run("export V=x; $SMOLSH_NOOP: ; export -p\n");
  CHECK(r.out.find("export V='x'\n") != Str::npos);
  r = sym_run("readonly R=y; readonly -p\n");
  CHECK(r.out.find("readonly R='y'\n") != Str::npos);
  r = sym_run("unset PATH; export PATH; PATH=/x; x=$(env 2>/dev/null); echo done\n");
  CHECK(r.out == "done\n");
}

TEST_CASE("unset variables and functions") {
  auto r = sym_run("x=1; unset x; echo ${x-gone}\n");
  CHECK(r.out == "gone\n");
  r = sym_run("f() { echo fn; }; unset -f f; f; echo $?\n");
  CHECK(r.out == "127\n");
  r = sym_run("readonly r=1; unset r; echo no\n");
  CHECK(r.out.empty());
  CHECK(r.status == 2);
  r = sym_run("unset never_set_xyz; echo $?\n");
  CHECK(r.out == "0\n");
}

TEST_CASE("cd and pwd against the synthetic tree") {
  SymbolicSpec spec;
  spec.fs_root = dir_node({{"d", dir_node({{"sub", dir_node()}})}});
  auto r = sym_run("cd /d; pwd; cd sub; pwd; cd ..; pwd; cd /nope || echo fail\n", spec);
  CHECK(r.out == "/d\n/d/sub\n/d\nfail\n");
  r = sym_run("cd /d; cd /; cd -; pwd\n", spec);
  CHECK(r.out == "/d\n/d\n");  // cd - prints the new directory
  spec.env["CDPATH"] = "/d";
  r = sym_run("cd sub && pwd\n", spec);
  CHECK(r.out == "/d/sub\n/d/sub\n");  // cdpath hit prints the directory
  spec.env.erase("CDPATH");
  spec.env["HOME"] = "/d";
  r = sym_run("cd && pwd\n", spec);
  CHECK(r.out == "/d\n");
}

TEST_CASE("read splits into variables") {
  SymbolicSpec spec;
  spec.stdin_data = "a b c\n";
  auto r = sym_run("read x y; echo \"x=$x y=$y\"\n", spec);
  CHECK(r.out == "x=a y=b c\n");
  spec.stdin_data = "";
  r = sym_run("read x; echo \"st=$? x=$x\"\n", spec);
  CHECK(r.out == "st=1 x=\n");
  spec.stdin_data = "one\\\ntwo rest here\n";
  r = sym_run("read a b; echo \"$a|$b\"\n", spec);
  CHECK(r.out == "onetwo|rest here\n");  // continuation joins, then splits
  spec.stdin_data = "a\\ b c\n";
  r = sym_run("read a b; echo \"$a|$b\"\n", spec);
  CHECK(r.out == "a b|c\n");  // escaped blank is protected from splitting
  r = sym_run("read -r a b; echo \"$a|$b\"\n", spec);
  CHECK(r.out == "a\\|b c\n");  // raw mode keeps the backslash
  spec.stdin_data = "x:y:z\n";
  r = sym_run("IFS=: read p q; echo \"$p|$q\"\n", spec);
  CHECK(r.out == "x|y:z\n");
  // trailing IFS whitespace trimmed from the remainder
  spec.stdin_data = "  a  b  \n";
  r = sym_run("read v; echo \"[$v]\"\n", spec);
  CHECK(r.out == "[a  b]\n");
}

TEST_CASE("umask") {
  auto r = sym_run("umask\numask 077\numask\n");
  CHECK(r.out == "0022\n0077\n");
}

TEST_CASE("alias bookkeeping") {
  auto r = sym_run("alias e='echo hi'; alias\n");
  CHECK(r.out == "e='echo hi'\n");
  r = sym_run("alias e='x'; alias e\n");
  CHECK(r.out == "e='x'\n");
  r = sym_run("alias nope; echo $?\n");
  CHECK(r.out == "1\n");
  r = sym_run("alias a=1 b=2; unalias a; alias\n");
  CHECK(r.out == "b='2'\n");
  r = sym_run("alias a=1 b=2; unalias -a; alias; echo $?\n");
  CHECK(r.out == "0\n");
}

TEST_CASE("type and command -v") {
  auto r = sym_run("type true\n");
  CHECK(r.out == "true is a shell builtin\n");
  r = sym_run("type break\n");
  CHECK(r.out == "break is a special shell builtin\n");
  r = sym_run("type if\n");
  CHECK(r.out == "if is a shell keyword\n");
  r = sym_run("f() { :; }; type f\n");
  CHECK(r.out == "f is a shell function\n");
  r = sym_run("type /bin/ls\n");
  CHECK(r.out == "/bin/ls is /bin/ls\n");
  r = sym_run("type no_such_cmd_xyz\n");
  CHECK(r.status == 127);
  r = sym_run("command -v true\n");
  CHECK(r.out == "true\n");
  r = sym_run("command -v ls\n");
  CHECK(r.out == "/bin/ls\n");
  r = sym_run("command -V true\n");
  CHECK(r.out == "true is a shell builtin\n");
}

TEST_CASE("command prefix suppresses special severity and functions") {
  auto r = sym_run("command eval 'if then'\necho after\n");
  CHECK(r.out == "after\n");
  r = sym_run("true() { echo fn; }; true; command true; echo $?\n");
  CHECK(r.out == "fn\n0\n");
  r = sym_run("command shift 5; echo survived\n");
  CHECK(r.out == "survived\n");
}

TEST_CASE("hash maintains its table without affecting resolution") {
  auto r = sym_run("hash ls; hash\n");
  CHECK(r.out == "ls=/bin/ls\n");
  r = sym_run("hash ls; hash -r; hash; echo $?\n");
  CHECK(r.out == "0\n");
  r = sym_run("hash no_such_cmd_xyz; echo $?\n");
  CHECK(r.out == "1\n");
}

TEST_CASE("echo and printf") {
  auto r = sym_run("echo -n no newline\n");
  CHECK(r.out == "no newline");
  r = sym_run("echo a\\\\b 'c\\nd'\n");  // no escape processing
  CHECK(r.out == "a\\b c\\nd\n");
  r = sym_run("printf '%d\\n' 0x10\n");
  CHECK(r.out == "16\n");
  r = sym_run("printf '%s-%s.' a b c d\n");  // format reuse
  CHECK(r.out == "a-b.c-d.");
  r = sym_run("printf '%05d|%-4s|%x|%X|%o|%u\\n' 42 ab 255 255 8 7\n");
  CHECK(r.out == "00042|ab  |ff|FF|10|7\n");
  r = sym_run("printf '%c' hello\n");
  CHECK(r.out == "h");
  r = sym_run("printf 'a\\tb\\n\\061\\0101\\n'\n");
  CHECK(r.out == "a\tb\n1A\n");
  r = sym_run("printf '%d\\n' 9x 2>/dev/null; echo $?\n");
  CHECK(r.out == "9\n1\n");
  r = sym_run("printf '%%\\n'\n");
  CHECK(r.out == "%\n");
  r = sym_run("printf '%d %d\\n' 1\n");  // missing args read as 0
  CHECK(r.out == "1 0\n");
}

TEST_CASE("test and [ argument rules") {
  auto t = [&](const Str& expr) { return sym_run("test " + expr + "; echo $?\n").out; };
  CHECK(t("") == "1\n");
  CHECK(t("x") == "0\n");
  CHECK(t("-n ''") == "1\n");
  CHECK(t("-z ''") == "0\n");
  CHECK(t("! x") == "1\n");
  CHECK(t("a = a") == "0\n");
  CHECK(t("a = b") == "1\n");
  CHECK(t("a != b") == "0\n");
  CHECK(t("3 -lt 10") == "0\n");
  CHECK(t("10 -lt 3") == "1\n");
  CHECK(t("-3 -le -3") == "0\n");
  CHECK(t("! a = b") == "0\n");
  CHECK(t("a = a -a b = b") == "0\n");
  CHECK(t("a = b -o b = b") == "0\n");
  CHECK(t("\\( a = b \\) -o x") == "0\n");
  CHECK(t("-n = =") == "1\n");  // binary wins over unary at three arguments
  CHECK(sym_run("test 5 -eq x; echo $?\n").out == "2\n");
  CHECK(sym_run("[ a = a ]; echo $?\n").out == "0\n");
  CHECK(sym_run("[ a = a; echo $?\n").out == "2\n");  // missing ]
  // one-arg operators that look like operators
  CHECK(t("-n") == "0\n");
  CHECK(t("=") == "0\n");
}

TEST_CASE("test file predicates in the symbolic tree") {
  SymbolicSpec spec;
  spec.fs_root = dir_node({{"f", file_node("content")},
                           {"d", dir_node()},
                           {"empty", file_node("")}});
  auto r = sym_run(
      "test -e /f && echo e1\n"
      "test -f /f && echo f1\n"
      "test -d /d && echo d1\n"
      "test -f /d || echo notfile\n"
      "test -s /f && echo s1\n"
      "test -s /empty || echo empty\n"
      "test -e /nope || echo noent\n",
      spec);
  CHECK(r.out == "e1\nf1\nd1\nnotfile\ns1\nempty\nnoent\n");
}

TEST_CASE("times prints two lines in POSIX format") {
  auto r = sym_run("times\n");
  CHECK(r.out == "0m0.000000s 0m0.000000s\n0m0.000000s 0m0.000000s\n");
}

TEST_CASE("wait on unknown pid yields 127") {
  auto r = sym_run("wait 9999; echo $?\n");
  CHECK(r.out == "127\n");
}

TEST_CASE("kill delivers to symbolic processes") {
  auto r = sym_run("while true; do :; done & kill $!; wait $!; echo $?\n");
  CHECK(r.out == "143\n");  // 128 + TERM
  r = sym_run("kill -l | head_absent 2>/dev/null; kill -l\n");
  CHECK(r.out.find("TERM\n") != Str::npos);
  r = sym_run("kill 424242; echo $?\n");
  CHECK(r.out == "1\n");
}

TEST_CASE("eval and dot") {
  auto r = sym_run("eval 'x=5; echo $x'\n");
  CHECK(r.out == "5\n");
  r = sym_run("eval; echo $?\n");
  CHECK(r.out == "0\n");
  r = sym_run("eval 'exit 7'; echo no\n");
  CHECK(r.status == 7);
  SymbolicSpec spec;
  spec.fs_root = dir_node({{"lib.sh", file_node("sourced=yes\nreturn 3\necho no\n")}});
  r = sym_run(". /lib.sh; echo \"$? $sourced\"\n", spec);
  CHECK(r.out == "3 yes\n");
  r = sym_run(". /missing.sh; echo no\n", spec);
  CHECK(r.status == 127);
  CHECK(r.out.empty());
}

TEST_CASE("return semantics") {
  auto r = sym_run("f() { return 5; echo no; }; f; echo $?\n");
  CHECK(r.out == "5\n");
  r = sym_run("return 1; echo no\n");
  CHECK(r.status == 2);  // outside function/dot: special-builtin error
  r = sym_run("f() { eval 'return 4'; echo no; }; f; echo $?\n");
  CHECK(r.out == "4\n");  // return passes through eval to the function
}
