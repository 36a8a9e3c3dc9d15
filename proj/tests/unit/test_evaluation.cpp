#include "catch_amalgamated.hpp"
#include "helpers.hpp"

using namespace smolsh;
using namespace smolsh_test;

TEST_CASE("negation rules") {
  CHECK(sym_run("! true\n").status == 1);
  CHECK(sym_run("! false\n").status == 0);
  CHECK(sym_run("! exit 5\n").status == 5);  // control propagates through !
  // errexit is proscribed for a pipeline beginning with !
  auto r = sym_run("set -e; ! false; echo ok\n");
  CHECK(r.out == "ok\n");
  r = sym_run("set -e; ! true; echo ok\n");
  CHECK(r.out == "ok\n");
}

TEST_CASE("assignment-only command status follows command substitution") {
  auto r = sym_run("x=$(exit 5); echo $?\n");
  CHECK(r.out == "5\n");
  r = sym_run("x=hi; echo $?\n");
  CHECK(r.out == "0\n");
  r = sym_run("false; x=hi; echo $?\n");
  CHECK(r.out == "0\n");  // plain assignment resets to 0
  r = sym_run("x=$(exit 3)$(exit 5); echo $?\n");
  CHECK(r.out == "5\n");  // last substitution wins
}

TEST_CASE("assignments expand unsplit and unglobbed") {
  SymbolicSpec spec = glob_fixture();
  auto r = sym_run("v='a b'; x=$v*; echo \"$x\"\n", spec);
  CHECK(r.out == "a b*\n");
}

TEST_CASE("temporary assignments") {
  // visible to the called function, restored after (nested scope)
  auto r = sym_run("f() { echo \"$v\"; v=changed; }; v=outer; v=temp f; echo \"$v\"\n");
  CHECK(r.out == "temp\nouter\n");
  // special builtins make them global
  r = sym_run("v=perm : ; echo \"$v\"\n");
  CHECK(r.out == "perm\n");
  // non-special builtins see them without persisting
  r = sym_run("IFS=: read a b; echo \"$a|$b\" \"[$IFS]\"\n",
              [] { SymbolicSpec s; s.stdin_data = "x:y\n"; return s; }());
  CHECK(r.out == "x|y [ \t\n]\n");
}

TEST_CASE("lexical break and continue (the paper's function-break script)") {
  Str script = "f() { break; echo hi; }; while true; do f; break; done\n";
  auto r = sym_run(script);
  CHECK(r.out == "hi\n");  // lexical default: break inside f is a no-op
  auto r2 = sym_run("set -o nonlexicalctrl\n" + script);
  CHECK(r2.out.empty());  // non-lexical: break escapes through the call
}

TEST_CASE("break and continue consume loop frames") {
  auto r = sym_run("for i in 1 2 3; do echo $i; break; done\n");
  CHECK(r.out == "1\n");
  r = sym_run("for i in 1 2 3; do [ $i = 2 ] && continue; echo $i; done\n");
  CHECK(r.out == "1\n3\n");
  r = sym_run(
      "for i in 1 2; do for j in a b; do echo $i$j; break 2; done; done; echo end\n");
  CHECK(r.out == "1a\nend\n");
  r = sym_run("for i in 1 2; do for j in a b; do continue 2; done; echo $i; done\n");
  CHECK(r.out.empty());
  // break N beyond the loop depth stops at the outermost loop
  r = sym_run("for i in 1 2; do break 10; done; echo after\n");
  CHECK(r.out == "after\n");
  CHECK(r.status == 0);
  // break outside any loop is a no-op with status 0
  r = sym_run("break; echo $?\n");
  CHECK(r.out == "0\n");
  // break propagates out of eval
  r = sym_run("while true; do eval break; echo no; done; echo out\n");
  CHECK(r.out == "out\n");
}

TEST_CASE("while and for statuses") {
  CHECK(sym_run("false; while false; do :; done\n").status == 0);
  CHECK(sym_run("false; if false; then :; fi\n").status == 0);
  CHECK(sym_run("while true; do false; break; done\n").status == 0);  // break is 0
  CHECK(sym_run("i=0; while [ $i -lt 3 ]; do i=$((i+1)); done; echo $i\n").out == "3\n");
  CHECK(sym_run("for x in; do echo no; done; echo $?\n").out == "0\n");
  CHECK(sym_run("false; for x in a; do false; done\n").status == 1);
}

TEST_CASE("case semantics") {
  auto r = sym_run("case app in (ap?) echo m1;; (*) echo m2;; esac\n");
  CHECK(r.out == "m1\n");
  r = sym_run("false; case x in (y) echo no;; esac; echo $?\n");
  CHECK(r.out == "0\n");  // no branch matching means status 0
  r = sym_run("x='a*'; case 'a*' in ($x) echo glob;; esac\n");
  CHECK(r.out == "glob\n");  // expansion output stays a pattern
  r = sym_run("x='a*'; case abc in (\"$x\") echo no;; (*) echo quoted;; esac\n");
  CHECK(r.out == "quoted\n");  // quoted expansion matches only itself
  r = sym_run("case abc in a*) echo one;; b*) echo two;; esac\n");
  CHECK(r.out == "one\n");
  r = sym_run("case '' in ('') echo empty;; esac\n");
  CHECK(r.out == "empty\n");
  r = sym_run("case x in (a|x|b) echo alt;; esac\n");
  CHECK(r.out == "alt\n");
}

TEST_CASE("if elif else") {
  auto r = sym_run("if false; then echo a; elif true; then echo b; else echo c; fi\n");
  CHECK(r.out == "b\n");
  r = sym_run("if false; then echo a; else echo c; fi\n");
  CHECK(r.out == "c\n");
  // errexit does not fire in conditions
  r = sym_run("set -e; if false; then :; fi; echo survived\n");
  CHECK(r.out == "survived\n");
  r = sym_run("set -e; while false; do :; done; echo survived\n");
  CHECK(r.out == "survived\n");
  r = sym_run("set -e; false && true; echo $?\n");
  // POSIX: the failed && list itself does not exit when it is the whole list
  CHECK(r.out == "1\n");
}

TEST_CASE("and or sequencing") {
  CHECK(sym_run("true && echo y\n").out == "y\n");
  CHECK(sym_run("false && echo y; echo $?\n").out == "1\n");
  CHECK(sym_run("false || echo y\n").out == "y\n");
  CHECK(sym_run("true || echo y; echo $?\n").out == "0\n");
  CHECK(sym_run("true && false || echo fallback\n").out == "fallback\n");
}

TEST_CASE("subshells isolate state") {
  auto r = sym_run("x=1; (x=2; echo $x); echo $x\n");
  CHECK(r.out == "2\n1\n");
  r = sym_run("(exit 4); echo $?\n");
  CHECK(r.out == "4\n");
  r = sym_run("(cd /; pwd)\n");
  CHECK(r.out == "/\n");
  // $$ is the root pid even in subshells
  r = sym_run("echo $$; (echo $$)\n");
  CHECK(r.out == "1\n1\n");
}

TEST_CASE("pipelines") {
  auto r = sym_run("echo hello | read x; echo ${x-unset}\n");
  CHECK(r.out == "unset\n");  // members run in subshells, even the last
  r = sym_run("echo one | cat\n");
  CHECK(r.out == "one\n");
  r = sym_run("true | false; echo $?\n");
  CHECK(r.out == "1\n");  // status of the last member
  r = sym_run("false | true; echo $?\n");
  CHECK(r.out == "0\n");
  r = sym_run("echo a | cat | cat | cat\n");
  CHECK(r.out == "a\n");
  r = sym_run("! true | false; echo $?\n");
  CHECK(r.out == "0\n");
}

TEST_CASE("background jobs record the last pid") {
  auto r = sym_run("true & echo $!; wait $!; echo $?\n");
  CHECK(r.out == "2\n0\n");
  r = sym_run("exit 7 & wait $!; echo $?\n");
  CHECK(r.out == "7\n");
  // background stdin reads EOF, not the shell's stdin
  SymbolicSpec spec;
  spec.stdin_data = "data\n";
  r = sym_run("read x & wait $!; echo \"st=$?\"; read y; echo \"y=$y\"\n", spec);
  CHECK(r.out == "st=1\ny=data\n");
}

TEST_CASE("redirections") {
  SymbolicSpec spec;
  auto r = sym_run("echo hi >/f; cat /f\n", spec);
  CHECK(r.out == "hi\n");
  r = sym_run("echo one >/f; echo two >>/f; cat /f\n", spec);
  CHECK(r.out == "one\ntwo\n");
  r = sym_run("echo x >/f; echo y >/f; cat /f\n", spec);
  CHECK(r.out == "y\n");  // truncation
  r = sym_run("cat </missing; echo $?\n", spec);
  CHECK(r.out == "2\n");
  r = sym_run("echo err 1>&2\n", spec);
  CHECK(r.out.empty());
  CHECK(r.err == "err\n");
  r = sym_run("{ echo o; echo e 1>&2; } 2>/dev/null\n");
  CHECK(r.out == "o\n");
  CHECK(r.err.empty());
  // fd restoration after a simple command
  r = sym_run("echo a >/f; echo b; cat /f\n", spec);
  CHECK(r.out == "b\na\n");
  // ambiguous redirect
  r = sym_run("x='a b'; echo hi > $x; echo $?\n", spec);
  CHECK(r.status == 2);
  // heredocs
  r = sym_run("cat <<EOF\nline $((1+1))\nEOF\n");
  CHECK(r.out == "line 2\n");
  r = sym_run("cat <<'EOF'\nraw $x\nEOF\n");
  CHECK(r.out == "raw $x\n");
  // noclobber
  r = sym_run("set -C; echo x >/f; echo made; echo y >/f || echo blocked; echo z >|/f; cat /f\n",
              spec);
  CHECK(r.out == "made\nblocked\nz\n");
}

TEST_CASE("exec makes redirections permanent") {
  SymbolicSpec spec;
  auto r = sym_run("exec >/captured; echo one; echo two\n", spec);
  CHECK(r.out.empty());
  r = sym_run("exec >/captured; echo one; exec >&2; cat /captured\n", spec);
  CHECK(r.err == "one\n");
}

TEST_CASE("exec of an external in symbolic mode exits with a trace event") {
  auto r = sym_run("no_such_program; echo $?\n");
  CHECK(r.out == "127\n");
  // exec of a virtual utility: the emulation runs, the process exits
  auto r2 = sym_run("ls\n", abc_fixture());
  CHECK(r2.out == "a\nb\nc\n");
  CHECK(r2.status == 0);
}

TEST_CASE("resolve_path order and statuses") {
  auto r = sym_run("f() { echo fn; }; f\n");
  CHECK(r.out == "fn\n");
  // special builtins cannot be shadowed by functions
  r = sym_run("break() { echo fn; }; break; echo $?\n");
  CHECK(r.out == "0\n");
  // functions shadow non-special builtins
  r = sym_run("true() { echo fn; }; true\n");
  CHECK(r.out == "fn\n");
  r = sym_run("no-such-cmd-xyz; echo $?\n");
  CHECK(r.out == "127\n");
  SymbolicSpec spec;
  spec.fs_root = dir_node({{"plain", file_node("not-executable")}});
  r = sym_run("/plain; echo $?\n", spec);
  CHECK(r.out == "126\n");
}

TEST_CASE("traps run at command boundaries and restore status") {
  auto r = sym_run("trap 'echo T' TERM; kill -s TERM $$; echo before; echo $?\n");
  CHECK(r.out == "T\nbefore\n0\n");
  // handler restores the saved status afterwards
  r = sym_run("trap 'true' USR1; false; kill -s USR1 $$; echo $?\n");
  // kill itself succeeded (status 0), the handler ran, saved status restored
  CHECK(r.out == "0\n");
  r = sym_run("trap '' TERM; kill -s TERM $$; echo alive\n");
  CHECK(r.out == "alive\n");
  // default disposition terminates
  r = sym_run("kill -s TERM $$; echo no\n");
  CHECK(r.out.empty());
  CHECK(r.status == 128 + 15);
}

TEST_CASE("xtrace writes commands to stderr") {
  auto r = sym_run("set -x\necho hi\n");
  CHECK(r.out == "hi\n");
  CHECK(r.err == "+ echo hi\n");
  r = sym_run("set -x\nx=5\n");
  CHECK(r.err == "+ x=5\n");
  r = sym_run("PS4='| '; set -x; echo q\n");
  CHECK(r.err == "| echo q\n");
}

TEST_CASE("verbose echoes input lines") {
  auto r = sym_run("set -v\necho hi\n");
  CHECK(r.err == "echo hi\n");
}

TEST_CASE("noexec skips execution") {
  auto r = sym_run("set -n\necho no\n");
  CHECK(r.out.empty());
  CHECK(r.status == 0);
}

TEST_CASE("errexit fires only when unchecked") {
  auto r = sym_run("set -e; if false; then :; fi; false || true; ! false; echo end\n");
  CHECK(r.out == "end\n");
  r = sym_run("set -e; false; echo no\n");
  CHECK(r.out.empty());
  CHECK(r.status == 1);
  r = sym_run("set -e; (exit 3); echo no\n");
  CHECK(r.status == 3);
  r = sym_run("set -e; x=$(false); echo no\n");
  CHECK(r.status == 1);
}

TEST_CASE("eval loops unwind through return and exit") {
  auto r = sym_run("f() { . /inner; echo after-dot; }; f; echo $?\n",
                   [] {
                     SymbolicSpec s;
                     s.fs_root = dir_node({{"inner", file_node("return 9\n")}});
                     return s;
                   }());
  CHECK(r.out == "after-dot\n9\n");  // return caught by the dot script
  r = sym_run("eval 'exit 5'; echo no\n");
  CHECK(r.status == 5);
}

TEST_CASE("expansion errors abort the command but honor interactivity rules") {
  auto r = sym_run("echo ${nope?goodbye}; echo unreached\n");
  CHECK(r.status == 2);
  CHECK(r.out.empty());
  CHECK(r.err.find("nope: goodbye") != Str::npos);
}

TEST_CASE("syntax errors abort non-interactive scripts with status 2") {
  auto r = sym_run("echo first\nif then fi\necho second\n");
  CHECK(r.out == "first\n");
  CHECK(r.status == 2);
}

TEST_CASE("step determinism on a busy script") {
  Str script =
      "x=$(echo inner)\nfor i in 1 2; do echo $i$x; done | cat\nwait\necho done\n";
  auto a = sym_run(script);
  auto b = sym_run(script);
  CHECK(a.records == b.records);
  CHECK(a.out == b.out);
  CHECK(a.status == b.status);
}

TEST_CASE("argument expansion precedes redirections precedes assignments") {
  // observable through the trace rule order on a command with all three parts
  auto r = sym_run("v=1 echo hi >/dev/null\n");
  int arg_done = -1, redir_done = -1, assign_set = -1;
  for (int i = 0; i < static_cast<int>(r.records.size()); i++) {
    if (r.records[i].find("\"rule\":\"CmdArgDone\"") != Str::npos && arg_done < 0)
      arg_done = i;
    if (r.records[i].find("\"rule\":\"CmdRedirDone\"") != Str::npos && redir_done < 0)
      redir_done = i;
    if (r.records[i].find("\"rule\":\"CmdAssignSet\"") != Str::npos && assign_set < 0)
      assign_set = i;
  }
  REQUIRE(arg_done >= 0);
  REQUIRE(redir_done >= 0);
  REQUIRE(assign_set >= 0);
  CHECK(arg_done < redir_done);
  CHECK(redir_done < assign_set);
}
