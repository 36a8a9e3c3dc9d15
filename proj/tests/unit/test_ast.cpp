#include "catch_amalgamated.hpp"
#include "smolsh/parser.hpp"

using namespace smolsh;

namespace {

CommandPtr parse_all(const Str& src) {
  auto s = ParseSession::from_string(src);
  CommandPtr all;
  while (true) {
    auto r = parse_next(*s, {}, "", "");
    REQUIRE(r.kind != ParseResult::Kind::SyntaxError);
    if (r.kind == ParseResult::Kind::Eof) break;
    if (r.kind == ParseResult::Kind::Blank) continue;
    all = all ? mk(Seq{all, r.cmd}) : r.cmd;
  }
  REQUIRE(all);
  return all;
}

// render-parse-render fixpoint: the first render must reparse to a command
// rendering identically.
void check_roundtrip(const Str& src) {
  CommandPtr first = parse_all(src);
  Str r1 = render(first);
  CAPTURE(src, r1);
  CommandPtr second = parse_all(r1 + "\n");
  Str r2 = render(second);
  CHECK(r1 == r2);
}

}  // namespace

TEST_CASE("render of source forms") {
  CHECK(render(parse_all("! true\n")) == "! true");
  CHECK(render(parse_all("x=5 echo hi >f\n")) == "x=5 echo hi >f");
  CHECK(render(parse_all("a | b && c\n")) == "a | b && c");
}

TEST_CASE("runtime forms render as bracketed diagnostics") {
  CHECK(render(mk(DoneCmd{})) == "\xe2\x9f\xa8" "done\xe2\x9f\xa9");
  CHECK(render(mk(BreakCmd{2})) == "\xe2\x9f\xa8" "break 2\xe2\x9f\xa9");
  auto w = mk(WaitCmd{42, false, true});
  CHECK(render(w) == "\xe2\x9f\xa8" "wait pid=42\xe2\x9f\xa9");
}

TEST_CASE("round-trip over tricky sources") {
  for (const char* src : {
           "echo hi\n",
           "echo 'a b' \"c $x\" d\\ e\n",
           "x=5 y='q u' cmd arg1 arg2 2>/dev/null <in >>out\n",
           "if a; then b; elif c; then d; else e; fi\n",
           "while ! a && b; do c; done\n",
           "until x; do y; done\n",
           "for i in a b 'c d'; do echo $i; done\n",
           "case $x in (a|b*) y;; ('') z;; *) ;; esac\n",
           "f() { a; b | c; }\nf 1 2\n",
           "( a; b ) >log 2>&1\n",
           "{ a; b; } &\n",
           "a && b || ! c\n",
           "echo ~ ~root ~/sub x=~:~u\n",
           "echo $? $# $- $$ $! $* $@ \"$@\" ${x} ${y:-\"a b\"} ${z+alt}\n",
           "echo ${v:=dflt} ${w?msg here} ${#long} ${p#*/} ${q%%.*}\n",
           "echo $((x + 3 * (2 - 1))) $(cmd a | b) `legacy`\n",
           "cat <<EOF\nbody $v line\nsecond\nEOF\n",
           "cat <<'EOF'\nraw $v\nEOF\n",
           "cat <<-EOF\n\tstripped\nEOF\n",
           "echo a* 'b*' [ab]? x\\*y\n",
           "exec 3<&0 4>&1 5>&-\n",
           "echo \"nested $(echo \\\"deep\\\") done\"\n",
           "echo \"multi\nline\"\n",
           "x= y=empty echo\n",
       }) {
    check_roundtrip(src);
  }
}

TEST_CASE("parser never emits runtime forms") {
  CommandPtr c = parse_all(
      "if a; then b; fi\nwhile x; do y; done\nf() { :; }\ncase q in (*) ;; esac\n"
      "echo $(inner) `old` $((1+1)) ${p:-w}\n");
  // walk the tree: only source alternatives allowed
  std::function<void(const CommandPtr&)> walk_cmd;
  std::function<void(const Word&)> walk_word = [&](const Word& w) {
    for (auto& e : w) {
      if (auto* ctl = std::get_if<Control>(&e.v)) {
        CHECK_FALSE(std::holds_alternative<AssignCode>(ctl->code));
        CHECK_FALSE(std::holds_alternative<ErrorFmtCode>(ctl->code));
        CHECK_FALSE(std::holds_alternative<MatchFmtCode>(ctl->code));
        CHECK_FALSE(std::holds_alternative<CmdSubstRunningCode>(ctl->code));
        CHECK_FALSE(std::holds_alternative<CmdWaitCode>(ctl->code));
        if (auto* q = std::get_if<QuotedCode>(&ctl->code)) walk_word(q->word);
        if (auto* a = std::get_if<ArithCode>(&ctl->code)) walk_word(a->word);
        if (auto* cs = std::get_if<CmdSubstCode>(&ctl->code)) walk_cmd(cs->cmd);
        if (auto* p = std::get_if<ParamCode>(&ctl->code)) walk_word(p->fmt.word);
      }
    }
  };
  walk_cmd = [&](const CommandPtr& cmd) {
    if (!cmd) return;
    bool source_form =
        as<Simple>(cmd) || as<Pipeline>(cmd) || as<Redirected>(cmd) ||
        as<Background>(cmd) || as<Subshell>(cmd) || as<Seq>(cmd) || as<And>(cmd) ||
        as<Or>(cmd) || as<Not>(cmd) || as<While>(cmd) || as<For>(cmd) ||
        as<If>(cmd) || as<Case>(cmd) || as<FnDef>(cmd);
    CHECK(source_form);
    if (auto* s = as<Simple>(cmd)) {
      walk_word(s->words);
      for (auto& [n, w] : s->assigns) walk_word(w);
    }
    if (auto* s = as<Seq>(cmd)) { walk_cmd(s->c1); walk_cmd(s->c2); }
    if (auto* a = as<And>(cmd)) { walk_cmd(a->c1); walk_cmd(a->c2); }
    if (auto* o = as<Or>(cmd)) { walk_cmd(o->c1); walk_cmd(o->c2); }
    if (auto* n = as<Not>(cmd)) walk_cmd(n->cmd);
    if (auto* w = as<While>(cmd)) { walk_cmd(w->cond); walk_cmd(w->body); }
    if (auto* f = as<For>(cmd)) { walk_word(f->words); walk_cmd(f->body); }
    if (auto* i = as<If>(cmd)) { walk_cmd(i->cond); walk_cmd(i->then_cmd); walk_cmd(i->else_cmd); }
    if (auto* cs = as<Case>(cmd)) {
      walk_word(cs->scrutinee);
      for (auto& b : cs->branches) {
        for (auto& p : b.patterns) walk_word(p);
        walk_cmd(b.body);
      }
    }
    if (auto* fd = as<FnDef>(cmd)) walk_cmd(fd->body);
    if (auto* sub = as<Subshell>(cmd)) walk_cmd(sub->cmd);
    if (auto* r = as<Redirected>(cmd)) walk_cmd(r->cmd);
    if (auto* b = as<Background>(cmd)) walk_cmd(b->cmd);
    if (auto* p = as<Pipeline>(cmd))
      for (auto& m : p->commands) walk_cmd(m);
  };
  walk_cmd(c);
}

TEST_CASE("trace records follow the schema shape") {
  Str rec = to_trace_json(3, "expand", "ExpStart", {}, "term text", "out", "err");
  CHECK(rec ==
        "{\"n\":3,\"phase\":\"expand\",\"rule\":\"ExpStart\",\"term\":\"term text\","
        "\"stdout\":\"out\",\"stderr\":\"err\"}");
  EnvDelta delta;
  delta["x"] = Str("1");
  delta["gone"] = std::nullopt;
  Str rec2 = to_trace_json(0, "eval", "Run", delta, "t", "", "");
  CHECK(rec2.find("\"env_delta\":{\"gone\":null,\"x\":\"1\"}") != Str::npos);
}

TEST_CASE("json escaping") {
  CHECK(jsonw::str("a\"b\\c\nd\te\x01") == "\"a\\\"b\\\\c\\nd\\te\\u0001\"");
}
