// smolsh -- a small-step POSIX shell semantics engine.
//
// ast.hpp: source syntax, runtime evaluation forms, rendering, and the
// per-step trace record emitter.

#ifndef SMOLSH_AST_HPP
#define SMOLSH_AST_HPP

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace smolsh {

using Str = std::string;            // byte string; no code-point semantics
using Fields = std::vector<Str>;    // final result of word expansion
using Fd = int;
using Pid = long;

class ParseSession;  // opaque parsing context (pctx); see parser.hpp

// ---------------------------------------------------------------------------
// Signals

enum class Sig : int {
  EXIT = 0,  // pseudo-signal for the trap builtin
  HUP = 1, INT = 2, QUIT = 3, ABRT = 6, KILL = 9, USR1 = 10, USR2 = 12,
  PIPE = 13, ALRM = 14, TERM = 15, CHLD = 17, CONT = 18, STOP = 19,
  TSTP = 20, TTIN = 21, TTOU = 22,
};

inline const std::vector<std::pair<Sig, const char*>>& signal_table() {
  static const std::vector<std::pair<Sig, const char*>> t = {
      {Sig::EXIT, "EXIT"}, {Sig::HUP, "HUP"},   {Sig::INT, "INT"},
      {Sig::QUIT, "QUIT"}, {Sig::ABRT, "ABRT"}, {Sig::KILL, "KILL"},
      {Sig::USR1, "USR1"}, {Sig::USR2, "USR2"}, {Sig::PIPE, "PIPE"},
      {Sig::ALRM, "ALRM"}, {Sig::TERM, "TERM"}, {Sig::CHLD, "CHLD"},
      {Sig::CONT, "CONT"}, {Sig::STOP, "STOP"}, {Sig::TSTP, "TSTP"},
      {Sig::TTIN, "TTIN"}, {Sig::TTOU, "TTOU"},
  };
  return t;
}

inline const char* signal_name(Sig s) {
  for (auto& [sig, name] : signal_table())
    if (sig == s) return name;
  return "?";
}

inline std::optional<Sig> signal_from_name(const Str& name) {
  Str n = name;
  if (n.rfind("SIG", 0) == 0) n = n.substr(3);
  for (auto& [sig, nm] : signal_table())
    if (n == nm) return sig;
  // numeric
  if (!n.empty() && n.find_first_not_of("0123456789") == Str::npos) {
    int v = std::atoi(n.c_str());
    for (auto& [sig, nm] : signal_table())
      if (static_cast<int>(sig) == v) return sig;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Words and control codes

struct WordElem;
using Word = std::vector<WordElem>;

struct Command;
using CommandPtr = std::shared_ptr<const Command>;

struct Literal {
  Str text;  // nonempty
  // Text spliced in by an expansion (default words of ${x-w} and friends) is
  // field-splittable; user-typed text is not.
  bool generated = false;
};
struct Separator {};  // statically parsed blank run

enum class NullMode { String, UnsetIfNull };
enum class SubSide { Prefix, Suffix };
enum class SubMode { Shortest, Longest };

struct ParameterFormat {
  enum class Kind { Normal, Default, Assign, Error, Alt, Length, Sub };
  Kind kind = Kind::Normal;
  NullMode null_mode = NullMode::String;  // Default/Assign/Error/Alt
  SubSide side = SubSide::Prefix;         // Sub
  SubMode mode = SubMode::Shortest;       // Sub
  Word word;                              // payload word, when the kind has one
};

struct TildeCode { std::optional<Str> user; };   // ~ or ~user
struct ParamCode { Str name; ParameterFormat fmt; };
struct CmdSubstCode { CommandPtr cmd; };
struct ArithCode { Word word; };
struct QuotedCode {
  Word word;
  // Expansion unwraps quoted words one element per step; any_output records
  // whether the region produced anything yet, so `""` yields one empty field
  // while `"$@"` with no parameters yields none.
  bool any_output = false;
};

// Runtime-only control codes: never produced by the parser.
struct AssignCode { Str name; Word word; };                       // ${x=w} in flight
struct ErrorFmtCode { Str name; Word word; };                     // ${x?w} in flight
struct MatchFmtCode { Fields value; SubSide side; SubMode mode; Word word; };
struct CmdSubstRunningCode { CommandPtr cmd; Pid pid; Fd fd; };   // forked, reading
struct CmdWaitCode { CommandPtr cmd; Pid pid; Str captured; };    // read, waiting

using ControlCode =
    std::variant<TildeCode, ParamCode, CmdSubstCode, ArithCode, QuotedCode,
                 AssignCode, ErrorFmtCode, MatchFmtCode, CmdSubstRunningCode,
                 CmdWaitCode>;

struct Control { ControlCode code; };

struct WordElem {
  std::variant<Literal, Separator, Control> v;
};

inline WordElem lit_elem(Str s) { return WordElem{Literal{std::move(s)}}; }
inline WordElem sep_elem() { return WordElem{Separator{}}; }
inline WordElem ctl_elem(ControlCode c) { return WordElem{Control{std::move(c)}}; }

// ---------------------------------------------------------------------------
// Redirections

enum class RedirMode { Write, Clobber, Read, ReadWrite, Append };  // > >| < <> >>
enum class DupDir { Out, In };                                     // >& <&
enum class HereKind { Default, NoExpand };

struct FileRedir { Fd fd; RedirMode mode; Word target; };
struct DupRedir { Fd fd; DupDir dir; Word target; };
// The heredoc body is indirect: the parser fills it in when the body text
// arrives at the newline after the command. Immutable once parsing returns.
struct HereRedir { Fd fd; HereKind kind; std::shared_ptr<Word> body; };

struct Redirection {
  std::variant<FileRedir, DupRedir, HereRedir> v;
};

// Expanded redirections (runtime)
struct EFile { RedirMode mode; Fd fd; Str path; };
struct EDup { DupDir dir; Fd fd; std::optional<Fd> target; };  // nullopt = close
struct EHere { HereKind kind; Fd fd; Str body; };
struct ExpandedRedir { std::variant<EFile, EDup, EHere> v; };

// Saved file-descriptor info for unwinding redirections.
struct SavedFdClose {};
struct SavedFdRestore { Fd from; };  // saved copy at fd >= 10
using SavedFdEntry = std::variant<SavedFdRestore, SavedFdClose>;
using SavedFds = std::map<Fd, SavedFdEntry>;

// ---------------------------------------------------------------------------
// Expansion state machine data

struct ExpansionOptions { bool do_split = true; bool do_glob = true; };
struct WordExpansionOptions {
  bool do_split = true;
  bool in_double_quotes = false;
  bool generated = false;
};

// Expanded words e
struct ExpSep {};
struct ExpSrc { Str text; };        // user-typed: globbable, never split
struct ExpExpTxt { Str text; };     // expansion output: splittable, globbable
struct ExpAt { Fields fields; };    // "$@": one field per positional parameter
struct ExpQuotedStr { Str text; };  // inert to splitting and globbing
struct ExpElem {
  std::variant<ExpSep, ExpSrc, ExpExpTxt, ExpAt, ExpQuotedStr> v;
};
using ExpandedWords = std::vector<ExpElem>;

// Intermediate fields i
struct IFieldSep {};        // boundary introduced by field splitting / "$@"
struct ISep {};             // statically parsed separator
struct IStr { Str text; };  // unquoted text (participates in globbing)
struct IQuotedStr { Str text; };
struct IntermElem {
  std::variant<IFieldSep, ISep, IStr, IQuotedStr> v;
};
using IntermediateFields = std::vector<IntermElem>;

// The seven expansion states.
struct ExpansionState;

struct EsStart { ExpansionOptions eo; Word w; };
struct EsExpand { ExpansionOptions eo; ExpandedWords e; Word w; };
struct EsSplit { ExpansionOptions eo; ExpandedWords e; };
struct EsPath { ExpansionOptions eo; IntermediateFields i; };
struct EsQuote { ExpansionOptions eo; IntermediateFields i; };
struct EsError { Fields f; };
struct EsDone { Fields f; };

struct ExpansionState {
  std::variant<EsStart, EsExpand, EsSplit, EsPath, EsQuote, EsError, EsDone> v;
};

inline ExpansionState es_start(ExpansionOptions eo, Word w) {
  return ExpansionState{EsStart{eo, std::move(w)}};
}
inline bool es_terminal(const ExpansionState& es) {
  return std::holds_alternative<EsError>(es.v) || std::holds_alternative<EsDone>(es.v);
}

// ---------------------------------------------------------------------------
// Commands: source forms

struct CaseBranch {
  std::vector<Word> patterns;
  CommandPtr body;  // null = empty branch
};

struct Simple {
  std::vector<std::pair<Str, Word>> assigns;
  Word words;  // full argument text, separators included; may be empty
  std::vector<Redirection> redirs;
};
struct Pipeline { std::vector<CommandPtr> commands; bool background = false; };
struct Redirected { CommandPtr cmd; std::vector<Redirection> redirs; };
struct Background { CommandPtr cmd; };
struct Subshell { CommandPtr cmd; };
struct Seq { CommandPtr c1, c2; };
struct And { CommandPtr c1, c2; };
struct Or { CommandPtr c1, c2; };
struct Not { CommandPtr cmd; };
struct While { CommandPtr cond, body; };
struct For { Str var; Word words; CommandPtr body; };
struct If { CommandPtr cond, then_cmd, else_cmd; };  // else_cmd may be null
struct Case { Word scrutinee; std::vector<CaseBranch> branches; };
struct FnDef { Str name; CommandPtr body; };

// ---------------------------------------------------------------------------
// Commands: runtime forms (never produced by the parser)

struct CommandOptions {
  bool did_cmd_subst = false;   // b_subst: monotone within a simple command
  bool may_fork = true;         // b_fork
  bool simple_invocation = false;  // b_simple: set by the `command` builtin
};

struct RedirState {
  std::vector<ExpandedRedir> done;
  struct InProgress { Redirection r; ExpansionState es; };
  std::optional<InProgress> in_progress;
  std::vector<Redirection> todo;
};

using EnvFrag = std::vector<std::pair<Str, Str>>;  // insertion order kept

struct CmdArgs {
  std::vector<std::pair<Str, Word>> assigns;
  ExpansionState es;
  std::vector<Redirection> redirs;
  CommandOptions co;
};
struct CmdRedirs {
  std::vector<std::pair<Str, Word>> assigns;
  Fields fields;
  RedirState rs;
  CommandOptions co;
};
struct CmdAssigns {
  std::vector<std::pair<Str, ExpansionState>> pending;
  EnvFrag done_assigns;  // completed assignments, in source order (for xtrace)
  Fields fields;
  SavedFds sfds;
  CommandOptions co;
};
struct CmdReady { EnvFrag env; Str name; Fields args; SavedFds sfds; CommandOptions co; };
struct Run { EnvFrag env; Str name; Fields args; SavedFds sfds; CommandOptions co; };

struct WhileCond { CommandPtr orig, cur, body; int last_body_status = 0; };
struct WhileBody { CommandPtr cond, body, cur; int last_body_status = 0; };
struct ForArgs { Str var; ExpansionState es; CommandPtr body; };
struct ForStart { Str var; Fields fields; CommandPtr body; };
struct ForRunning { Str var; Fields remaining; CommandPtr body, cur; };
struct CaseArg { ExpansionState es; std::vector<CaseBranch> branches; };
struct CaseMatch { Str scrutinee; std::vector<CaseBranch> branches; };
struct CaseCheck {
  Str scrutinee;
  std::vector<Word> patterns;  // remaining patterns of the current branch
  CommandPtr body;
  std::vector<CaseBranch> rest;
};
struct CallFrame {
  int saved_loop_depth;
  Fields saved_positional;
  Str fn_name;
  CommandPtr orig, cur;
};
struct BreakCmd { int n; };
struct ContinueCmd { int n; };
struct ReturnCmd {};
struct ExitCmd {};
struct DoneCmd {};
struct RedirsFrame { CommandPtr cur; SavedFds sfds; };
struct RedirWrap { CommandPtr inner; RedirState rs; };  // compound `c r+` expanding

enum class EvalLoopKind { TopLevel, Dot, EvalStr };
struct EvalLoop {
  int lineno = 1;
  std::shared_ptr<ParseSession> pctx;
  Str source_name;
  bool interactive = false;
  bool toplevel = false;
  EvalLoopKind kind = EvalLoopKind::EvalStr;
  // special-builtin severity: a syntax error aborts a non-interactive shell
  // unless the loop was started via `command eval`/`command .`
  bool exit_on_error = true;
};
struct EvalLoopCmd { EvalLoop loop; CommandPtr cur; };

struct ExecCmd {
  Str path;
  Str name;
  Fields args;
  std::map<Str, Str> env;
  bool fallback_as_script = true;  // b_/bin/sh: run as script on ENOEXEC
};
struct WaitCmd { Pid pid; bool checked; bool for_cmd; };
struct Trapped { Sig sig; int saved_status; CommandPtr handler, cont; };

struct Command {
  std::variant<Simple, Pipeline, Redirected, Background, Subshell, Seq, And, Or,
               Not, While, For, If, Case, FnDef,
               // runtime forms
               CmdArgs, CmdRedirs, CmdAssigns, CmdReady, Run, WhileCond,
               WhileBody, ForArgs, ForStart, ForRunning, CaseArg, CaseMatch,
               CaseCheck, CallFrame, BreakCmd, ContinueCmd, ReturnCmd, ExitCmd,
               DoneCmd, RedirsFrame, RedirWrap, EvalLoop, EvalLoopCmd, ExecCmd,
               WaitCmd, Trapped>
      v;
};

template <typename T>
CommandPtr mk(T&& form) {
  return std::make_shared<const Command>(Command{std::forward<T>(form)});
}

template <typename T>
const T* as(const CommandPtr& c) {
  return c ? std::get_if<T>(&c->v) : nullptr;
}

inline bool is_done(const CommandPtr& c) { return as<DoneCmd>(c) != nullptr; }
inline bool is_exit(const CommandPtr& c) { return as<ExitCmd>(c) != nullptr; }

// Control forms that propagate through enclosing frames (paper rule NotCtrl).
inline bool is_control(const CommandPtr& c) {
  return as<BreakCmd>(c) || as<ContinueCmd>(c) || as<ReturnCmd>(c) || as<ExitCmd>(c);
}
inline bool is_terminal(const CommandPtr& c) { return is_done(c) || is_exit(c); }

// ---------------------------------------------------------------------------
// Rendering
//
// Source forms render to reparseable concrete syntax; runtime forms render to
// a bracketed diagnostic notation and are never reparsed.

namespace detail {

// Bytes that may appear raw in a rendered literal. Glob characters stay raw
// on purpose: they were unquoted in the source word, and quoting them would
// change both the reparsed AST and the globbing behavior.
inline bool literal_is_plain(const Str& s) {
  if (s.empty()) return false;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c >= 0x80) continue;
    switch (c) {
      case '_': case '-': case '.': case '/': case ':': case '+': case ',':
      case '@': case '%': case '^': case '=': case '*': case '?': case '[':
      case ']': case '!': case '{': case '}': case '~': case '#':
        continue;
      default:
        return false;
    }
  }
  return true;
}

inline Str squote(const Str& s) {
  Str out = "'";
  for (char c : s) {
    if (c == '\'')
      out += "'\\''";
    else
      out += c;
  }
  out += "'";
  return out;
}

struct HereDocPending { Str delim; Str body; bool quoted_delim; };

struct RenderCtx {
  std::vector<HereDocPending> heredocs;
  int next_delim = 0;
};

}  // namespace detail

Str render(const CommandPtr& c);
Str render_word(const Word& w);
Str render_expansion_state(const ExpansionState& es);

namespace detail {

Str render_word_in(const Word& w, RenderCtx& ctx, bool in_dquotes);
Str render_cmd(const CommandPtr& c, RenderCtx& ctx);

inline Str render_param(const ParamCode& p, RenderCtx& ctx) {
  const ParameterFormat& f = p.fmt;
  using K = ParameterFormat::Kind;
  Str colon = f.null_mode == NullMode::UnsetIfNull ? ":" : "";
  switch (f.kind) {
    case K::Normal: return "${" + p.name + "}";
    case K::Length: return "${#" + p.name + "}";
    case K::Default: return "${" + p.name + colon + "-" + render_word_in(f.word, ctx, false) + "}";
    case K::Assign: return "${" + p.name + colon + "=" + render_word_in(f.word, ctx, false) + "}";
    case K::Error: return "${" + p.name + colon + "?" + render_word_in(f.word, ctx, false) + "}";
    case K::Alt: return "${" + p.name + colon + "+" + render_word_in(f.word, ctx, false) + "}";
    case K::Sub: {
      Str op = f.side == SubSide::Prefix ? "#" : "%";
      if (f.mode == SubMode::Longest) op += op;
      return "${" + p.name + op + render_word_in(f.word, ctx, false) + "}";
    }
  }
  return "${" + p.name + "}";
}

inline Str render_control(const ControlCode& k, RenderCtx& ctx, bool in_dquotes) {
  struct V {
    RenderCtx& ctx;
    bool dq;
    Str operator()(const TildeCode& t) const { return "~" + t.user.value_or(""); }
    Str operator()(const ParamCode& p) const { return render_param(p, ctx); }
    Str operator()(const CmdSubstCode& c) const { return "$(" + render_cmd(c.cmd, ctx) + ")"; }
    Str operator()(const ArithCode& a) const { return "$((" + render_word_in(a.word, ctx, true) + "))"; }
    Str operator()(const QuotedCode& q) const {
      // single-quote when purely literal, else double-quote
      bool all_lit = true;
      for (auto& e : q.word)
        if (!std::holds_alternative<Literal>(e.v)) all_lit = false;
      if (all_lit) {
        Str text;
        for (auto& e : q.word) text += std::get<Literal>(e.v).text;
        return squote(text);
      }
      return "\"" + render_word_in(q.word, ctx, true) + "\"";
    }
    Str operator()(const AssignCode& a) const {
      return "\xe2\x9f\xa8" "assign " + a.name + " " + render_word_in(a.word, ctx, false) + "\xe2\x9f\xa9";
    }
    Str operator()(const ErrorFmtCode& e) const {
      return "\xe2\x9f\xa8" "error " + e.name + " " + render_word_in(e.word, ctx, false) + "\xe2\x9f\xa9";
    }
    Str operator()(const MatchFmtCode& m) const {
      Str out = "\xe2\x9f\xa8" "match";
      for (auto& f : m.value) out += " " + f;
      out += m.side == SubSide::Prefix ? " prefix" : " suffix";
      out += m.mode == SubMode::Shortest ? " shortest " : " longest ";
      out += render_word_in(m.word, ctx, false);
      return out + "\xe2\x9f\xa9";
    }
    Str operator()(const CmdSubstRunningCode& c) const {
      return "\xe2\x9f\xa8" "cmdsubst " + render_cmd(c.cmd, ctx) + " pid=" +
             std::to_string(c.pid) + " fd=" + std::to_string(c.fd) + "\xe2\x9f\xa9";
    }
    Str operator()(const CmdWaitCode& c) const {
      return "\xe2\x9f\xa8" "cmdwait " + render_cmd(c.cmd, ctx) + " pid=" +
             std::to_string(c.pid) + " " + squote(c.captured) + "\xe2\x9f\xa9";
    }
  };
  return std::visit(V{ctx, in_dquotes}, k);
}

inline Str render_word_in(const Word& w, RenderCtx& ctx, bool in_dquotes) {
  Str out;
  for (auto& e : w) {
    if (auto* l = std::get_if<Literal>(&e.v)) {
      if (in_dquotes) {
        for (char c : l->text) {
          if (c == '"' || c == '$' || c == '`' || c == '\\') out += '\\';
          out += c;
        }
      } else if (literal_is_plain(l->text)) {
        out += l->text;
      } else {
        out += squote(l->text);
      }
    } else if (std::holds_alternative<Separator>(e.v)) {
      out += ' ';
    } else {
      out += render_control(std::get<Control>(e.v).code, ctx, in_dquotes);
    }
  }
  return out;
}

inline Str render_redir(const Redirection& r, RenderCtx& ctx) {
  struct V {
    RenderCtx& ctx;
    Str operator()(const FileRedir& f) const {
      Str op;
      switch (f.mode) {
        case RedirMode::Write: op = ">"; break;
        case RedirMode::Clobber: op = ">|"; break;
        case RedirMode::Read: op = "<"; break;
        case RedirMode::ReadWrite: op = "<>"; break;
        case RedirMode::Append: op = ">>"; break;
      }
      bool dfl = (op[0] == '<' && f.fd == 0) || (op[0] == '>' && f.fd == 1);
      return (dfl ? Str() : std::to_string(f.fd)) + op + render_word_in(f.target, ctx, false);
    }
    Str operator()(const DupRedir& d) const {
      Str op = d.dir == DupDir::Out ? ">&" : "<&";
      bool dfl = (d.dir == DupDir::In && d.fd == 0) || (d.dir == DupDir::Out && d.fd == 1);
      return (dfl ? Str() : std::to_string(d.fd)) + op + render_word_in(d.target, ctx, false);
    }
    Str operator()(const HereRedir& h) const {
      Str delim = "SMOLSH_HD" + std::to_string(ctx.next_delim++);
      Str body;
      if (h.body) {
        if (h.kind == HereKind::NoExpand) {
          for (auto& e : *h.body)
            if (auto* l = std::get_if<Literal>(&e.v)) body += l->text;
        } else {
          // heredoc-body escaping: only $ ` \ are special
          RenderCtx sub;
          for (auto& e : *h.body) {
            if (auto* l = std::get_if<Literal>(&e.v)) {
              for (char c : l->text) {
                if (c == '$' || c == '`' || c == '\\') body += '\\';
                body += c;
              }
            } else if (auto* k = std::get_if<Control>(&e.v)) {
              body += render_control(k->code, sub, true);
            }
          }
        }
      }
      if (!body.empty() && body.back() != '\n') body += '\n';
      ctx.heredocs.push_back({delim, body, h.kind == HereKind::NoExpand});
      Str op = (h.fd == 0 ? Str("<<") : std::to_string(h.fd) + "<<");
      return op + (h.kind == HereKind::NoExpand ? "'" + delim + "'" : delim);
    }
  };
  return std::visit(V{ctx}, r.v);
}

// Wrap a command in braces when used as an operand needing a single unit.
inline Str render_operand(const CommandPtr& c, RenderCtx& ctx) {
  bool needs_group = as<Seq>(c) || as<And>(c) || as<Or>(c) || as<Background>(c);
  Str s = render_cmd(c, ctx);
  if (needs_group) return "{ " + s + "; }";
  return s;
}

inline Str render_expanded_words(const ExpandedWords& e);
inline Str render_interm(const IntermediateFields& i);

inline Str render_cmd(const CommandPtr& c, RenderCtx& ctx) {
  if (!c) return "";
  struct V {
    RenderCtx& ctx;
    Str operator()(const Simple& s) const {
      Str out;
      for (auto& [n, w] : s.assigns) {
        if (!out.empty()) out += ' ';
        out += n + "=" + render_word_in(w, ctx, false);
      }
      Str words = render_word_in(s.words, ctx, false);
      if (!words.empty()) {
        if (!out.empty()) out += ' ';
        out += words;
      }
      for (auto& r : s.redirs) {
        if (!out.empty()) out += ' ';
        out += render_redir(r, ctx);
      }
      return out;
    }
    Str operator()(const Pipeline& p) const {
      Str out;
      for (size_t i = 0; i < p.commands.size(); i++) {
        if (i) out += " | ";
        out += render_operand(p.commands[i], ctx);
      }
      if (p.background) out += " &";
      return out;
    }
    Str operator()(const Redirected& r) const {
      Str out = render_operand(r.cmd, ctx);
      bool compound = !as<Simple>(r.cmd);
      if (compound && out.rfind("{ ", 0) != 0 && !as<Subshell>(r.cmd))
        out = "{ " + out + "; }";
      for (auto& rr : r.redirs) out += " " + render_redir(rr, ctx);
      return out;
    }
    Str operator()(const Background& b) const { return render_operand(b.cmd, ctx) + " &"; }
    Str operator()(const Subshell& s) const { return "(" + render_cmd(s.cmd, ctx) + ")"; }
    Str operator()(const Seq& s) const {
      return render_cmd(s.c1, ctx) + "; " + render_cmd(s.c2, ctx);
    }
    Str operator()(const And& a) const {
      return render_operand(a.c1, ctx) + " && " + render_operand(a.c2, ctx);
    }
    Str operator()(const Or& o) const {
      return render_operand(o.c1, ctx) + " || " + render_operand(o.c2, ctx);
    }
    Str operator()(const Not& n) const { return "! " + render_operand(n.cmd, ctx); }
    Str operator()(const While& w) const {
      return "while " + render_cmd(w.cond, ctx) + "; do " + render_cmd(w.body, ctx) + "; done";
    }
    Str operator()(const For& f) const {
      return "for " + f.var + " in " + render_word_in(f.words, ctx, false) + "; do " +
             render_cmd(f.body, ctx) + "; done";
    }
    Str operator()(const If& i) const {
      Str out = "if " + render_cmd(i.cond, ctx) + "; then " + render_cmd(i.then_cmd, ctx);
      if (i.else_cmd) out += "; else " + render_cmd(i.else_cmd, ctx);
      return out + "; fi";
    }
    Str operator()(const Case& cs) const {
      Str out = "case " + render_word_in(cs.scrutinee, ctx, false) + " in ";
      for (auto& b : cs.branches) {
        out += "(";
        for (size_t i = 0; i < b.patterns.size(); i++) {
          if (i) out += "|";
          out += render_word_in(b.patterns[i], ctx, false);
        }
        out += ") " + (b.body ? render_cmd(b.body, ctx) : Str()) + ";; ";
      }
      return out + "esac";
    }
    Str operator()(const FnDef& f) const {
      Str body = render_cmd(f.body, ctx);
      if (as<Subshell>(f.body)) return f.name + "() " + body;
      return f.name + "() { " + body + "; }";
    }
    // runtime forms: diagnostic notation
    Str operator()(const CmdArgs& c) const {
      return "\xe2\x9f\xa8" "cmd_args " + render_expansion_state(c.es) + "\xe2\x9f\xa9";
    }
    Str operator()(const CmdRedirs& c) const {
      Str s = "\xe2\x9f\xa8" "cmd_redirs";
      for (auto& f : c.fields) s += " " + f;
      if (c.rs.in_progress) s += " | " + render_expansion_state(c.rs.in_progress->es);
      return s + "\xe2\x9f\xa9";
    }
    Str operator()(const CmdAssigns& c) const {
      Str s = "\xe2\x9f\xa8" "cmd_assigns";
      for (auto& [n, es] : c.pending) s += " " + n + "=" + render_expansion_state(es);
      for (auto& f : c.fields) s += " " + f;
      return s + "\xe2\x9f\xa9";
    }
    Str operator()(const CmdReady& c) const {
      Str s = "\xe2\x9f\xa8" "cmd_ready " + c.name;
      for (auto& a : c.args) s += " " + a;
      return s + "\xe2\x9f\xa9";
    }
    Str operator()(const Run& c) const {
      Str s = "\xe2\x9f\xa8" "run " + c.name;
      for (auto& a : c.args) s += " " + a;
      return s + "\xe2\x9f\xa9";
    }
    Str operator()(const WhileCond& w) const {
      return "\xe2\x9f\xa8" "while_cond " + render_cmd(w.cur, ctx) + "\xe2\x9f\xa9";
    }
    Str operator()(const WhileBody& w) const {
      return "\xe2\x9f\xa8" "while_body " + render_cmd(w.cur, ctx) + "\xe2\x9f\xa9";
    }
    Str operator()(const ForArgs& f) const {
      return "\xe2\x9f\xa8" "for_args " + f.var + " " + render_expansion_state(f.es) + "\xe2\x9f\xa9";
    }
    Str operator()(const ForStart& f) const {
      Str s = "\xe2\x9f\xa8" "for_start " + f.var;
      for (auto& x : f.fields) s += " " + x;
      return s + "\xe2\x9f\xa9";
    }
    Str operator()(const ForRunning& f) const {
      return "\xe2\x9f\xa8" "for_running " + f.var + " " + render_cmd(f.cur, ctx) + "\xe2\x9f\xa9";
    }
    Str operator()(const CaseArg& c) const {
      return "\xe2\x9f\xa8" "case_arg " + render_expansion_state(c.es) + "\xe2\x9f\xa9";
    }
    Str operator()(const CaseMatch& c) const {
      return "\xe2\x9f\xa8" "case_match " + c.scrutinee + "\xe2\x9f\xa9";
    }
    Str operator()(const CaseCheck& c) const {
      return "\xe2\x9f\xa8" "case_check " + c.scrutinee + "\xe2\x9f\xa9";
    }
    Str operator()(const CallFrame& c) const {
      return "\xe2\x9f\xa8" "call " + c.fn_name + " " + render_cmd(c.cur, ctx) + "\xe2\x9f\xa9";
    }
    Str operator()(const BreakCmd& b) const {
      return "\xe2\x9f\xa8" "break " + std::to_string(b.n) + "\xe2\x9f\xa9";
    }
    Str operator()(const ContinueCmd& b) const {
      return "\xe2\x9f\xa8" "continue " + std::to_string(b.n) + "\xe2\x9f\xa9";
    }
    Str operator()(const ReturnCmd&) const { return "\xe2\x9f\xa8" "return" "\xe2\x9f\xa9"; }
    Str operator()(const ExitCmd&) const { return "\xe2\x9f\xa8" "exit\xe2\x9f\xa9"; }
    Str operator()(const DoneCmd&) const { return "\xe2\x9f\xa8" "done\xe2\x9f\xa9"; }
    Str operator()(const RedirsFrame& r) const {
      return "\xe2\x9f\xa8" "redirs " + render_cmd(r.cur, ctx) + "\xe2\x9f\xa9";
    }
    Str operator()(const RedirWrap& r) const {
      return "\xe2\x9f\xa8" "redir_exp " + render_cmd(r.inner, ctx) + "\xe2\x9f\xa9";
    }
    Str operator()(const EvalLoop& e) const {
      return "\xe2\x9f\xa8" "eval_loop " + e.source_name + ":" + std::to_string(e.lineno) + "\xe2\x9f\xa9";
    }
    Str operator()(const EvalLoopCmd& e) const {
      return "\xe2\x9f\xa8" "eval_loop_cmd " + render_cmd(e.cur, ctx) + "\xe2\x9f\xa9";
    }
    Str operator()(const ExecCmd& e) const {
      Str s = "\xe2\x9f\xa8" "external exec: " + e.name;
      for (auto& a : e.args) s += " " + a;
      return s + "\xe2\x9f\xa9";
    }
    Str operator()(const WaitCmd& w) const {
      return "\xe2\x9f\xa8" "wait pid=" + std::to_string(w.pid) + "\xe2\x9f\xa9";
    }
    Str operator()(const Trapped& t) const {
      return "\xe2\x9f\xa8" "trapped " + Str(signal_name(t.sig)) + " " +
             render_cmd(t.handler, ctx) + "\xe2\x9f\xa9";
    }
  };
  return std::visit(V{ctx}, c->v);
}

inline Str render_expanded_words(const ExpandedWords& e) {
  Str out;
  for (auto& el : e) {
    if (!out.empty()) out += ' ';
    struct V {
      Str operator()(const ExpSep&) const { return "\xe2\x90\xa3"; }  // ␣
      Str operator()(const ExpSrc& s) const { return "src:" + s.text; }
      Str operator()(const ExpExpTxt& s) const { return "exp:" + s.text; }
      Str operator()(const ExpAt& a) const {
        Str s = "@[";
        for (size_t i = 0; i < a.fields.size(); i++) s += (i ? "," : "") + a.fields[i];
        return s + "]";
      }
      Str operator()(const ExpQuotedStr& s) const { return "\"" + s.text + "\""; }
    };
    out += std::visit(V{}, el.v);
  }
  return out;
}

inline Str render_interm(const IntermediateFields& i) {
  Str out;
  for (auto& el : i) {
    if (!out.empty()) out += ' ';
    struct V {
      Str operator()(const IFieldSep&) const { return "\xc2\xb7"; }  // ·
      Str operator()(const ISep&) const { return "\xe2\x90\xa3"; }
      Str operator()(const IStr& s) const { return s.text; }
      Str operator()(const IQuotedStr& s) const { return "\"" + s.text + "\""; }
    };
    out += std::visit(V{}, el.v);
  }
  return out;
}

}  // namespace detail

inline Str render_word(const Word& w) {
  detail::RenderCtx ctx;
  return detail::render_word_in(w, ctx, false);
}

inline Str render_expansion_state(const ExpansionState& es) {
  struct V {
    Str operator()(const EsStart& s) const {
      detail::RenderCtx c;
      return "\xe2\x9f\xa8" "start " + detail::render_word_in(s.w, c, false) + "\xe2\x9f\xa9";
    }
    Str operator()(const EsExpand& s) const {
      detail::RenderCtx c;
      return "\xe2\x9f\xa8" "expand " + detail::render_expanded_words(s.e) + " | " +
             detail::render_word_in(s.w, c, false) + "\xe2\x9f\xa9";
    }
    Str operator()(const EsSplit& s) const {
      return "\xe2\x9f\xa8" "split " + detail::render_expanded_words(s.e) + "\xe2\x9f\xa9";
    }
    Str operator()(const EsPath& s) const {
      return "\xe2\x9f\xa8" "path " + detail::render_interm(s.i) + "\xe2\x9f\xa9";
    }
    Str operator()(const EsQuote& s) const {
      return "\xe2\x9f\xa8" "quote " + detail::render_interm(s.i) + "\xe2\x9f\xa9";
    }
    Str operator()(const EsError& s) const {
      Str out = "\xe2\x9f\xa8" "error";
      for (auto& f : s.f) out += " " + f;
      return out + "\xe2\x9f\xa9";
    }
    Str operator()(const EsDone& s) const {
      Str out = "\xe2\x9f\xa8" "done";
      for (auto& f : s.f) out += " " + f;
      return out + "\xe2\x9f\xa9";
    }
  };
  return std::visit(V{}, es.v);
}

// Renders a command; heredoc bodies are flushed after the command text, so the
// output reparses to the identical AST.
inline Str render(const CommandPtr& c) {
  detail::RenderCtx ctx;
  Str out = detail::render_cmd(c, ctx);
  if (!ctx.heredocs.empty()) {
    out += "\n";
    for (auto& h : ctx.heredocs) out += h.body + h.delim + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Trace records
//
// One self-contained JSON record per step:
//   {"n":int,"phase":"expand"|"eval","rule":string,"term":string,
//    "env_delta":{name:string|null},"stdout":string,"stderr":string}
// env_delta is omitted when empty. Key order is fixed; emission is by hand so
// the byte stream is deterministic.

namespace jsonw {

inline Str escape(const Str& s) {
  Str out;
  out.reserve(s.size() + 2);
  for (unsigned char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      case '\b': out += "\\b"; break;
      case '\f': out += "\\f"; break;
      default:
        if (c < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", c);
          out += buf;
        } else {
          out += static_cast<char>(c);
        }
    }
  }
  return out;
}

inline Str str(const Str& s) { return "\"" + escape(s) + "\""; }

}  // namespace jsonw

// Delta of the visible global environment over one step: name -> new value,
// or nullopt when the name was removed.
using EnvDelta = std::map<Str, std::optional<Str>>;

inline Str to_trace_json(int step_no, const Str& phase, const Str& rule_name,
                         const EnvDelta& env_delta, const Str& term,
                         const Str& out_delta, const Str& err_delta) {
  Str j = "{\"n\":" + std::to_string(step_no);
  j += ",\"phase\":" + jsonw::str(phase);
  j += ",\"rule\":" + jsonw::str(rule_name);
  j += ",\"term\":" + jsonw::str(term);
  if (!env_delta.empty()) {
    j += ",\"env_delta\":{";
    bool first = true;
    for (auto& [k, v] : env_delta) {
      if (!first) j += ",";
      first = false;
      j += jsonw::str(k) + ":" + (v ? jsonw::str(*v) : Str("null"));
    }
    j += "}";
  }
  j += ",\"stdout\":" + jsonw::str(out_delta);
  j += ",\"stderr\":" + jsonw::str(err_delta);
  return j + "}";
}

}  // namespace smolsh

#endif  // SMOLSH_AST_HPP
