// expansion.hpp: the word-expansion state machine
//   start -> expand -> (split) -> path -> quote -> done | error
// including tilde, parameter formats, command substitution scaffolding,
// arithmetic hand-off, field splitting, globbing, and quote removal.

#ifndef SMOLSH_EXPANSION_HPP
#define SMOLSH_EXPANSION_HPP

#include "smolsh/arith.hpp"
#include "smolsh/os.hpp"
#include "smolsh/pattern.hpp"

namespace smolsh {

inline Str trim_rnl(Str s) {
  while (!s.empty() && s.back() == '\n') s.pop_back();
  return s;
}

inline Str to_string_fields(const Fields& f) {
  Str out;
  for (size_t i = 0; i < f.size(); i++) out += (i ? " " : "") + f[i];
  return out;
}

// ---------------------------------------------------------------------------
// Conversions between the word-expansion representations

inline void append_at_interm(IntermediateFields& out, const Fields& fields) {
  for (size_t i = 0; i < fields.size(); i++) {
    if (i) out.push_back({IFieldSep{}});
    out.push_back({IQuotedStr{fields[i]}});
  }
}

// Structure-preserving conversion, no IFS splitting.
inline IntermediateFields skip_splitting(const ExpandedWords& e) {
  IntermediateFields out;
  for (auto& el : e) {
    struct V {
      IntermediateFields& out;
      void operator()(const ExpSep&) const { out.push_back({ISep{}}); }
      void operator()(const ExpSrc& s) const { out.push_back({IStr{s.text}}); }
      void operator()(const ExpExpTxt& s) const {
        if (!s.text.empty()) out.push_back({IStr{s.text}});
      }
      void operator()(const ExpAt& a) const { append_at_interm(out, a.fields); }
      void operator()(const ExpQuotedStr& s) const { out.push_back({IQuotedStr{s.text}}); }
    };
    std::visit(V{out}, el.v);
  }
  return out;
}

// Erases quoting structure keeping content. An empty quoted string stays
// marked: it is what keeps `""` alive as a field through combine_fields.
inline IntermediateFields remove_quotes(const IntermediateFields& i) {
  IntermediateFields out;
  for (auto& el : i) {
    if (auto* q = std::get_if<IQuotedStr>(&el.v)) {
      if (q->text.empty())
        out.push_back(el);  // survival marker
      else
        out.push_back({IStr{q->text}});
    } else {
      out.push_back(el);
    }
  }
  return out;
}

// Conjoins adjacent content between separators into final fields. A field
// materializes when it has content, carries a quoted-empty marker, or is
// terminated by a field separator introduced by splitting (empty fields from
// non-whitespace IFS delimiters survive; whitespace runs never create them).
inline Fields combine_fields(const IntermediateFields& i) {
  Fields out;
  Str cur;
  bool has_mark = false;
  auto flush = [&](bool hard) {
    if (!cur.empty() || has_mark || hard) out.push_back(cur);
    cur.clear();
    has_mark = false;
  };
  for (auto& el : i) {
    if (std::holds_alternative<IFieldSep>(el.v)) flush(true);
    else if (std::holds_alternative<ISep>(el.v)) flush(false);
    else if (auto* s = std::get_if<IStr>(&el.v)) cur += s->text;
    else if (auto* q = std::get_if<IQuotedStr>(&el.v)) {
      cur += q->text;
      has_mark = true;
    }
  }
  if (!cur.empty() || has_mark) out.push_back(cur);
  return out;
}

// Quote removal plus concatenation; used for error payloads and for contexts
// that need the fields of already-expanded words without splitting.
inline Fields to_fields(const ExpandedWords& e) {
  return combine_fields(remove_quotes(skip_splitting(e)));
}

// ---------------------------------------------------------------------------
// Field splitting

inline Str ifs_value(const ShellState& st) {
  auto v = lookup(st, "IFS");
  return v ? *v : Str(" \t\n");
}

inline bool ifs_ws(char c, const Str& ifs) {
  return (c == ' ' || c == '\t' || c == '\n') && ifs.find(c) != Str::npos;
}
inline bool ifs_nonws(char c, const Str& ifs) {
  return ifs.find(c) != Str::npos && !(c == ' ' || c == '\t' || c == '\n');
}

// Splits only expansion output on IFS; whitespace runs collapse, each
// non-whitespace IFS byte (with adjacent IFS whitespace) delimits a field
// that may be empty.
inline IntermediateFields field_split(const ShellState& st, const ExpandedWords& e) {
  Str ifs = ifs_value(st);
  IntermediateFields out;
  for (auto& el : e) {
    struct V {
      IntermediateFields& out;
      const Str& ifs;
      void operator()(const ExpSep&) const { out.push_back({ISep{}}); }
      void operator()(const ExpSrc& s) const { out.push_back({IStr{s.text}}); }
      void operator()(const ExpQuotedStr& s) const {
        out.push_back({IQuotedStr{s.text}});
      }
      void operator()(const ExpAt& a) const { append_at_interm(out, a.fields); }
      void operator()(const ExpExpTxt& sElem) const {
        const Str& s = sElem.text;
        size_t i = 0, n = s.size();
        while (i < n) {
          char c = s[i];
          if (ifs_ws(c, ifs)) {
            size_t j = i;
            while (j < n && ifs_ws(s[j], ifs)) j++;
            if (j < n && ifs_nonws(s[j], ifs)) {
              j++;
              while (j < n && ifs_ws(s[j], ifs)) j++;
              out.push_back({IFieldSep{}});
            } else {
              out.push_back({ISep{}});
            }
            i = j;
          } else if (ifs_nonws(c, ifs)) {
            size_t j = i + 1;
            while (j < n && ifs_ws(s[j], ifs)) j++;
            out.push_back({IFieldSep{}});
            i = j;
          } else {
            size_t j = i;
            while (j < n && ifs.find(s[j]) == Str::npos) j++;
            out.push_back({IStr{s.substr(i, j - i)}});
            i = j;
          }
        }
      }
    };
    std::visit(V{out, ifs}, el.v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pathname expansion

// In this representation glob-escaping is structural (quoted text is marked,
// not backslashed), so removing escape marks is the identity; quote removal
// later erases the structure.
inline IntermediateFields unescape(const IntermediateFields& i) { return i; }

namespace expansion_detail {

struct GlobComponent {
  MarkedStr marked;
  bool wild = false;
};

inline std::vector<GlobComponent> split_pattern(const MarkedStr& m, bool& absolute,
                                                bool& dir_only) {
  std::vector<GlobComponent> comps;
  MarkedStr cur;
  absolute = !m.empty() && m[0].b == '/';
  dir_only = false;
  for (auto& qb : m) {
    if (qb.b == '/') {
      if (!cur.empty()) {
        comps.push_back({cur, has_glob_chars(cur)});
        cur.clear();
      }
    } else {
      cur.push_back(qb);
    }
  }
  if (!cur.empty())
    comps.push_back({cur, has_glob_chars(cur)});
  else if (!comps.empty())
    dir_only = true;
  return comps;
}

inline std::vector<Str> glob_walk(const ShellState& st, OsInterface& os,
                                  const MarkedStr& m) {
  bool absolute = false, dir_only = false;
  auto comps = split_pattern(m, absolute, dir_only);
  // candidate paths; "" means the pattern root (cwd or /)
  std::vector<Str> cands = {absolute ? Str("/") : Str()};
  for (size_t ci = 0; ci < comps.size(); ci++) {
    const GlobComponent& comp = comps[ci];
    std::vector<Str> next;
    for (auto& cand : cands) {
      Str dir_path = cand.empty() ? st.cwd : (cand == "/" ? cand : join_path(st.cwd, cand));
      if (!cand.empty() && cand[0] == '/') dir_path = cand == "/" ? "/" : cand;
      auto prefix = [&](const Str& name) {
        if (cand.empty()) return name;
        if (cand == "/") return "/" + name;
        return cand + "/" + name;
      };
      if (!comp.wild) {
        Str name = unmark(comp.marked);
        Str full = prefix(name);
        Str abs_full = full[0] == '/' ? full : join_path(st.cwd, full);
        if (os.file_exists(abs_full) || os.stat_path(abs_full, false)) next.push_back(full);
        continue;
      }
      auto listing = os.list_dir(dir_path);
      if (!listing.ok()) continue;  // unreadable: zero matches, no error
      CompiledPattern pat = compile(comp.marked);
      std::vector<Str> names;
      names.push_back(".");
      names.push_back("..");
      for (auto& nm : *listing) names.push_back(nm);
      std::sort(names.begin(), names.end());
      for (auto& name : names) {
        if (!match_filename(pat, name)) continue;
        next.push_back(prefix(name));
      }
    }
    // non-final components must be directories
    bool is_last = ci + 1 == comps.size();
    if (!is_last || dir_only) {
      std::vector<Str> dirs;
      for (auto& p : next) {
        Str abs_p = p[0] == '/' ? p : join_path(st.cwd, p);
        auto info = os.stat_path(abs_p, true);
        if (info && info->kind == FileKind::Directory) dirs.push_back(p);
      }
      next = dirs;
    }
    cands = std::move(next);
    if (cands.empty()) break;
  }
  if (dir_only)
    for (auto& c : cands) c += "/";
  std::sort(cands.begin(), cands.end());
  cands.erase(std::unique(cands.begin(), cands.end()), cands.end());
  return cands;
}

}  // namespace expansion_detail

// Expands globs per candidate field; zero matches leave the field as its
// literal text; entries starting with '.' require an explicit leading dot.
inline IntermediateFields pathname_expand(const ShellState& st, OsInterface& os,
                                          const IntermediateFields& i) {
  IntermediateFields out;
  size_t k = 0;
  while (k < i.size()) {
    if (std::holds_alternative<ISep>(i[k].v) ||
        std::holds_alternative<IFieldSep>(i[k].v)) {
      out.push_back(i[k]);
      k++;
      continue;
    }
    // gather one run
    size_t end = k;
    MarkedStr marked;
    while (end < i.size()) {
      if (auto* s = std::get_if<IStr>(&i[end].v)) {
        auto mm = mark(s->text, false);
        marked.insert(marked.end(), mm.begin(), mm.end());
      } else if (auto* q = std::get_if<IQuotedStr>(&i[end].v)) {
        auto mm = mark(q->text, true);
        marked.insert(marked.end(), mm.begin(), mm.end());
      } else {
        break;
      }
      end++;
    }
    if (!has_glob_chars(marked)) {
      for (size_t j = k; j < end; j++) out.push_back(i[j]);
    } else {
      auto matches = expansion_detail::glob_walk(st, os, marked);
      if (matches.empty()) {
        for (size_t j = k; j < end; j++) out.push_back(i[j]);
      } else {
        for (size_t j = 0; j < matches.size(); j++) {
          if (j) out.push_back({IFieldSep{}});
          out.push_back({IStr{matches[j]}});
        }
      }
    }
    k = end;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Initial word expansion (the expand state) and control codes

struct ExpStep {
  const char* rule = "";
  bool did_cmd_subst = false;
};

struct ControlOutcome {
  bool ok = true;
  ExpandedWords frag;   // appended to e
  Word extra_words;     // spliced in front of the remaining word
  Fields error_fields;  // when !ok
  const char* rule = "EWCtrl";
  bool did_cmd_subst = false;
};

namespace expansion_detail {

inline void mark_generated(Word& w) {
  for (auto& e : w) {
    if (auto* l = std::get_if<Literal>(&e.v)) l->generated = true;
    else if (auto* c = std::get_if<Control>(&e.v)) {
      if (auto* q = std::get_if<QuotedCode>(&c->code)) mark_generated(q->word);
    }
  }
}

inline void insert_text(const WordExpansionOptions& wo, ExpandedWords& frag,
                        const Str& text) {
  if (wo.in_double_quotes)
    frag.push_back({ExpQuotedStr{text}});
  else if (!text.empty())
    frag.push_back({ExpExpTxt{text}});
}

inline Str ifs_join_char(const ShellState& st) {
  auto v = lookup(st, "IFS");
  if (!v) return " ";
  if (v->empty()) return "";
  return Str(1, (*v)[0]);
}

inline Str join_positional(const ShellState& st, const Str& sep) {
  Str out;
  for (size_t i = 0; i < st.positional.size(); i++)
    out += (i ? sep : Str()) + st.positional[i];
  return out;
}

}  // namespace expansion_detail

ControlOutcome expand_control(ShellState& st, OsInterface& os,
                              const WordExpansionOptions& wo, const ControlCode& k);

struct WordsStepOutcome {
  bool ok = true;
  ExpandedWords error_words;
  const char* rule = "";
  bool did_cmd_subst = false;
};

// Consumes one element of w, appending its expansion to e.
inline WordsStepOutcome step_words(ShellState& st, OsInterface& os,
                                   const WordExpansionOptions& wo, ExpandedWords& e,
                                   Word& w) {
  WordsStepOutcome out;
  assert(!w.empty());
  WordElem elem = w.front();
  w.erase(w.begin());
  if (std::holds_alternative<Separator>(elem.v)) {
    e.push_back({ExpSep{}});
    out.rule = "EWSep";
    return out;
  }
  if (auto* l = std::get_if<Literal>(&elem.v)) {
    if (wo.in_double_quotes)
      e.push_back({ExpQuotedStr{l->text}});
    else if (wo.generated || l->generated)
      e.push_back({ExpExpTxt{l->text}});
    else
      e.push_back({ExpSrc{l->text}});
    out.rule = "EWLit";
    return out;
  }
  ControlOutcome co = expand_control(st, os, wo, std::get<Control>(elem.v).code);
  out.rule = co.rule;
  out.did_cmd_subst = co.did_cmd_subst;
  if (!co.ok) {
    out.ok = false;
    for (auto& f : co.error_fields) out.error_words.push_back({ExpExpTxt{f}});
    return out;
  }
  for (auto& fe : co.frag) e.push_back(fe);
  if (!co.extra_words.empty())
    w.insert(w.begin(), co.extra_words.begin(), co.extra_words.end());
  return out;
}

// Drives a whole word to fields in one call (used for nested expansions:
// arithmetic operands, assignment values of ${x=w}, redirection targets).
struct FullExpansion {
  bool ok = true;
  Fields fields;
  Fields error;
  bool did_cmd_subst = false;
};

struct ExpStepResult {
  const char* rule = "";
  bool did_cmd_subst = false;
};

ExpStepResult step_expansion(ShellState& st, OsInterface& os, ExpansionState& es);

inline FullExpansion expand_full(ShellState& st, OsInterface& os, ExpansionOptions eo,
                                 Word w) {
  ExpansionState es = es_start(eo, std::move(w));
  FullExpansion out;
  while (!es_terminal(es)) {
    auto r = step_expansion(st, os, es);
    out.did_cmd_subst = out.did_cmd_subst || r.did_cmd_subst;
  }
  if (auto* err = std::get_if<EsError>(&es.v)) {
    out.ok = false;
    out.error = err->f;
  } else {
    out.fields = std::get<EsDone>(es.v).f;
  }
  return out;
}

// Expands a pattern word (case patterns, ${x#w}): un-split, un-globbed,
// quoting structure kept for the pattern compiler.
struct PatternExpansion {
  bool ok = true;
  MarkedStr pattern;
  Fields error;
  bool did_cmd_subst = false;
};

inline PatternExpansion expand_pattern_word(ShellState& st, OsInterface& os, Word w) {
  PatternExpansion out;
  ExpandedWords e;
  WordExpansionOptions wo;
  wo.do_split = false;
  while (!w.empty()) {
    auto r = step_words(st, os, wo, e, w);
    out.did_cmd_subst = out.did_cmd_subst || r.did_cmd_subst;
    if (!r.ok) {
      out.ok = false;
      out.error = to_fields(r.error_words);
      return out;
    }
  }
  for (auto& el : e) {
    struct V {
      MarkedStr& p;
      void operator()(const ExpSep&) const { p.push_back({' ', false}); }
      void operator()(const ExpSrc& s) const {
        auto mm = mark(s.text, false);
        p.insert(p.end(), mm.begin(), mm.end());
      }
      void operator()(const ExpExpTxt& s) const {
        auto mm = mark(s.text, false);
        p.insert(p.end(), mm.begin(), mm.end());
      }
      void operator()(const ExpAt& a) const {
        for (size_t i = 0; i < a.fields.size(); i++) {
          if (i) p.push_back({' ', false});
          auto mm = mark(a.fields[i], true);
          p.insert(p.end(), mm.begin(), mm.end());
        }
      }
      void operator()(const ExpQuotedStr& s) const {
        auto mm = mark(s.text, true);
        p.insert(p.end(), mm.begin(), mm.end());
      }
    };
    std::visit(V{out.pattern}, el.v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parameter formats

// FormatResult is folded directly into ControlOutcome by expand_control.

namespace expansion_detail {

inline bool param_is_set(const ShellState& st, const Str& name,
                         const std::optional<Str>& looked_up) {
  if (name == "@" || name == "*") return !st.positional.empty();
  return looked_up.has_value();
}

inline ControlOutcome expansion_error(Fields f, const char* rule = "ExpExpandErr") {
  ControlOutcome out;
  out.ok = false;
  out.error_fields = std::move(f);
  out.rule = rule;
  return out;
}

// Structural insertion of a parameter's value ($@ and $* included).
inline void insert_param_value(const ShellState& st, const WordExpansionOptions& wo,
                               ExpandedWords& frag, const Str& name,
                               const std::optional<Str>& value) {
  if (name == "@") {
    if (wo.in_double_quotes) {
      frag.push_back({ExpAt{st.positional}});
    } else {
      for (size_t i = 0; i < st.positional.size(); i++) {
        if (i) frag.push_back({ExpSep{}});
        if (!st.positional[i].empty())
          frag.push_back({ExpExpTxt{st.positional[i]}});
      }
    }
    return;
  }
  if (name == "*") {
    Str joined = join_positional(st, ifs_join_char(st));
    if (wo.in_double_quotes)
      frag.push_back({ExpQuotedStr{joined}});
    else if (!joined.empty())
      frag.push_back({ExpExpTxt{joined}});
    return;
  }
  if (value) insert_text(wo, frag, *value);
}

}  // namespace expansion_detail

// apply_format: resolves a parameter format against the looked-up value.
// Default/Assign/Error return their words for further expansion when the
// parameter is considered unset; Alt is the opposite; Length yields the byte
// length; Sub hands off to the pattern matcher via a match control code.
inline ControlOutcome apply_format(ShellState& st, const WordExpansionOptions& wo,
                                   const Str& name, const ParameterFormat& fmt,
                                   const std::optional<Str>& looked_up) {
  using K = ParameterFormat::Kind;
  using namespace expansion_detail;
  ControlOutcome out;
  out.rule = "EWParam";
  bool nounset = st.opt("nounset");
  bool is_set = param_is_set(st, name, looked_up);
  bool considered_unset =
      !is_set || (fmt.null_mode == NullMode::UnsetIfNull &&
                  (name == "@" || name == "*"
                       ? join_positional(st, " ").empty()
                       : looked_up && looked_up->empty()));

  switch (fmt.kind) {
    case K::Normal: {
      if (!is_set && nounset && name != "@" && name != "*")
        return expansion_error({name + ": parameter not set"});
      insert_param_value(st, wo, out.frag, name, looked_up);
      return out;
    }
    case K::Length: {
      if (!is_set && nounset && name != "@" && name != "*")
        return expansion_error({name + ": parameter not set"});
      size_t len;
      if (name == "@" || name == "*")
        len = st.positional.size();  // POSIX leaves ${#@}/${#*} unspecified
      else
        len = looked_up ? looked_up->size() : 0;
      insert_text(wo, out.frag, std::to_string(len));
      if (wo.in_double_quotes && out.frag.empty())
        out.frag.push_back({ExpQuotedStr{std::to_string(len)}});
      return out;
    }
    case K::Default: {
      if (considered_unset) {
        Word w = fmt.word;
        expansion_detail::mark_generated(w);
        out.extra_words = std::move(w);
      } else {
        insert_param_value(st, wo, out.frag, name, looked_up);
      }
      return out;
    }
    case K::Alt: {
      if (!considered_unset) {
        Word w = fmt.word;
        expansion_detail::mark_generated(w);
        out.extra_words = std::move(w);
      }
      return out;
    }
    case K::Assign: {
      if (considered_unset) {
        out.extra_words.push_back(ctl_elem(AssignCode{name, fmt.word}));
      } else {
        insert_param_value(st, wo, out.frag, name, looked_up);
      }
      return out;
    }
    case K::Error: {
      if (considered_unset) {
        Word w = fmt.word;
        if (w.empty()) {
          Str dfl = fmt.null_mode == NullMode::UnsetIfNull
                        ? "parameter not set or null"
                        : "parameter not set";
          w.push_back(lit_elem(dfl));
        }
        out.extra_words.push_back(ctl_elem(ErrorFmtCode{name, w}));
      } else {
        insert_param_value(st, wo, out.frag, name, looked_up);
      }
      return out;
    }
    case K::Sub: {
      if (!is_set && nounset && name != "@" && name != "*")
        return expansion_error({name + ": parameter not set"});
      Fields value;
      if (name == "@" || name == "*") value = st.positional;
      else value.push_back(looked_up.value_or(""));
      out.extra_words.push_back(ctl_elem(MatchFmtCode{value, fmt.side, fmt.mode, fmt.word}));
      return out;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Control-code expansion

inline ControlOutcome expand_control(ShellState& st, OsInterface& os,
                                     const WordExpansionOptions& wo,
                                     const ControlCode& k) {
  using namespace expansion_detail;
  struct V {
    ShellState& st;
    OsInterface& os;
    const WordExpansionOptions& wo;

    ControlOutcome operator()(const TildeCode& t) const {
      ControlOutcome out;
      out.rule = "EWTilde";
      if (t.user) {
        auto home = os.home_dir(*t.user);
        if (home)
          out.frag.push_back({ExpQuotedStr{*home}});
        else
          out.frag.push_back({ExpSrc{"~" + *t.user}});  // unexpandable: literal
      } else {
        auto home = lookup(st, "HOME");
        if (home)
          out.frag.push_back({ExpQuotedStr{*home}});
        else
          out.frag.push_back({ExpSrc{"~"}});
      }
      return out;
    }

    ControlOutcome operator()(const ParamCode& p) const {
      return apply_format(st, wo, p.name, p.fmt, lookup(st, p.name));
    }

    // ${x=w} in flight: the assignment value expands un-split, un-globbed.
    ControlOutcome operator()(const AssignCode& a) const {
      ControlOutcome out;
      out.rule = "EWAssign";
      if (!valid_name(a.name))
        return expansion_error({a.name + ": cannot assign in this way"});
      auto r = expand_full(st, os, ExpansionOptions{false, false}, a.word);
      out.did_cmd_subst = r.did_cmd_subst;
      if (!r.ok) return expansion_error(r.error);
      Str value = to_string_fields(r.fields);
      if (auto err = set_global(st, a.name, value))
        return expansion_error({err->name + ": is read only"});
      insert_text(wo, out.frag, value);
      return out;
    }

    ControlOutcome operator()(const ErrorFmtCode& e) const {
      ControlOutcome out;
      out.rule = "EWError";
      auto r = expand_full(st, os, ExpansionOptions{false, false}, e.word);
      out.did_cmd_subst = r.did_cmd_subst;
      if (!r.ok) return expansion_error(r.error);
      return expansion_error({e.name + ": " + to_string_fields(r.fields)});
    }

    ControlOutcome operator()(const MatchFmtCode& m) const {
      ControlOutcome out;
      out.rule = "EWMatch";
      auto pe = expand_pattern_word(st, os, m.word);
      out.did_cmd_subst = pe.did_cmd_subst;
      if (!pe.ok) return expansion_error(pe.error);
      CompiledPattern pat = compile(pe.pattern);
      Fields results;
      for (auto& v : m.value) results.push_back(remove_affix(m.side, m.mode, pat, v));
      if (results.size() == 1) {
        insert_text(wo, out.frag, results[0]);
        if (wo.in_double_quotes && out.frag.empty())
          out.frag.push_back({ExpQuotedStr{""}});
      } else if (wo.in_double_quotes) {
        out.frag.push_back({ExpAt{results}});
      } else {
        for (size_t i = 0; i < results.size(); i++) {
          if (i) out.frag.push_back({ExpSep{}});
          if (!results[i].empty()) out.frag.push_back({ExpExpTxt{results[i]}});
        }
      }
      return out;
    }

    // Create a pipe, fork a subshell with stdout on the write end and the
    // read end closed inside, close the write end here, read later.
    ControlOutcome operator()(const CmdSubstCode& c) const {
      ControlOutcome out;
      out.rule = "CmdSubst";
      out.did_cmd_subst = true;
      auto pipe_r = os.make_pipe();
      if (!pipe_r.ok()) return expansion_error({"cannot create pipe: " + pipe_r.error});
      auto [fd_read, fd_write] = *pipe_r;
      std::vector<FdAction> wiring = {fd_dup2(fd_write, 1), fd_close(fd_write),
                                      fd_close(fd_read)};
      Pid pid = os.fork_shell(make_child_state(st), c.cmd, wiring);
      os.close_fd(fd_write);
      out.extra_words.push_back(ctl_elem(CmdSubstRunningCode{c.cmd, pid, fd_read}));
      return out;
    }

    ControlOutcome operator()(const CmdSubstRunningCode& c) const {
      ControlOutcome out;
      out.did_cmd_subst = true;
      auto r = os.read_all(c.fd);
      if (!r.ok()) {
        os.close_fd(c.fd);
        os.wait_pid(c.pid);
        return expansion_error({"command substitution: " + r.error}, "CmdSubstReadErr");
      }
      os.close_fd(c.fd);
      out.rule = "CmdSubstRead";
      out.extra_words.push_back(ctl_elem(CmdWaitCode{c.cmd, c.pid, trim_rnl(*r)}));
      return out;
    }

    ControlOutcome operator()(const CmdWaitCode& c) const {
      ControlOutcome out;
      out.rule = "CmdSubstWait";
      out.did_cmd_subst = true;
      int status = os.wait_pid(c.pid);
      set_status(st, status);
      insert_text(wo, out.frag, c.captured);
      return out;
    }

    ControlOutcome operator()(const ArithCode& a) const {
      ControlOutcome out;
      out.rule = "EWArith";
      auto r = expand_full(st, os, ExpansionOptions{false, false}, a.word);
      out.did_cmd_subst = r.did_cmd_subst;
      if (!r.ok) return expansion_error(r.error);
      Str src = to_string_fields(r.fields);
      auto parsed = parse_arithmetic(src);
      if (auto* err = std::get_if<ArithError>(&parsed))
        return expansion_error({"arithmetic: " + err->message});
      auto value = eval_arith(st, std::get<ArithPtr>(parsed));
      if (auto* err = std::get_if<ArithError>(&value))
        return expansion_error({"arithmetic: " + err->message});
      insert_text(wo, out.frag, std::to_string(std::get<int64_t>(value)));
      return out;
    }

    // Quoted words unwrap one element per step so nested command
    // substitutions remain visible as steps; inner results classify as
    // quoted text.
    ControlOutcome operator()(const QuotedCode& q) const {
      ControlOutcome out;
      if (q.word.empty()) {
        out.rule = "EWQuoted";
        if (!q.any_output) out.frag.push_back({ExpQuotedStr{""}});
        return out;
      }
      WordExpansionOptions inner = wo;
      inner.in_double_quotes = true;
      ExpandedWords frag;
      Word rest = q.word;
      auto r = step_words(st, os, inner, frag, rest);
      out.did_cmd_subst = r.did_cmd_subst;
      out.rule = r.rule;
      if (!r.ok) {
        out.ok = false;
        out.error_fields = to_fields(r.error_words);
        return out;
      }
      out.frag = std::move(frag);
      QuotedCode next{std::move(rest), q.any_output || !out.frag.empty()};
      if (!next.word.empty() || !next.any_output)
        out.extra_words.push_back(ctl_elem(std::move(next)));
      return out;
    }
  };
  return std::visit(V{st, os, wo}, k);
}

// ---------------------------------------------------------------------------
// The expansion state machine proper

inline ExpStepResult step_expansion(ShellState& st, OsInterface& os,
                                    ExpansionState& es) {
  ExpStepResult res;
  if (auto* s = std::get_if<EsStart>(&es.v)) {
    ExpansionOptions eo = s->eo;
    Word w = std::move(s->w);
    es = ExpansionState{EsExpand{eo, {}, std::move(w)}};
    res.rule = "ExpStart";
    return res;
  }
  if (auto* x = std::get_if<EsExpand>(&es.v)) {
    if (!x->w.empty()) {
      WordExpansionOptions wo;
      wo.do_split = x->eo.do_split;
      auto r = step_words(st, os, wo, x->e, x->w);
      res.did_cmd_subst = r.did_cmd_subst;
      if (!r.ok) {
        res.rule = r.rule && Str(r.rule) == "CmdSubstReadErr" ? "CmdSubstReadErr"
                                                              : "ExpExpandErr";
        es = ExpansionState{EsError{to_fields(r.error_words)}};
        return res;
      }
      res.rule = r.rule;
      return res;
    }
    ExpansionOptions eo = x->eo;
    ExpandedWords e = std::move(x->e);
    if (eo.do_split) {
      es = ExpansionState{EsSplit{eo, std::move(e)}};
      res.rule = "ExpExpandSplit";
    } else {
      es = ExpansionState{EsPath{eo, skip_splitting(e)}};
      res.rule = "ExpExpandNoSplit";
    }
    return res;
  }
  if (auto* sp = std::get_if<EsSplit>(&es.v)) {
    ExpansionOptions eo = sp->eo;
    IntermediateFields i = field_split(st, sp->e);
    es = ExpansionState{EsPath{eo, std::move(i)}};
    res.rule = "ExpSplit";
    return res;
  }
  if (auto* pa = std::get_if<EsPath>(&es.v)) {
    ExpansionOptions eo = pa->eo;
    if (!st.opt("noglob") && eo.do_glob) {
      IntermediateFields i = pathname_expand(st, os, pa->i);
      es = ExpansionState{EsQuote{eo, std::move(i)}};
      res.rule = "ExpPath";
    } else {
      IntermediateFields i = unescape(pa->i);
      es = ExpansionState{EsQuote{eo, std::move(i)}};
      res.rule = "ExpPathNoGlob";
    }
    return res;
  }
  if (auto* q = std::get_if<EsQuote>(&es.v)) {
    Fields f = combine_fields(remove_quotes(q->i));
    es = ExpansionState{EsDone{std::move(f)}};
    res.rule = "ExpQuote";
    return res;
  }
  assert(false && "step_expansion on a terminal state");
  return res;
}

}  // namespace smolsh

#endif  // SMOLSH_EXPANSION_HPP
