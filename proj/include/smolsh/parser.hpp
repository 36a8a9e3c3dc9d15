// parser.hpp: incremental (line-oriented) lexer and recursive-descent parser
// for POSIX shell concrete syntax. Bytes >= 0x80 pass through opaquely.
//
// Escapes resolved at parse time are not kept in the AST: a backslash-escaped
// or quoted character becomes quoted literal text.

#ifndef SMOLSH_PARSER_HPP
#define SMOLSH_PARSER_HPP

#include <deque>
#include <functional>

#include "smolsh/ast.hpp"
#include "smolsh/state.hpp"

namespace smolsh {

// Mutable heredoc body slot: filled by the parser when the body arrives at the
// next newline. Stable across AST construction because it is indirect.
struct HereBodySlot { Word word; };

class ParseSession {
 public:
  static std::shared_ptr<ParseSession> from_string(Str text) {
    auto s = std::make_shared<ParseSession>();
    s->buf_ = std::move(text);
    s->source_eof_ = true;
    return s;
  }
  static std::shared_ptr<ParseSession> from_reader(
      std::function<std::optional<Str>()> next_line) {
    auto s = std::make_shared<ParseSession>();
    s->reader_ = std::move(next_line);
    return s;
  }

  bool interactive = false;
  bool enable_aliases = false;  // alias expansion also on when interactive
  std::function<void(const Str&)> prompt_writer;  // optional
  int lineno = 1;

  bool at_source_eof() const { return source_eof_ && pos_ >= buf_.size(); }

  // -- internals shared with the Parser --
  Str buf_;
  size_t pos_ = 0;
  bool source_eof_ = false;
  std::function<std::optional<Str>()> reader_;
  struct AliasRegion { size_t end; Str name; };
  std::vector<AliasRegion> alias_regions_;
  bool fetched_this_parse_ = false;
  Str ps1_, ps2_;

  bool fetch_line() {
    if (source_eof_) return false;
    if (prompt_writer && interactive)
      prompt_writer(fetched_this_parse_ ? ps2_ : ps1_);
    fetched_this_parse_ = true;
    auto line = reader_();
    if (!line) {
      source_eof_ = true;
      return false;
    }
    buf_ += *line;
    return true;
  }

  bool have_byte() {
    while (pos_ >= buf_.size()) {
      if (!fetch_line()) return false;
    }
    return true;
  }

  void note_advance(size_t new_pos) {
    while (!alias_regions_.empty() && new_pos >= alias_regions_.back().end)
      alias_regions_.pop_back();
  }

  bool alias_active(const Str& name) const {
    for (auto& r : alias_regions_)
      if (r.name == name) return true;
    return false;
  }

  void inject_alias(size_t at, const Str& name, const Str& value) {
    buf_.insert(at, value);
    for (auto& r : alias_regions_) r.end += value.size();
    alias_regions_.push_back({at + value.size(), name});
  }
};

struct ParseResult {
  enum class Kind { Complete, Blank, Eof, SyntaxError };
  Kind kind = Kind::Eof;
  CommandPtr cmd;
  Str error;
  int lineno = 0;
  Str consumed_text;  // raw bytes consumed (for `set -v`)
};

namespace parser_detail {

struct Token {
  enum class Kind { Word, Op, Newline, IoNumber, Eof };
  Kind kind = Kind::Eof;
  Word word;
  Str literal;        // unquoted literal text when the word is purely literal
  bool pure_literal = false;
  Str op;
  int io_number = 0;
  int lineno = 1;
  size_t begin = 0;   // byte offset where this token started
  bool alias_checked = false;
};

struct SyntaxErr { Str message; int lineno; };

class Parser {
 public:
  Parser(ParseSession& s, const std::map<Str, Str>& aliases)
      : s_(s), aliases_(aliases) {}

  // complete_command := list (NEWLINE | EOF)
  // Returns nullcmd for a blank line; throws SyntaxErr on malformed input.
  std::optional<CommandPtr> parse_complete() {
    const Token& t = peek();
    if (t.kind == Token::Kind::Eof) return std::nullopt;
    if (t.kind == Token::Kind::Newline) {
      next();
      return CommandPtr();  // blank
    }
    CommandPtr c = parse_list(false);
    const Token& end = peek();
    if (end.kind == Token::Kind::Newline) {
      next();
    } else if (end.kind != Token::Kind::Eof) {
      fail("unexpected token `" + token_desc(end) + "'");
    }
    return c;
  }

  // list := and_or ((';'|'&') and_or)* [';'|'&']
  CommandPtr parse_list(bool in_compound) {
    CommandPtr c = parse_and_or();
    while (true) {
      const Token& t = peek();
      if (is_op(t, ";") || is_op(t, "&")) {
        bool bg = t.op == "&";
        next();
        if (bg) c = mk(Background{c});
        const Token& nx = peek();
        if (nx.kind == Token::Kind::Newline || nx.kind == Token::Kind::Eof ||
            is_op(nx, ")") || (in_compound && at_compound_stop()))
          return c;
        if (in_compound) skip_linebreaks();
        CommandPtr rest = parse_and_or();
        c = mk(Seq{c, rest});
      } else if (in_compound && t.kind == Token::Kind::Newline) {
        skip_linebreaks();
        if (at_compound_stop() || peek().kind == Token::Kind::Eof || is_op(peek(), ")"))
          return c;
        CommandPtr rest = parse_and_or();
        c = mk(Seq{c, rest});
      } else {
        return c;
      }
    }
  }

  // and_or := pipeline (('&&'|'||') linebreak pipeline)*
  CommandPtr parse_and_or() {
    CommandPtr c = parse_pipeline();
    while (true) {
      const Token& t = peek();
      if (is_op(t, "&&")) {
        next();
        skip_linebreaks();
        c = mk(And{c, parse_pipeline()});
      } else if (is_op(t, "||")) {
        next();
        skip_linebreaks();
        c = mk(Or{c, parse_pipeline()});
      } else {
        return c;
      }
    }
  }

  // pipeline := ['!'] command ('|' linebreak command)*
  CommandPtr parse_pipeline() {
    bool banged = false;
    if (is_reserved(peek(), "!")) {
      banged = true;
      next();
    }
    std::vector<CommandPtr> cmds;
    cmds.push_back(parse_command());
    while (is_op(peek(), "|")) {
      next();
      skip_linebreaks();
      cmds.push_back(parse_command());
    }
    CommandPtr c = cmds.size() == 1 ? cmds[0] : mk(Pipeline{cmds, false});
    if (banged) c = mk(Not{c});
    return c;
  }

  CommandPtr parse_command() {
    const Token& t = peek();
    if (t.kind == Token::Kind::Op && t.op == "(") return with_redirs(parse_subshell());
    if (t.kind == Token::Kind::Word && t.pure_literal) {
      const Str& w = t.literal;
      if (w == "{") return with_redirs(parse_brace_group());
      if (w == "if") return with_redirs(parse_if());
      if (w == "while") return with_redirs(parse_while(false));
      if (w == "until") return with_redirs(parse_while(true));
      if (w == "for") return with_redirs(parse_for());
      if (w == "case") return with_redirs(parse_case());
      if (w == "then" || w == "else" || w == "elif" || w == "fi" || w == "do" ||
          w == "done" || w == "esac" || w == "}" || w == "in")
        fail("unexpected reserved word `" + w + "'");
    }
    return parse_simple();
  }

  CommandPtr with_redirs(CommandPtr c) {
    std::vector<Redirection> rs;
    parse_redir_suffix(rs);
    if (rs.empty()) return c;
    return mk(Redirected{c, rs});
  }

  CommandPtr parse_subshell() {
    expect_op("(");
    skip_linebreaks();
    CommandPtr c = parse_list(true);
    expect_op(")");
    return mk(Subshell{c});
  }

  CommandPtr parse_brace_group() {
    expect_reserved("{");
    skip_linebreaks();
    CommandPtr c = parse_list(true);
    expect_reserved("}");
    return c;
  }

  CommandPtr parse_if() {
    expect_reserved("if");
    skip_linebreaks();
    CommandPtr cond = parse_list(true);
    skip_seps();
    expect_reserved("then");
    skip_linebreaks();
    CommandPtr then_cmd = parse_list(true);
    skip_seps();
    return mk(If{cond, then_cmd, parse_else_part()});
  }

  CommandPtr parse_else_part() {
    const Token& t = peek();
    if (is_reserved(t, "fi")) {
      next();
      return nullptr;
    }
    if (is_reserved(t, "elif")) {
      next();
      skip_linebreaks();
      CommandPtr cond = parse_list(true);
      skip_seps();
      expect_reserved("then");
      skip_linebreaks();
      CommandPtr then_cmd = parse_list(true);
      skip_seps();
      return mk(If{cond, then_cmd, parse_else_part()});
    }
    if (is_reserved(t, "else")) {
      next();
      skip_linebreaks();
      CommandPtr e = parse_list(true);
      skip_seps();
      expect_reserved("fi");
      return e;
    }
    fail("expected `fi', `else' or `elif'");
    return nullptr;
  }

  // until loops desugar into while loops of a negated condition.
  CommandPtr parse_while(bool negate) {
    next();  // while/until
    skip_linebreaks();
    CommandPtr cond = parse_list(true);
    skip_seps();
    CommandPtr body = parse_do_group();
    if (negate) cond = mk(Not{cond});
    return mk(While{cond, body});
  }

  CommandPtr parse_do_group() {
    expect_reserved("do");
    skip_linebreaks();
    CommandPtr body = parse_list(true);
    skip_seps();
    expect_reserved("done");
    return body;
  }

  CommandPtr parse_for() {
    expect_reserved("for");
    const Token& t = peek();
    if (t.kind != Token::Kind::Word || !t.pure_literal || !valid_name(t.literal))
      fail("bad for loop variable");
    Str var = t.literal;
    next();
    skip_linebreaks();
    Word words;
    if (is_reserved(peek(), "in")) {
      next();
      while (peek().kind == Token::Kind::Word) {
        if (!words.empty()) words.push_back(sep_elem());
        Word w = peek().word;
        for (auto& e : w) words.push_back(e);
        next();
      }
      skip_seps();
    } else {
      // `for x do ...` iterates "$@"
      Word q;
      q.push_back(ctl_elem(QuotedCode{
          {ctl_elem(ParamCode{"@", ParameterFormat{}})}}));
      words = q;
      if (is_op(peek(), ";")) next();
      skip_linebreaks();
    }
    CommandPtr body = parse_do_group();
    return mk(For{var, words, body});
  }

  CommandPtr parse_case() {
    expect_reserved("case");
    if (peek().kind != Token::Kind::Word) fail("expected word after `case'");
    Word scrutinee = peek().word;
    next();
    skip_linebreaks();
    expect_reserved("in");
    skip_linebreaks();
    std::vector<CaseBranch> branches;
    while (true) {
      if (is_reserved(peek(), "esac")) {
        next();
        break;
      }
      if (peek().kind == Token::Kind::Eof) fail("unexpected EOF, expected `esac'");
      if (is_op(peek(), "(")) next();
      CaseBranch br;
      while (true) {
        if (peek().kind != Token::Kind::Word) fail("expected pattern in case branch");
        br.patterns.push_back(peek().word);
        next();
        if (is_op(peek(), "|")) {
          next();
          continue;
        }
        break;
      }
      expect_op(")");
      skip_linebreaks();
      if (!is_op(peek(), ";;") && !is_reserved(peek(), "esac")) {
        br.body = parse_list(true);
        skip_newlines_only();
      }
      branches.push_back(std::move(br));
      if (is_op(peek(), ";;")) {
        next();
        skip_linebreaks();
        continue;
      }
      skip_linebreaks();
      if (is_reserved(peek(), "esac")) {
        next();
        break;
      }
      fail("expected `;;' or `esac'");
    }
    return mk(Case{scrutinee, branches});
  }

  CommandPtr parse_simple() {
    std::vector<std::pair<Str, Word>> assigns;
    Word words;
    std::vector<Redirection> redirs;
    bool have_cmd_word = false;
    bool first_word = true;

    while (true) {
      const Token& t = peek();
      if (t.kind == Token::Kind::IoNumber ||
          (t.kind == Token::Kind::Op && is_redir_op(t.op))) {
        parse_one_redir(redirs);
        continue;
      }
      if (t.kind != Token::Kind::Word) break;
      // alias expansion in command-name position
      if (!have_cmd_word && t.pure_literal && !t.alias_checked && alias_candidate() &&
          try_alias(t)) {
        continue;  // token stream restarts from injected text
      }
      if (!have_cmd_word) {
        auto assign = split_assignment(t.word);
        if (assign) {
          assigns.push_back(*assign);
          next();
          continue;
        }
      }
      // function definition: NAME () compound
      if (first_word && assigns.empty() && redirs.empty() && t.pure_literal &&
          valid_name(t.literal) && is_op(peek(1), "(") && is_op(peek(2), ")")) {
        Str name = t.literal;
        next();
        next();
        next();
        skip_linebreaks();
        CommandPtr body = parse_function_body();
        return mk(FnDef{name, body});
      }
      if (have_cmd_word) words.push_back(sep_elem());
      for (auto& e : t.word) words.push_back(e);
      have_cmd_word = true;
      first_word = false;
      next();
    }
    if (assigns.empty() && !have_cmd_word && redirs.empty())
      fail("expected a command");
    return mk(Simple{std::move(assigns), std::move(words), std::move(redirs)});
  }

  CommandPtr parse_function_body() {
    const Token& t = peek();
    CommandPtr body;
    if (t.kind == Token::Kind::Op && t.op == "(") {
      body = parse_subshell();
    } else if (t.pure_literal &&
               (t.literal == "{" || t.literal == "if" || t.literal == "while" ||
                t.literal == "until" || t.literal == "for" || t.literal == "case")) {
      body = parse_command();
      return body;  // parse_command already attached redirections
    } else {
      fail("expected compound command as function body");
    }
    std::vector<Redirection> rs;
    parse_redir_suffix(rs);
    if (!rs.empty()) body = mk(Redirected{body, rs});
    return body;
  }

  void parse_redir_suffix(std::vector<Redirection>& rs) {
    while (true) {
      const Token& t = peek();
      if (t.kind == Token::Kind::IoNumber ||
          (t.kind == Token::Kind::Op && is_redir_op(t.op)))
        parse_one_redir(rs);
      else
        break;
    }
  }

  static bool is_redir_op(const Str& op) {
    return op == "<" || op == ">" || op == ">>" || op == "<<" || op == "<<-" ||
           op == "<&" || op == ">&" || op == "<>" || op == ">|";
  }

  void parse_one_redir(std::vector<Redirection>& rs) {
    int fd = -1;
    if (peek().kind == Token::Kind::IoNumber) {
      fd = peek().io_number;
      next();
    }
    if (peek().kind != Token::Kind::Op || !is_redir_op(peek().op))
      fail("expected redirection operator");
    Str op = peek().op;
    next();
    if (op == "<<" || op == "<<-") {
      const Token& d = peek();
      if (d.kind != Token::Kind::Word) fail("expected heredoc delimiter");
      bool quoted = !d.pure_literal;
      Str delim = unquoted_text(d.word);
      next();
      auto slot = std::make_shared<HereBodySlot>();
      pending_heredocs_.push_back({delim, op == "<<-", quoted, slot});
      rs.push_back(Redirection{
          HereRedir{fd < 0 ? 0 : fd, quoted ? HereKind::NoExpand : HereKind::Default,
                    slot ? std::shared_ptr<Word>(slot, &slot->word) : nullptr}});
      return;
    }
    if (peek().kind != Token::Kind::Word) fail("expected redirection target");
    Word target = peek().word;
    next();
    if (op == "<&" || op == ">&") {
      rs.push_back(Redirection{DupRedir{
          fd < 0 ? (op == "<&" ? 0 : 1) : fd,
          op == "<&" ? DupDir::In : DupDir::Out, target}});
      return;
    }
    RedirMode mode;
    int dfl = 1;
    if (op == "<") { mode = RedirMode::Read; dfl = 0; }
    else if (op == "<>") { mode = RedirMode::ReadWrite; dfl = 0; }
    else if (op == ">") { mode = RedirMode::Write; }
    else if (op == ">>") { mode = RedirMode::Append; }
    else { mode = RedirMode::Clobber; }
    rs.push_back(Redirection{FileRedir{fd < 0 ? dfl : fd, mode, target}});
  }

  // ---------------------------------------------------------------------
  // token plumbing

  const Token& peek(size_t n = 0) {
    while (lookahead_.size() <= n) lookahead_.push_back(lex_token());
    return lookahead_[n];
  }
  void next() {
    peek();
    lookahead_.pop_front();
  }

  static bool is_op(const Token& t, const char* op) {
    return t.kind == Token::Kind::Op && t.op == op;
  }
  static bool is_reserved(const Token& t, const char* w) {
    return t.kind == Token::Kind::Word && t.pure_literal && t.literal == w;
  }
  bool at_compound_stop() {
    const Token& t = peek();
    if (t.kind != Token::Kind::Word || !t.pure_literal) return false;
    const Str& w = t.literal;
    return w == "then" || w == "else" || w == "elif" || w == "fi" || w == "do" ||
           w == "done" || w == "esac" || w == "}";
  }
  void expect_op(const char* op) {
    if (!is_op(peek(), op)) fail(Str("expected `") + op + "'");
    next();
  }
  void expect_reserved(const char* w) {
    if (!is_reserved(peek(), w)) fail(Str("expected `") + w + "'");
    next();
  }
  void skip_linebreaks() {
    while (peek().kind == Token::Kind::Newline) next();
  }
  void skip_newlines_only() { skip_linebreaks(); }
  // separators between a compound list and its closing reserved word: `;` and
  // newlines
  void skip_seps() {
    while (peek().kind == Token::Kind::Newline || is_op(peek(), ";")) next();
  }

  [[noreturn]] void fail(const Str& msg) { throw SyntaxErr{msg, s_.lineno}; }

  Str token_desc(const Token& t) {
    switch (t.kind) {
      case Token::Kind::Word: return t.pure_literal ? t.literal : Str("word");
      case Token::Kind::Op: return t.op;
      case Token::Kind::Newline: return "newline";
      case Token::Kind::IoNumber: return std::to_string(t.io_number);
      case Token::Kind::Eof: return "EOF";
    }
    return "?";
  }

  // An assignment word: NAME=rest, NAME a valid identifier, '=' in the first
  // unquoted literal element.
  std::optional<std::pair<Str, Word>> split_assignment(const Word& w) {
    if (w.empty()) return std::nullopt;
    auto* l = std::get_if<Literal>(&w[0].v);
    if (!l) return std::nullopt;
    size_t eq = l->text.find('=');
    if (eq == Str::npos || eq == 0) return std::nullopt;
    Str name = l->text.substr(0, eq);
    if (!valid_name(name)) return std::nullopt;
    Word value;
    Str rest = l->text.substr(eq + 1);
    if (!rest.empty()) value.push_back(lit_elem(rest));
    for (size_t i = 1; i < w.size(); i++) value.push_back(w[i]);
    apply_tilde(value, true);
    return std::make_pair(name, value);
  }

  static Str unquoted_text(const Word& w) {
    Str out;
    for (auto& e : w) {
      if (auto* l = std::get_if<Literal>(&e.v)) {
        out += l->text;
      } else if (auto* c = std::get_if<Control>(&e.v)) {
        if (auto* q = std::get_if<QuotedCode>(&c->code))
          for (auto& qe : q->word)
            if (auto* ql = std::get_if<Literal>(&qe.v)) out += ql->text;
      }
    }
    return out;
  }

  bool alias_candidate() const { return s_.interactive || s_.enable_aliases; }

  bool try_alias(const Token& t) {
    auto it = aliases_.find(t.literal);
    if (it == aliases_.end() || s_.alias_active(t.literal)) {
      if (!lookahead_.empty()) lookahead_[0].alias_checked = true;
      return false;
    }
    // Re-lex from the injected text; only the alias word itself was lexed.
    size_t at = t.begin;
    Str name = t.literal, value = it->second;
    lookahead_.clear();
    s_.pos_ = at;
    s_.inject_alias(at, name, value);
    return true;
  }

  // -------------------------------------------------------------------
  // lexer

  Token lex_token() {
    Token t;
    t.lineno = s_.lineno;
    skip_blanks_and_comments();
    if (!s_.have_byte()) {
      t.kind = Token::Kind::Eof;
      return t;
    }
    t.begin = s_.pos_;
    char c = cur();
    if (c == '\n') {
      take();
      s_.lineno++;
      collect_heredocs();
      t.kind = Token::Kind::Newline;
      return t;
    }
    if (is_op_char(c)) {
      t.kind = Token::Kind::Op;
      t.op = lex_operator();
      return t;
    }
    // IO_NUMBER: digits directly before < or >
    if (std::isdigit(static_cast<unsigned char>(c))) {
      size_t save = s_.pos_;
      Str digits;
      while (s_.have_byte() && std::isdigit(static_cast<unsigned char>(cur())))
        digits += take();
      if (s_.have_byte() && (cur() == '<' || cur() == '>')) {
        t.kind = Token::Kind::IoNumber;
        t.io_number = std::atoi(digits.c_str());
        return t;
      }
      s_.pos_ = save;
    }
    t.kind = Token::Kind::Word;
    lex_word(t);
    return t;
  }

  void skip_blanks_and_comments() {
    while (s_.have_byte()) {
      char c = cur();
      if (c == ' ' || c == '\t') {
        advance();
      } else if (c == '\\' && peek_byte(1) == '\n') {
        advance();
        advance_newline();
      } else if (c == '#') {
        while (s_.have_byte() && cur() != '\n') advance();
        return;
      } else {
        return;
      }
    }
  }

  static bool is_op_char(char c) {
    return c == '<' || c == '>' || c == '|' || c == '&' || c == ';' || c == '(' ||
           c == ')';
  }

  Str lex_operator() {
    char c = take();
    switch (c) {
      case '<':
        if (s_.have_byte()) {
          if (cur() == '<') {
            take();
            if (s_.have_byte() && cur() == '-') { take(); return "<<-"; }
            return "<<";
          }
          if (cur() == '&') { take(); return "<&"; }
          if (cur() == '>') { take(); return "<>"; }
        }
        return "<";
      case '>':
        if (s_.have_byte()) {
          if (cur() == '>') { take(); return ">>"; }
          if (cur() == '&') { take(); return ">&"; }
          if (cur() == '|') { take(); return ">|"; }
        }
        return ">";
      case '|':
        if (s_.have_byte() && cur() == '|') { take(); return "||"; }
        return "|";
      case '&':
        if (s_.have_byte() && cur() == '&') { take(); return "&&"; }
        return "&";
      case ';':
        if (s_.have_byte() && cur() == ';') { take(); return ";;"; }
        return ";";
      case '(': return "(";
      case ')': return ")";
    }
    return Str(1, c);
  }

  static bool word_end_char(char c) {
    return c == ' ' || c == '\t' || c == '\n' || is_op_char(c);
  }

  void flush_lit(Word& w, Str& lit) {
    if (!lit.empty()) {
      w.push_back(lit_elem(lit));
      lit.clear();
    }
  }

  void lex_word(Token& t) {
    Word w;
    Str lit;
    bool pure = true;
    while (s_.have_byte()) {
      char c = cur();
      if (word_end_char(c)) break;
      if (c == '\\') {
        advance();
        if (!s_.have_byte()) {  // trailing backslash at EOF: literal
          lit += '\\';
          break;
        }
        if (cur() == '\n') {
          advance_newline();
          continue;
        }
        flush_lit(w, lit);
        w.push_back(ctl_elem(QuotedCode{{lit_elem(Str(1, take()))}}));
        pure = false;
      } else if (c == '\'') {
        advance();
        Str content;
        while (true) {
          if (!s_.have_byte()) fail("unterminated single quote");
          char q = cur();
          if (q == '\n') {
            advance_newline();
            content += '\n';
            continue;
          }
          advance();
          if (q == '\'') break;
          content += q;
        }
        flush_lit(w, lit);
        Word inner;
        if (!content.empty()) inner.push_back(lit_elem(content));
        w.push_back(ctl_elem(QuotedCode{inner}));
        pure = false;
      } else if (c == '"') {
        advance();
        flush_lit(w, lit);
        w.push_back(ctl_elem(QuotedCode{lex_dquote_body()}));
        pure = false;
      } else if (c == '$') {
        flush_lit(w, lit);
        w.push_back(lex_dollar(false));
        pure = false;
      } else if (c == '`') {
        flush_lit(w, lit);
        w.push_back(lex_backquote());
        pure = false;
      } else {
        lit += take();
      }
    }
    flush_lit(w, lit);
    apply_tilde(w, false);
    if (!w.empty() && std::holds_alternative<Control>(w[0].v) &&
        std::holds_alternative<TildeCode>(std::get<Control>(w[0].v).code))
      pure = false;
    t.word = std::move(w);
    t.pure_literal = pure;
    if (pure) {
      t.literal.clear();
      for (auto& e : t.word) t.literal += std::get<Literal>(e.v).text;
    }
  }

  // Inside double quotes: \ escapes $ ` " \ and newline; $ and ` active.
  Word lex_dquote_body() {
    Word w;
    Str lit;
    while (true) {
      if (!s_.have_byte()) fail("unterminated double quote");
      char c = cur();
      if (c == '"') {
        advance();
        break;
      }
      if (c == '\n') {
        advance_newline();
        lit += '\n';
        continue;
      }
      if (c == '\\') {
        char nx = peek_byte(1);
        if (nx == '\n') {
          advance();
          advance_newline();
          continue;
        }
        if (nx == '$' || nx == '`' || nx == '"' || nx == '\\') {
          advance();
          lit += take();
          continue;
        }
        lit += take();  // backslash stays
        continue;
      }
      if (c == '$') {
        flush_lit(w, lit);
        w.push_back(lex_dollar(true));
        continue;
      }
      if (c == '`') {
        flush_lit(w, lit);
        w.push_back(lex_backquote());
        continue;
      }
      lit += take();
    }
    flush_lit(w, lit);
    return w;
  }

  static bool name_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
  }
  static bool name_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
  }
  static bool special_char(char c) {
    return c == '?' || c == '$' || c == '!' || c == '#' || c == '-' || c == '*' ||
           c == '@';
  }

  WordElem lex_dollar(bool in_dquotes) {
    advance();  // $
    if (!s_.have_byte()) return lit_elem("$");
    char c = cur();
    if (c == '(') {
      advance();
      if (s_.have_byte() && cur() == '(' && arith_ahead()) {
        advance();  // second (
        return ctl_elem(ArithCode{lex_arith_body()});
      }
      CommandPtr cmd = parse_nested_list_until(')');
      return ctl_elem(CmdSubstCode{cmd});
    }
    if (c == '{') {
      advance();
      return lex_braced_param(in_dquotes);
    }
    if (name_start(c)) {
      Str name;
      while (s_.have_byte() && name_char(cur())) name += take();
      return ctl_elem(ParamCode{name, ParameterFormat{}});
    }
    if (std::isdigit(static_cast<unsigned char>(c)))
      return ctl_elem(ParamCode{Str(1, take()), ParameterFormat{}});
    if (special_char(c)) return ctl_elem(ParamCode{Str(1, take()), ParameterFormat{}});
    return lit_elem("$");
  }

  // After "$((": true when the parens balance as arithmetic (a closing "))"
  // is reached before the subshell's single ')').
  bool arith_ahead() {
    size_t i = s_.pos_ + 1;  // past the second '('
    int depth = 0;
    while (true) {
      while (i >= s_.buf_.size()) {
        if (!s_.fetch_line()) return false;
      }
      char c = s_.buf_[i];
      if (c == '\\') {
        i += 2;
        continue;
      }
      if (c == '\'') {
        i++;
        while (true) {
          while (i >= s_.buf_.size())
            if (!s_.fetch_line()) return false;
          if (s_.buf_[i++] == '\'') break;
        }
        continue;
      }
      if (c == '(') depth++;
      if (c == ')') {
        if (depth == 0) {
          while (i + 1 >= s_.buf_.size())
            if (!s_.fetch_line()) return true;  // EOF right after: treat as arith
          return s_.buf_[i + 1] == ')';
        }
        depth--;
      }
      i++;
    }
  }

  // Arithmetic body: blanks literal, $ and ` active, ends at matching "))".
  Word lex_arith_body() {
    Word w;
    Str lit;
    int depth = 0;
    while (true) {
      if (!s_.have_byte()) fail("unterminated arithmetic expansion");
      char c = cur();
      if (c == '\n') {
        advance_newline();
        lit += ' ';
        continue;
      }
      if (c == '(') {
        depth++;
        lit += take();
        continue;
      }
      if (c == ')') {
        if (depth == 0) {
          advance();
          if (!s_.have_byte() || cur() != ')')
            fail("expected `))' closing arithmetic expansion");
          advance();
          break;
        }
        depth--;
        lit += take();
        continue;
      }
      if (c == '$') {
        flush_lit(w, lit);
        w.push_back(lex_dollar(true));
        continue;
      }
      if (c == '`') {
        flush_lit(w, lit);
        w.push_back(lex_backquote());
        continue;
      }
      if (c == '\\' && peek_byte(1) == '\n') {
        advance();
        advance_newline();
        continue;
      }
      lit += take();
    }
    flush_lit(w, lit);
    return w;
  }

  WordElem lex_braced_param(bool in_dquotes) {
    if (!s_.have_byte()) fail("unterminated parameter expansion");
    // ${#}, ${#x} (length), or name with format
    Str name;
    ParameterFormat fmt;
    if (cur() == '#') {
      advance();
      if (s_.have_byte() && cur() == '}') {
        advance();
        return ctl_elem(ParamCode{"#", ParameterFormat{}});
      }
      // length format: ${#name}
      Str n2 = lex_param_name();
      if (!n2.empty() && s_.have_byte() && cur() == '}') {
        advance();
        ParameterFormat f;
        f.kind = ParameterFormat::Kind::Length;
        return ctl_elem(ParamCode{n2, f});
      }
      // otherwise: parameter '#' with a format suffix
      name = "#";
      if (!n2.empty()) fail("bad substitution");
    } else {
      name = lex_param_name();
      if (name.empty()) fail("bad substitution");
    }
    if (!s_.have_byte()) fail("unterminated parameter expansion");
    if (cur() == '}') {
      advance();
      return ctl_elem(ParamCode{name, ParameterFormat{}});
    }
    // format operator
    bool colon = false;
    if (cur() == ':') {
      colon = true;
      advance();
      if (!s_.have_byte()) fail("unterminated parameter expansion");
    }
    char op = cur();
    using K = ParameterFormat::Kind;
    if (op == '-') fmt.kind = K::Default;
    else if (op == '=') fmt.kind = K::Assign;
    else if (op == '?') fmt.kind = K::Error;
    else if (op == '+') fmt.kind = K::Alt;
    else if (!colon && (op == '#' || op == '%')) {
      advance();
      fmt.kind = K::Sub;
      fmt.side = op == '#' ? SubSide::Prefix : SubSide::Suffix;
      fmt.mode = SubMode::Shortest;
      if (s_.have_byte() && cur() == op) {
        advance();
        fmt.mode = SubMode::Longest;
      }
      fmt.word = lex_param_word(in_dquotes);
      return ctl_elem(ParamCode{name, fmt});
    } else {
      fail("bad substitution");
    }
    advance();
    fmt.null_mode = colon ? NullMode::UnsetIfNull : NullMode::String;
    fmt.word = lex_param_word(in_dquotes);
    return ctl_elem(ParamCode{name, fmt});
  }

  Str lex_param_name() {
    Str name;
    if (!s_.have_byte()) return name;
    char c = cur();
    if (name_start(c)) {
      while (s_.have_byte() && name_char(cur())) name += take();
      return name;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      while (s_.have_byte() && std::isdigit(static_cast<unsigned char>(cur())))
        name += take();
      return name;
    }
    if (special_char(c)) return Str(1, take());
    return name;
  }

  // The word argument of ${name<op>word}: lexed like ordinary word text up to
  // the matching '}'. Blanks are literal inside double quotes, separators
  // otherwise. Quotes and $-codes are active either way.
  Word lex_param_word(bool in_dquotes) {
    Word w;
    Str lit;
    int brace_depth = 0;
    while (true) {
      if (!s_.have_byte()) fail("unterminated parameter expansion");
      char c = cur();
      if (c == '}' && brace_depth == 0) {
        advance();
        break;
      }
      if (c == '}') {
        brace_depth--;
        lit += take();
        continue;
      }
      if (c == '{') {
        brace_depth++;
        lit += take();
        continue;
      }
      if (c == '\n') {
        advance_newline();
        if (in_dquotes) lit += '\n';
        else {
          flush_lit(w, lit);
          if (!w.empty() && !std::holds_alternative<Separator>(w.back().v))
            w.push_back(sep_elem());
        }
        continue;
      }
      if ((c == ' ' || c == '\t') && !in_dquotes) {
        flush_lit(w, lit);
        if (!w.empty() && !std::holds_alternative<Separator>(w.back().v))
          w.push_back(sep_elem());
        advance();
        continue;
      }
      if (c == '\\') {
        char nx = peek_byte(1);
        if (nx == '\n') {
          advance();
          advance_newline();
          continue;
        }
        if (in_dquotes) {
          if (nx == '$' || nx == '`' || nx == '"' || nx == '\\') {
            advance();
            lit += take();
          } else {
            lit += take();
          }
        } else {
          advance();
          flush_lit(w, lit);
          w.push_back(ctl_elem(QuotedCode{{lit_elem(Str(1, take()))}}));
        }
        continue;
      }
      if (c == '\'' && !in_dquotes) {
        advance();
        Str content;
        while (true) {
          if (!s_.have_byte()) fail("unterminated single quote");
          char q = take();
          if (q == '\'') break;
          content += q;
        }
        flush_lit(w, lit);
        Word inner;
        if (!content.empty()) inner.push_back(lit_elem(content));
        w.push_back(ctl_elem(QuotedCode{inner}));
        continue;
      }
      if (c == '"') {
        advance();
        flush_lit(w, lit);
        w.push_back(ctl_elem(QuotedCode{lex_dquote_body()}));
        continue;
      }
      if (c == '$') {
        flush_lit(w, lit);
        w.push_back(lex_dollar(in_dquotes));
        continue;
      }
      if (c == '`') {
        flush_lit(w, lit);
        w.push_back(lex_backquote());
        continue;
      }
      lit += take();
    }
    flush_lit(w, lit);
    return w;
  }

  WordElem lex_backquote() {
    advance();  // `
    Str content;
    while (true) {
      if (!s_.have_byte()) fail("unterminated backquote substitution");
      char c = cur();
      if (c == '`') {
        advance();
        break;
      }
      if (c == '\\') {
        char nx = peek_byte(1);
        if (nx == '`' || nx == '\\' || nx == '$') {
          advance();
          content += take();
          continue;
        }
        if (nx == '\n') {
          advance();
          advance_newline();
          continue;
        }
        content += take();
        continue;
      }
      if (c == '\n') {
        advance_newline();
        content += '\n';
        continue;
      }
      content += take();
    }
    auto sub = ParseSession::from_string(content);
    Parser p(*sub, aliases_);
    CommandPtr all;
    while (true) {
      std::optional<CommandPtr> c;
      try {
        c = p.parse_complete();
      } catch (SyntaxErr& e) {
        fail("in backquote substitution: " + e.message);
      }
      if (!c) break;
      if (!*c) continue;
      all = all ? mk(Seq{all, *c}) : *c;
    }
    if (!all) all = mk(Simple{{}, {}, {}});
    return ctl_elem(CmdSubstCode{all});
  }

  // $( ... ): a nested command list on the same input, ending at ')'.
  CommandPtr parse_nested_list_until(char close) {
    Parser sub(s_, aliases_);
    sub.skip_linebreaks();
    CommandPtr c;
    if (!is_op(sub.peek(), ")")) c = sub.parse_list(true);
    if (!is_op(sub.peek(), Str(1, close).c_str()))
      fail("expected `)' closing command substitution");
    // consume ')' by taking sub's lookahead state back
    sub.next();
    pending_heredocs_ = std::move(sub.pending_heredocs_);
    if (!sub.lookahead_.empty()) {
      // tokens past ')' belong to us only if sub lexed beyond; it cannot,
      // since next() only pops.
    }
    if (!c) c = mk(Simple{{}, {}, {}});
    return c;
  }

  // Tilde post-processing: word-initial tildes; in assignment values also
  // after unquoted colons. The prefix must be purely literal and end at a
  // slash (or colon, in assignments) or the end of the whole word; a prefix
  // interrupted by a control code is not tilde-expanded.
  void apply_tilde(Word& w, bool assignment) {
    Word out;
    bool at_start = true;
    for (size_t i = 0; i < w.size(); i++) {
      auto* l = std::get_if<Literal>(&w[i].v);
      if (!l) {
        at_start = std::holds_alternative<Separator>(w[i].v);
        out.push_back(w[i]);
        continue;
      }
      const Str& text = l->text;
      Str acc;
      size_t p = 0;
      bool start_here = at_start;
      while (p < text.size()) {
        char c = text[p];
        if (c == '~' && start_here) {
          size_t end = Str::npos;
          for (size_t k = p + 1; k <= text.size(); k++) {
            if (k == text.size()) {
              if (i + 1 == w.size()) end = k;
              break;
            }
            if (text[k] == '/' || (assignment && text[k] == ':')) {
              end = k;
              break;
            }
          }
          if (end != Str::npos) {
            if (!acc.empty()) {
              out.push_back(lit_elem(acc));
              acc.clear();
            }
            Str prefix = text.substr(p + 1, end - p - 1);
            out.push_back(ctl_elem(TildeCode{
                prefix.empty() ? std::nullopt : std::optional<Str>(prefix)}));
            p = end;
            start_here = false;
            continue;
          }
        }
        acc += c;
        start_here = assignment && c == ':';
        p++;
      }
      if (!acc.empty()) out.push_back(lit_elem(acc));
      at_start = false;
    }
    w = std::move(out);
  }

  // ---------------------------------------------------------------------
  // heredoc collection at newline

  struct PendingHeredoc {
    Str delim;
    bool strip_tabs;
    bool noexpand;
    std::shared_ptr<HereBodySlot> slot;
  };

  void collect_heredocs() {
    auto pending = std::move(pending_heredocs_);
    pending_heredocs_.clear();
    for (auto& h : pending) {
      Str body;
      while (true) {
        auto line = read_raw_line();
        if (!line) fail("unterminated heredoc: expected `" + h.delim + "'");
        Str l = *line;
        if (!l.empty() && l.back() == '\n') l.pop_back();
        if (h.strip_tabs) {
          size_t k = 0;
          while (k < l.size() && l[k] == '\t') k++;
          l = l.substr(k);
        }
        if (l == h.delim) break;
        body += l;
        body += '\n';
      }
      if (h.noexpand) {
        Word w;
        if (!body.empty()) w.push_back(lit_elem(body));
        h.slot->word = std::move(w);
      } else {
        h.slot->word = parse_heredoc_body(body);
      }
    }
  }

  std::optional<Str> read_raw_line() {
    Str line;
    while (true) {
      if (!s_.have_byte()) {
        if (line.empty()) return std::nullopt;
        return line;
      }
      char c = take_raw();
      line += c;
      if (c == '\n') {
        s_.lineno++;
        return line;
      }
    }
  }

  // Heredoc bodies (expandable): like double-quoted text, but quote characters
  // are not special; backslash escapes $ ` \ and newline.
  Word parse_heredoc_body(const Str& body) {
    auto sub = ParseSession::from_string(body);
    Parser p(*sub, aliases_);
    Word w;
    Str lit;
    while (sub->have_byte()) {
      char c = sub->buf_[sub->pos_];
      if (c == '\\') {
        char nx = sub->pos_ + 1 < sub->buf_.size() ? sub->buf_[sub->pos_ + 1] : '\0';
        if (nx == '$' || nx == '`' || nx == '\\') {
          sub->pos_ += 2;
          lit += nx;
          continue;
        }
        if (nx == '\n') {
          sub->pos_ += 2;
          continue;
        }
        lit += c;
        sub->pos_++;
        continue;
      }
      if (c == '$') {
        p.flush_lit(w, lit);
        w.push_back(p.lex_dollar(true));
        continue;
      }
      if (c == '`') {
        p.flush_lit(w, lit);
        w.push_back(p.lex_backquote());
        continue;
      }
      lit += c;
      sub->pos_++;
    }
    p.flush_lit(w, lit);
    return w;
  }

  // --- byte helpers
  char cur() { return s_.buf_[s_.pos_]; }
  char peek_byte(size_t n) {
    while (s_.pos_ + n >= s_.buf_.size()) {
      if (!s_.fetch_line()) return '\0';
    }
    return s_.buf_[s_.pos_ + n];
  }
  char take() {
    char c = s_.buf_[s_.pos_++];
    s_.note_advance(s_.pos_);
    return c;
  }
  char take_raw() { return s_.buf_[s_.pos_++]; }
  void advance() { take(); }
  // A continuation or in-quotes newline: counts a line but is not a newline
  // token, so heredoc bodies do not start here.
  void advance_newline() {
    take();
    s_.lineno++;
  }

  ParseSession& s_;
  const std::map<Str, Str>& aliases_;
  std::deque<Token> lookahead_;
  std::vector<PendingHeredoc> pending_heredocs_;
};

}  // namespace parser_detail

// Returns the next complete command (a full line's list, `Seq`-combined), a
// blank, end of input, or a syntax error. Prompts, alias substitution,
// `until` desugaring, `<<-` tab stripping, and quoted-delimiter heredocs are
// all handled here.
inline ParseResult parse_next(ParseSession& session, const std::map<Str, Str>& aliases,
                              const Str& ps1, const Str& ps2) {
  ParseResult res;
  session.ps1_ = ps1;
  session.ps2_ = ps2;
  session.fetched_this_parse_ = false;
  size_t start = session.pos_;
  res.lineno = session.lineno;
  if (!session.have_byte()) {
    res.kind = ParseResult::Kind::Eof;
    return res;
  }
  parser_detail::Parser p(session, aliases);
  try {
    auto c = p.parse_complete();
    // rewind unconsumed lookahead: tokens are only lexed on demand and the
    // parser stops right after the newline/EOF, so nothing to rewind.
    res.consumed_text = session.buf_.substr(start, session.pos_ - start);
    if (!c) {
      res.kind = ParseResult::Kind::Eof;
    } else if (!*c) {
      res.kind = ParseResult::Kind::Blank;
    } else {
      res.kind = ParseResult::Kind::Complete;
      res.cmd = *c;
    }
  } catch (parser_detail::SyntaxErr& e) {
    res.kind = ParseResult::Kind::SyntaxError;
    res.error = e.message;
    res.lineno = e.lineno;
    // skip to end of line so interactive sessions can continue
    while (session.pos_ < session.buf_.size() && session.buf_[session.pos_] != '\n')
      session.pos_++;
    if (session.pos_ < session.buf_.size()) session.pos_++;
  }
  return res;
}

}  // namespace smolsh

#endif  // SMOLSH_PARSER_HPP
