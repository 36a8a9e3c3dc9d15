// pattern.hpp: shell pattern matching for `case`, parameter prefix/suffix
// removal, and filename globbing. C locale only; bytes, not code points.

#ifndef SMOLSH_PATTERN_HPP
#define SMOLSH_PATTERN_HPP

#include <cctype>

#include "smolsh/ast.hpp"

namespace smolsh {

// Pattern source text with per-byte quoting: quoted bytes only ever match
// themselves (dynamic quoting escapes metacharacters).
struct QuotedByte {
  unsigned char b;
  bool quoted;
};
using MarkedStr = std::vector<QuotedByte>;

inline MarkedStr mark(const Str& s, bool quoted) {
  MarkedStr out;
  out.reserve(s.size());
  for (unsigned char c : s) out.push_back({c, quoted});
  return out;
}

inline Str unmark(const MarkedStr& m) {
  Str out;
  out.reserve(m.size());
  for (auto& qb : m) out += static_cast<char>(qb.b);
  return out;
}

struct PatLit { unsigned char b; };
struct PatAnyChar {};  // ?
struct PatAnyRun {};   // *
struct PatBracket {
  bool negated = false;
  std::vector<std::pair<unsigned char, unsigned char>> ranges;  // inclusive
  std::vector<Str> classes;  // named classes, C locale
  bool contains(unsigned char c) const {
    bool in = false;
    for (auto& [lo, hi] : ranges)
      if (c >= lo && c <= hi) { in = true; break; }
    if (!in) {
      for (auto& cl : classes) {
        if ((cl == "alnum" && std::isalnum(c)) || (cl == "alpha" && std::isalpha(c)) ||
            (cl == "blank" && (c == ' ' || c == '\t')) ||
            (cl == "cntrl" && std::iscntrl(c)) || (cl == "digit" && std::isdigit(c)) ||
            (cl == "graph" && std::isgraph(c)) || (cl == "lower" && std::islower(c)) ||
            (cl == "print" && std::isprint(c)) || (cl == "punct" && std::ispunct(c)) ||
            (cl == "space" && std::isspace(c)) || (cl == "upper" && std::isupper(c)) ||
            (cl == "xdigit" && std::isxdigit(c))) {
          in = true;
          break;
        }
      }
    }
    return negated ? !in : in;
  }
};

struct PatItem { std::variant<PatLit, PatAnyChar, PatAnyRun, PatBracket> v; };
using CompiledPattern = std::vector<PatItem>;

namespace pattern_detail {

// Parses a bracket expression starting at p[i] == '['. Returns nullopt when
// malformed (caller falls back to a literal '[').
inline std::optional<std::pair<PatBracket, size_t>> parse_bracket(const MarkedStr& p,
                                                                  size_t i) {
  PatBracket br;
  size_t j = i + 1;
  if (j < p.size() && !p[j].quoted && (p[j].b == '!' || p[j].b == '^')) {
    br.negated = true;
    j++;
  }
  bool first = true;
  while (j < p.size()) {
    unsigned char c = p[j].b;
    if (c == ']' && !first && !p[j].quoted) return std::make_pair(br, j + 1 - i);
    first = false;
    // [:class:], [=c=], [.x.] -- only when unquoted
    if (c == '[' && !p[j].quoted && j + 1 < p.size() &&
        (p[j + 1].b == ':' || p[j + 1].b == '=' || p[j + 1].b == '.')) {
      unsigned char open = p[j + 1].b;
      size_t k = j + 2;
      Str name;
      while (k + 1 < p.size() && !(p[k].b == open && p[k + 1].b == ']')) {
        name += static_cast<char>(p[k].b);
        k++;
      }
      if (k + 1 >= p.size()) return std::nullopt;  // unterminated
      if (open == ':') {
        br.classes.push_back(name);
      } else if (!name.empty()) {
        // C-locale degeneration: [=c=] and [.x.] are just their character(s)
        unsigned char ch = static_cast<unsigned char>(name[0]);
        br.ranges.push_back({ch, ch});
      }
      j = k + 2;
      continue;
    }
    // range a-b (the '-' must be unquoted and not last)
    if (j + 2 < p.size() && p[j + 1].b == '-' && !p[j + 1].quoted &&
        !(p[j + 2].b == ']' && !p[j + 2].quoted)) {
      br.ranges.push_back({c, p[j + 2].b});
      j += 3;
      continue;
    }
    br.ranges.push_back({c, c});
    j++;
  }
  return std::nullopt;  // unclosed
}

}  // namespace pattern_detail

// Compiles pattern source with quote marks. Unquoted metacharacters become
// matchers; quoted ones literals; malformed brackets degrade to literal '['.
inline CompiledPattern compile(const MarkedStr& p) {
  CompiledPattern out;
  size_t i = 0;
  while (i < p.size()) {
    unsigned char c = p[i].b;
    if (!p[i].quoted && c == '*') {
      if (out.empty() || !std::holds_alternative<PatAnyRun>(out.back().v))
        out.push_back({PatAnyRun{}});
      i++;
    } else if (!p[i].quoted && c == '?') {
      out.push_back({PatAnyChar{}});
      i++;
    } else if (!p[i].quoted && c == '[') {
      auto br = pattern_detail::parse_bracket(p, i);
      if (br) {
        out.push_back({br->first});
        i += br->second;
      } else {
        out.push_back({PatLit{c}});
        i++;
      }
    } else {
      out.push_back({PatLit{c}});
      i++;
    }
  }
  return out;
}

inline CompiledPattern compile(const Str& unquoted_pattern) {
  return compile(mark(unquoted_pattern, false));
}

namespace pattern_detail {

// Anchored match with iterative backtracking on the most recent AnyRun
// (linear-ish; shell patterns are short).
inline bool match_from(const CompiledPattern& p, const Str& s) {
  size_t pi = 0, si = 0;
  size_t star_pi = static_cast<size_t>(-1), star_si = 0;
  while (true) {
    if (pi < p.size()) {
      const PatItem& it = p[pi];
      if (std::holds_alternative<PatAnyRun>(it.v)) {
        star_pi = pi;
        star_si = si;
        pi++;
        continue;
      }
      if (si < s.size()) {
        unsigned char c = static_cast<unsigned char>(s[si]);
        bool ok = false;
        if (auto* l = std::get_if<PatLit>(&it.v)) {
          ok = l->b == c;
        } else if (std::holds_alternative<PatAnyChar>(it.v)) {
          ok = true;
        } else if (auto* b = std::get_if<PatBracket>(&it.v)) {
          ok = b->contains(c);
        }
        if (ok) {
          pi++;
          si++;
          continue;
        }
      }
    } else if (si == s.size()) {
      return true;
    }
    // backtrack
    if (star_pi != static_cast<size_t>(-1) && star_si < s.size()) {
      star_si++;
      si = star_si;
      pi = star_pi + 1;
      continue;
    }
    return false;
  }
}

}  // namespace pattern_detail

// Full-string anchored match.
inline bool match(const CompiledPattern& p, const Str& s) {
  return pattern_detail::match_from(p, s);
}

// Filename component match: a leading '.' in name matches only a literal
// leading '.' in the pattern (a bracket or wildcard does not count).
inline bool match_filename(const CompiledPattern& p, const Str& name,
                           bool explicit_dot_required = true) {
  bool leading_dot = !name.empty() && name[0] == '.';
  if (leading_dot && explicit_dot_required) {
    bool pat_starts_dot = !p.empty() && std::holds_alternative<PatLit>(p[0].v) &&
                          std::get<PatLit>(p[0].v).b == '.';
    if (!pat_starts_dot) return false;
  }
  return pattern_detail::match_from(p, name);
}

// Removes the shortest/longest prefix/suffix of s matching p; no match leaves
// s unchanged. Candidate split points scanned linearly.
inline Str remove_affix(SubSide side, SubMode mode, const CompiledPattern& p,
                        const Str& s) {
  if (side == SubSide::Prefix) {
    if (mode == SubMode::Shortest) {
      for (size_t i = 0; i <= s.size(); i++)
        if (match(p, s.substr(0, i))) return s.substr(i);
    } else {
      for (size_t i = s.size() + 1; i-- > 0;)
        if (match(p, s.substr(0, i))) return s.substr(i);
    }
  } else {
    if (mode == SubMode::Shortest) {
      for (size_t i = s.size() + 1; i-- > 0;)
        if (match(p, s.substr(i))) return s.substr(0, i);
    } else {
      for (size_t i = 0; i <= s.size(); i++)
        if (match(p, s.substr(i))) return s.substr(0, i);
    }
  }
  return s;
}

// True when the marked text contains an unquoted glob metacharacter with a
// plausible bracket (candidates for pathname expansion).
inline bool has_glob_chars(const MarkedStr& m) {
  for (size_t i = 0; i < m.size(); i++) {
    if (m[i].quoted) continue;
    if (m[i].b == '*' || m[i].b == '?') return true;
    if (m[i].b == '[' && pattern_detail::parse_bracket(m, i)) return true;
  }
  return false;
}

}  // namespace smolsh

#endif  // SMOLSH_PATTERN_HPP
