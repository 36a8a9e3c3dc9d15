// state.hpp: the shell state sigma and variable/scope machinery.

#ifndef SMOLSH_STATE_HPP
#define SMOLSH_STATE_HPP

#include <algorithm>
#include <cassert>

#include "smolsh/ast.hpp"

namespace smolsh {

struct LocalVar {
  std::optional<Str> value;  // nullopt = declared but unset (`local x`)
  bool readonly = false;
  bool exported = false;
};
using Scope = std::map<Str, LocalVar>;

struct JobInfo {
  struct Member {
    Pid pid;
    CommandPtr cmd;
    std::optional<int> status;  // done status, recorded exactly once
  };
  int id = 0;
  std::vector<Member> members;  // pipeline members, left to right
  Pid leader = 0;
  CommandPtr command;
  bool all_done() const {
    for (auto& m : members)
      if (!m.status) return false;
    return true;
  }
};

struct ShellState {
  Pid root_pid = 0;       // for $$, stable in subshells
  bool outermost = true;
  std::set<Str> options;  // allexport, errexit, ... plus "interactive"
  std::map<int, JobInfo> jobs;
  int next_job_id = 1;
  std::map<Sig, Str> traps;
  std::optional<std::map<Sig, Str>> supershell_traps;
  std::map<Str, Str> global_env;  // rho
  std::set<Str> readonly_set, export_set;  // for globals
  Str arg0;
  Fields positional;  // $1..$n
  std::vector<Scope> locals;  // innermost last
  std::map<Str, CommandPtr> functions;
  std::map<Str, Str> aliases;
  Str cwd;
  std::optional<Pid> last_bg_pid;  // $!
  int last_status = 0;             // $?
  int loop_depth = 0;
  std::optional<int> getopts_offset;  // offset inside a grouped option
  std::map<Str, Str> hash_table;      // `hash` builtin's user-visible table
  int call_depth = 0;                 // enclosing Call frames
  int dot_depth = 0;                  // enclosing dot-script eval loops
  bool running_exit_trap = false;

  bool opt(const Str& name) const { return options.count(name) != 0; }
  bool interactive() const { return opt("interactive"); }
};

inline int clamp_status(long n) { return static_cast<int>(((n % 256) + 256) % 256); }

inline void set_status(ShellState& st, long n) { st.last_status = clamp_status(n); }

inline bool valid_name(const Str& s) {
  if (s.empty()) return false;
  if (std::isdigit(static_cast<unsigned char>(s[0]))) return false;
  for (unsigned char c : s)
    if (!std::isalnum(c) && c != '_') return false;
  return true;
}

inline bool is_special_param_name(const Str& s) {
  if (s.size() == 1) {
    switch (s[0]) {
      case '?': case '$': case '!': case '#': case '-':
      case '*': case '@': case '0':
        return true;
      default:
        return std::isdigit(static_cast<unsigned char>(s[0])) != 0;
    }
  }
  return !s.empty() && s.find_first_not_of("0123456789") == Str::npos;
}

// $- : single-letter flags of the active options, alphabetical.
inline Str option_letters(const ShellState& st) {
  static const std::vector<std::pair<char, const char*>> m = {
      {'a', "allexport"}, {'b', "notify"},   {'C', "noclobber"},
      {'e', "errexit"},   {'f', "noglob"},   {'h', "hashall"},
      {'i', "interactive"}, {'m', "monitor"}, {'n', "noexec"},
      {'u', "nounset"},   {'v', "verbose"},  {'x', "xtrace"},
  };
  Str letters;
  for (auto& [c, name] : m)
    if (st.opt(name)) letters += c;
  std::sort(letters.begin(), letters.end());
  return letters;
}

inline Str special_param(const ShellState& st, const Str& name) {
  switch (name[0]) {
    case '?': return std::to_string(st.last_status);
    case '$': return std::to_string(st.root_pid);
    case '!': return st.last_bg_pid ? std::to_string(*st.last_bg_pid) : Str();
    case '#': return std::to_string(st.positional.size());
    case '-': return option_letters(st);
    case '0': return st.arg0;
    default: break;
  }
  return Str();
}

// Resolution order: special parameters, positional index, locals newest-first,
// then the global environment. Absent => nullopt. (The nounset error belongs
// to the expansion module, not here.)
inline std::optional<Str> lookup(const ShellState& st, const Str& name) {
  assert(!name.empty());
  if (name.size() == 1 && (name[0] == '?' || name[0] == '$' || name[0] == '!' ||
                           name[0] == '#' || name[0] == '-' || name[0] == '0')) {
    if (name[0] == '!' && !st.last_bg_pid) return std::nullopt;
    return special_param(st, name);
  }
  if (!name.empty() && name.find_first_not_of("0123456789") == Str::npos) {
    size_t idx = std::strtoul(name.c_str(), nullptr, 10);
    if (idx == 0) return st.arg0;
    if (idx <= st.positional.size()) return st.positional[idx - 1];
    return std::nullopt;
  }
  for (auto it = st.locals.rbegin(); it != st.locals.rend(); ++it) {
    auto f = it->find(name);
    if (f != it->end()) return f->second.value;  // may be nullopt: local-unset
  }
  auto g = st.global_env.find(name);
  if (g != st.global_env.end()) return g->second;
  return std::nullopt;
}

inline bool is_readonly(const ShellState& st, const Str& name) {
  for (auto it = st.locals.rbegin(); it != st.locals.rend(); ++it) {
    auto f = it->find(name);
    if (f != it->end()) return f->second.readonly;
  }
  return st.readonly_set.count(name) != 0;
}

inline bool is_exported(const ShellState& st, const Str& name) {
  for (auto it = st.locals.rbegin(); it != st.locals.rend(); ++it) {
    auto f = it->find(name);
    if (f != it->end()) return f->second.exported;
  }
  return st.export_set.count(name) != 0;
}

struct ReadonlyError { Str name; };

// setParam: writes the innermost local scope holding the name, if any
// (dynamic-scope write-through), else the global environment. Honors
// allexport.
inline std::optional<ReadonlyError> set_global(ShellState& st, const Str& name,
                                               const Str& value) {
  for (auto it = st.locals.rbegin(); it != st.locals.rend(); ++it) {
    auto f = it->find(name);
    if (f != it->end()) {
      if (f->second.readonly) return ReadonlyError{name};
      f->second.value = value;
      if (st.opt("allexport")) f->second.exported = true;
      return std::nullopt;
    }
  }
  if (st.readonly_set.count(name)) return ReadonlyError{name};
  st.global_env[name] = value;
  if (st.opt("allexport")) st.export_set.insert(name);
  return std::nullopt;
}

// setLocal: binds in the innermost scope. Creating a local over a readonly
// name is an error (paper Table "The local builtin and nested scope").
inline std::optional<ReadonlyError> set_local(ShellState& st, const Str& name,
                                              std::optional<Str> value) {
  assert(!st.locals.empty());
  if (is_readonly(st, name)) return ReadonlyError{name};
  LocalVar& v = st.locals.back()[name];
  if (value) v.value = std::move(value);
  if (st.opt("allexport") && v.value) v.exported = true;
  return std::nullopt;
}

inline void push_scope(ShellState& st) { st.locals.emplace_back(); }

inline void pop_scope(ShellState& st) {
  assert(!st.locals.empty() && "pop_scope on empty locals stack");
  st.locals.pop_back();
}

inline std::optional<ReadonlyError> unset_var(ShellState& st, const Str& name) {
  for (auto it = st.locals.rbegin(); it != st.locals.rend(); ++it) {
    auto f = it->find(name);
    if (f != it->end()) {
      if (f->second.readonly) return ReadonlyError{name};
      f->second.value.reset();
      f->second.exported = false;
      return std::nullopt;
    }
  }
  if (st.readonly_set.count(name)) return ReadonlyError{name};
  st.global_env.erase(name);
  st.export_set.erase(name);
  return std::nullopt;
}

// Environment import/export (External Interfaces).

inline void import_host_env(ShellState& st, const std::map<Str, Str>& host) {
  for (auto& [k, v] : host) {
    if (!valid_name(k)) continue;
    st.global_env[k] = v;
    st.export_set.insert(k);
  }
}

// Serializes exported names (plus exported locals) and an extra fragment as
// name=value pairs for exec.
inline std::map<Str, Str> export_env(const ShellState& st, const EnvFrag& extra) {
  std::map<Str, Str> env;
  for (auto& name : st.export_set) {
    auto v = st.global_env.find(name);
    if (v != st.global_env.end()) env[name] = v->second;
  }
  for (auto& scope : st.locals)
    for (auto& [name, lv] : scope)
      if (lv.exported && lv.value) env[name] = *lv.value;
  for (auto& [k, v] : extra) env[k] = v;
  return env;
}

// Child state for forked subshells: $$ stays, outermost drops, supershell
// traps snapshot taken, non-ignored traps reset, jobs forgotten.
inline ShellState make_child_state(const ShellState& st) {
  ShellState child = st;
  child.outermost = false;
  child.supershell_traps = st.traps;
  std::map<Sig, Str> kept;
  for (auto& [sig, h] : st.traps)
    if (h.empty()) kept[sig] = h;  // ignored stays ignored
  child.traps = kept;
  child.jobs.clear();
  child.next_job_id = 1;
  child.running_exit_trap = false;
  return child;
}

}  // namespace smolsh

#endif  // SMOLSH_STATE_HPP
