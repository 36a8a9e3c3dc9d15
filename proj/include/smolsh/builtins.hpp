// builtins.hpp: special builtins, the implemented mandatory set, and the
// common extras. Each runs without forking, doing I/O only through OS fd
// calls, and yields a status plus an optional continuation form.

#ifndef SMOLSH_BUILTINS_HPP
#define SMOLSH_BUILTINS_HPP

#include <cerrno>

#include "smolsh/expansion.hpp"
#include "smolsh/parser.hpp"

namespace smolsh {

enum class BuiltinKind { Special, Mandatory, Extra, Unsupported, None };

inline BuiltinKind dispatch(const Str& name) {
  static const std::set<Str> special = {"break", ":", "continue", ".", "eval",
                                        "exec", "exit", "export", "readonly",
                                        "return", "set", "shift", "times",
                                        "trap", "unset", "local"};
  static const std::set<Str> mandatory = {"alias", "cd", "command", "false",
                                          "getopts", "kill", "pwd", "read",
                                          "true", "umask", "unalias", "wait",
                                          "type", "hash"};
  static const std::set<Str> extra = {"echo", "printf", "test", "["};
  static const std::set<Str> unsupported = {"bg", "fg", "jobs", "fc", "newgrp"};
  if (special.count(name)) return BuiltinKind::Special;
  if (mandatory.count(name)) return BuiltinKind::Mandatory;
  if (extra.count(name)) return BuiltinKind::Extra;
  if (unsupported.count(name)) return BuiltinKind::Unsupported;
  return BuiltinKind::None;
}

struct BuiltinOutcome {
  bool is_error = false;  // special-builtin severity error; message printed
  int status = 0;
  CommandPtr continuation;  // null: complete with status
  bool no_restore = false;  // exec: keep redirections permanent
};

namespace builtin_detail {

inline void out_bytes(OsInterface& os, const Str& s) { os.write_all(1, s); }
inline void err_bytes(OsInterface& os, const Str& s) { os.write_all(2, s); }

inline void diag(OsInterface& os, const Str& who, const Str& msg) {
  err_bytes(os, "smolsh: " + who + ": " + msg + "\n");
}

inline BuiltinOutcome berr(OsInterface& os, const Str& who, const Str& msg,
                           int status = 2) {
  diag(os, who, msg);
  BuiltinOutcome r;
  r.is_error = true;
  r.status = status;
  return r;
}

inline BuiltinOutcome bstatus(int status) {
  BuiltinOutcome r;
  r.status = status;
  return r;
}

inline Str shquote(const Str& s) {
  Str out = "'";
  for (char c : s)
    out += (c == '\'') ? Str("'\\''") : Str(1, c);
  return out + "'";
}

inline std::optional<long> parse_int(const Str& s) {
  if (s.empty()) return std::nullopt;
  size_t i = (s[0] == '-' || s[0] == '+') ? 1 : 0;
  if (i == s.size()) return std::nullopt;
  for (size_t k = i; k < s.size(); k++)
    if (!std::isdigit(static_cast<unsigned char>(s[k]))) return std::nullopt;
  errno = 0;
  long v = std::strtol(s.c_str(), nullptr, 10);
  if (errno == ERANGE) return std::nullopt;
  return v;
}

// Option letters and their -o names.
inline const std::vector<std::pair<char, const char*>>& option_table() {
  static const std::vector<std::pair<char, const char*>> t = {
      {'a', "allexport"}, {'b', "notify"},  {'C', "noclobber"}, {'e', "errexit"},
      {'f', "noglob"},    {'h', "hashall"}, {'m', "monitor"},   {'n', "noexec"},
      {'u', "nounset"},   {'v', "verbose"}, {'x', "xtrace"},
  };
  return t;
}

inline const std::vector<const char*>& o_only_options() {
  static const std::vector<const char*> t = {"ignoreeof", "nonlexicalctrl"};
  return t;
}

inline bool known_option_name(const Str& name) {
  for (auto& [c, n] : option_table())
    if (name == n) return true;
  for (auto* n : o_only_options())
    if (name == n) return true;
  return false;
}

}  // namespace builtin_detail

// ---------------------------------------------------------------------------
// set: also used by the shell entry point for invocation flags.
// Returns the index of the first operand, or nullopt on a bad option (message
// printed).

inline std::optional<size_t> apply_set_options(ShellState& st, OsInterface& os,
                                               const Fields& args, size_t i,
                                               bool allow_operands) {
  using namespace builtin_detail;
  for (; i < args.size(); i++) {
    const Str& a = args[i];
    if (a == "--" || a == "-") {
      i++;
      break;
    }
    if (a.size() < 2 || (a[0] != '-' && a[0] != '+')) break;
    bool enable = a[0] == '-';
    if (a == "-o" || a == "+o") {
      if (i + 1 >= args.size()) {
        // print option settings
        for (auto& [c, name] : option_table()) {
          (void)c;
          if (enable)
            out_bytes(os, Str(name) + (st.opt(name) ? " on\n" : " off\n"));
          else
            out_bytes(os, Str("set ") + (st.opt(name) ? "-o " : "+o ") + name + "\n");
        }
        for (auto* name : o_only_options()) {
          if (enable)
            out_bytes(os, Str(name) + (st.opt(name) ? " on\n" : " off\n"));
          else
            out_bytes(os, Str("set ") + (st.opt(name) ? "-o " : "+o ") + name + "\n");
        }
        continue;
      }
      Str name = args[++i];
      if (!known_option_name(name)) {
        diag(os, "set", "illegal option -o " + name);
        return std::nullopt;
      }
      if (enable) st.options.insert(name);
      else st.options.erase(name);
      continue;
    }
    for (size_t k = 1; k < a.size(); k++) {
      char c = a[k];
      if (c == 'o' && k + 1 == a.size()) {
        diag(os, "set", "illegal option grouping for -o");
        return std::nullopt;
      }
      const char* name = nullptr;
      for (auto& [fc, fname] : option_table())
        if (fc == c) name = fname;
      if (!name) {
        diag(os, "set", Str("illegal option ") + a[0] + Str(1, c));
        return std::nullopt;
      }
      if (enable) st.options.insert(name);
      else st.options.erase(name);
    }
  }
  if (!allow_operands && i < args.size()) return i;
  return i;
}

namespace builtin_detail {

inline BuiltinOutcome builtin_set(ShellState& st, OsInterface& os, const Fields& args) {
  if (args.empty()) {
    // print all visible variables, sorted, shell-quoted
    std::map<Str, Str> visible = st.global_env;
    for (auto& scope : st.locals)
      for (auto& [n, lv] : scope)
        if (lv.value) visible[n] = *lv.value;
        else visible.erase(n);
    for (auto& [n, v] : visible) out_bytes(os, n + "=" + shquote(v) + "\n");
    return bstatus(0);
  }
  bool had_marker = false;
  for (auto& a : args)
    if (a == "--" || a == "-") had_marker = true;
  auto next = apply_set_options(st, os, args, 0, true);
  if (!next) return berr(os, "set", "bad options");
  if (*next < args.size() || had_marker)
    st.positional = Fields(args.begin() + *next, args.end());
  return bstatus(0);
}

inline BuiltinOutcome builtin_shift(ShellState& st, OsInterface& os, const Fields& args) {
  long n = 1;
  if (!args.empty()) {
    auto v = parse_int(args[0]);
    if (!v || *v < 0) return berr(os, "shift", "bad number: " + args[0]);
    n = *v;
  }
  if (static_cast<size_t>(n) > st.positional.size())
    return berr(os, "shift", "can't shift that many");
  st.positional.erase(st.positional.begin(), st.positional.begin() + n);
  return bstatus(0);
}

inline BuiltinOutcome builtin_break_continue(ShellState& st, OsInterface& os,
                                             const Fields& args, bool is_break) {
  const char* who = is_break ? "break" : "continue";
  long n = 1;
  if (!args.empty()) {
    auto v = parse_int(args[0]);
    if (!v || *v < 1) return berr(os, who, "bad number: " + args[0]);
    n = *v;
  }
  BuiltinOutcome r;
  if (st.loop_depth <= 0) return r;  // no enclosing loop: no-op, status 0
  int take = static_cast<int>(std::min<long>(n, st.loop_depth));
  r.continuation = is_break ? mk(BreakCmd{take}) : mk(ContinueCmd{take});
  return r;
}

inline BuiltinOutcome builtin_exit(ShellState& st, OsInterface& os, const Fields& args) {
  if (!args.empty()) {
    auto v = parse_int(args[0]);
    if (!v) return berr(os, "exit", "bad number: " + args[0]);
    set_status(st, *v);
  }
  BuiltinOutcome r;
  r.status = st.last_status;
  r.continuation = mk(ExitCmd{});
  return r;
}

inline BuiltinOutcome builtin_return(ShellState& st, OsInterface& os, const Fields& args) {
  if (st.call_depth <= 0 && st.dot_depth <= 0)
    return berr(os, "return", "can only be used within a function or dot script");
  if (!args.empty()) {
    auto v = parse_int(args[0]);
    if (!v) return berr(os, "return", "bad number: " + args[0]);
    set_status(st, *v);
  }
  BuiltinOutcome r;
  r.status = st.last_status;
  r.continuation = mk(ReturnCmd{});
  return r;
}

inline BuiltinOutcome builtin_export_readonly(ShellState& st, OsInterface& os,
                                              const Fields& args, bool readonly_mode) {
  const char* who = readonly_mode ? "readonly" : "export";
  if (args.empty() || args[0] == "-p") {
    if (readonly_mode) {
      for (auto& n : st.readonly_set) {
        auto v = st.global_env.find(n);
        out_bytes(os, v != st.global_env.end()
                          ? "readonly " + n + "=" + shquote(v->second) + "\n"
                          : "readonly " + n + "\n");
      }
    } else {
      for (auto& n : st.export_set) {
        auto v = st.global_env.find(n);
        out_bytes(os, v != st.global_env.end()
                          ? "export " + n + "=" + shquote(v->second) + "\n"
                          : "export " + n + "\n");
      }
    }
    return bstatus(0);
  }
  for (auto& a : args) {
    size_t eq = a.find('=');
    Str name = eq == Str::npos ? a : a.substr(0, eq);
    if (!valid_name(name)) return berr(os, who, name + ": bad variable name");
    if (eq != Str::npos) {
      if (auto err = set_global(st, name, a.substr(eq + 1)))
        return berr(os, who, err->name + ": is read only");
    }
    // mark in the scope that holds the variable
    bool marked_local = false;
    for (auto it = st.locals.rbegin(); it != st.locals.rend(); ++it) {
      auto f = it->find(name);
      if (f != it->end()) {
        if (readonly_mode) f->second.readonly = true;
        else f->second.exported = true;
        marked_local = true;
        break;
      }
    }
    if (!marked_local) {
      if (readonly_mode) st.readonly_set.insert(name);
      else st.export_set.insert(name);
    }
  }
  return bstatus(0);
}

inline BuiltinOutcome builtin_unset(ShellState& st, OsInterface& os, const Fields& args) {
  bool funcs = false;
  size_t i = 0;
  for (; i < args.size(); i++) {
    if (args[i] == "-f") funcs = true;
    else if (args[i] == "-v") funcs = false;
    else if (args[i] == "--") { i++; break; }
    else if (!args[i].empty() && args[i][0] == '-')
      return berr(os, "unset", "illegal option " + args[i]);
    else break;
  }
  for (; i < args.size(); i++) {
    if (funcs) {
      st.functions.erase(args[i]);
    } else if (auto err = unset_var(st, args[i])) {
      return berr(os, "unset", err->name + ": is read only");
    }
  }
  return bstatus(0);
}

inline BuiltinOutcome builtin_local(ShellState& st, OsInterface& os, const Fields& args) {
  if (st.call_depth <= 0) return berr(os, "local", "not in a function");
  if (!args.empty() && args[0] == "-p") {
    if (!st.locals.empty())
      for (auto& [n, lv] : st.locals.back())
        out_bytes(os, lv.value ? "local " + n + "=" + shquote(*lv.value) + "\n"
                               : "local " + n + "\n");
    return bstatus(0);
  }
  for (auto& a : args) {
    size_t eq = a.find('=');
    Str name = eq == Str::npos ? a : a.substr(0, eq);
    if (!valid_name(name)) return berr(os, "local", name + ": bad variable name");
    std::optional<Str> value;
    if (eq != Str::npos) value = a.substr(eq + 1);
    if (set_local(st, name, value))
      return berr(os, "local", name + ": is read only");
    if (eq == Str::npos) {
      // `local x` shadows with initial unset
      st.locals.back()[name].value.reset();
    }
  }
  return bstatus(0);
}

inline BuiltinOutcome builtin_trap(ShellState& st, OsInterface& os, const Fields& args0) {
  Fields args = args0;
  if (!args.empty() && args[0] == "--") args.erase(args.begin());
  if (args.empty()) {
    const std::map<Sig, Str>& src = st.supershell_traps ? *st.supershell_traps : st.traps;
    std::vector<std::pair<int, Str>> lines;
    for (auto& [sig, action] : src)
      lines.push_back({static_cast<int>(sig),
                       "trap -- " + shquote(action) + " " + signal_name(sig) + "\n"});
    std::sort(lines.begin(), lines.end());
    for (auto& [n, line] : lines) out_bytes(os, line);
    return bstatus(0);
  }
  // `trap N...`: an unsigned-integer first operand resets all given conditions
  bool reset_all = parse_int(args[0]) && args[0].find_first_not_of("0123456789") == Str::npos;
  Str action;
  size_t first_cond = 0;
  if (reset_all) {
    action = "-";
  } else {
    action = args[0];
    first_cond = 1;
    if (args.size() < 2) return berr(os, "trap", "usage: trap action condition...", 1);
  }
  for (size_t i = first_cond; i < args.size(); i++) {
    auto sig = signal_from_name(args[i]);
    if (!sig) return berr(os, "trap", args[i] + ": bad trap", 1);
    st.supershell_traps.reset();
    if (action == "-") {
      st.traps.erase(*sig);
      if (*sig != Sig::EXIT) os.set_disposition(*sig, SigDisposition::Default);
    } else {
      st.traps[*sig] = action;
      if (*sig != Sig::EXIT)
        os.set_disposition(*sig, action.empty() ? SigDisposition::Ignore
                                                : SigDisposition::Record);
    }
  }
  return bstatus(0);
}

inline BuiltinOutcome builtin_times(ShellState&, OsInterface& os, const Fields&) {
  RusageInfo r = os.rusage();
  auto fmt = [](int64_t usec) {
    long mins = usec / 60000000;
    double secs = (usec % 60000000) / 1e6;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%ldm%fs", mins, secs);
    return Str(buf);
  };
  out_bytes(os, fmt(r.self_user) + " " + fmt(r.self_sys) + "\n" +
                    fmt(r.children_user) + " " + fmt(r.children_sys) + "\n");
  return bstatus(0);
}

inline BuiltinOutcome builtin_dot(ShellState& st, OsInterface& os, const Fields& args,
                                  bool simple_invocation) {
  if (args.empty()) return berr(os, ".", "filename argument required");
  Str path;
  if (args[0].find('/') != Str::npos) {
    path = join_path(st.cwd, args[0]);
  } else {
    auto found = resolve_path(st, os, args[0], false);
    if (!found) return berr(os, ".", args[0] + ": not found", 127);
    path = join_path(st.cwd, *found);
  }
  auto fd = os.file_redir(RedirMode::Read, path);
  if (!fd.ok()) return berr(os, ".", args[0] + ": " + fd.error, 127);
  auto content = os.read_all(*fd);
  os.close_fd(*fd);
  if (!content.ok()) return berr(os, ".", args[0] + ": " + content.error, 127);
  EvalLoop loop;
  loop.pctx = ParseSession::from_string(*content);
  loop.source_name = args[0];
  loop.kind = EvalLoopKind::Dot;
  loop.exit_on_error = !simple_invocation;
  st.dot_depth++;
  BuiltinOutcome r;
  r.continuation = mk(std::move(loop));
  return r;
}

inline BuiltinOutcome builtin_eval(ShellState&, OsInterface&, const Fields& args,
                                   bool simple_invocation) {
  Str text;
  for (size_t i = 0; i < args.size(); i++) text += (i ? " " : "") + args[i];
  if (text.empty()) return bstatus(0);
  EvalLoop loop;
  loop.pctx = ParseSession::from_string(text);
  loop.source_name = "eval";
  loop.kind = EvalLoopKind::EvalStr;
  loop.exit_on_error = !simple_invocation;
  BuiltinOutcome r;
  r.continuation = mk(std::move(loop));
  return r;
}

inline BuiltinOutcome builtin_exec(ShellState& st, OsInterface& os, const Fields& args) {
  BuiltinOutcome r;
  r.no_restore = true;
  if (args.empty()) return r;  // redirections (already applied) become permanent
  auto path = resolve_path(st, os, args[0]);
  if (!path) return berr(os, "exec", args[0] + ": not found", 127);
  ExecCmd ex;
  ex.path = join_path(st.cwd, *path);
  ex.name = args[0];
  ex.args = Fields(args.begin() + 1, args.end());
  ex.env = export_env(st, {});
  r.continuation = mk(std::move(ex));
  return r;
}

// --- mandatory builtins

inline BuiltinOutcome builtin_cd(ShellState& st, OsInterface& os, const Fields& args) {
  bool physical = false;
  size_t i = 0;
  for (; i < args.size(); i++) {
    if (args[i] == "-P") physical = true;
    else if (args[i] == "-L") physical = false;
    else if (args[i] == "--") { i++; break; }
    else break;
  }
  Str target;
  bool print_dir = false;
  if (i >= args.size()) {
    auto home = lookup(st, "HOME");
    if (!home || home->empty()) {
      diag(os, "cd", "HOME not set");
      return bstatus(2);
    }
    target = *home;
  } else if (args[i] == "-") {
    auto old = lookup(st, "OLDPWD");
    if (!old) {
      diag(os, "cd", "OLDPWD not set");
      return bstatus(2);
    }
    target = *old;
    print_dir = true;
  } else {
    target = args[i];
  }
  // CDPATH search for relative paths not starting with '.' components
  Str chosen;
  if (!target.empty() && target[0] != '/' && target.rfind("./", 0) != 0 &&
      target.rfind("../", 0) != 0 && target != "." && target != "..") {
    Str cdpath = lookup(st, "CDPATH").value_or("");
    size_t p = 0;
    while (!cdpath.empty() && p <= cdpath.size()) {
      size_t q = cdpath.find(':', p);
      if (q == Str::npos) q = cdpath.size();
      Str entry = cdpath.substr(p, q - p);
      Str cand = entry.empty() ? target : entry + "/" + target;
      Str abs_cand = join_path(st.cwd, cand);
      auto info = os.stat_path(abs_cand, true);
      if (info && info->kind == FileKind::Directory) {
        chosen = abs_cand;
        if (!entry.empty()) print_dir = true;
        break;
      }
      if (q == cdpath.size()) break;
      p = q + 1;
    }
  }
  Str newcwd = !chosen.empty() ? chosen : join_path(st.cwd, target);
  auto r = os.chdir_os(newcwd);
  if (!r.ok()) {
    diag(os, "cd", "can't cd to " + target);
    return bstatus(2);
  }
  if (physical) newcwd = os.getcwd_os();
  Str oldpwd = st.cwd;
  st.cwd = newcwd;
  set_global(st, "OLDPWD", oldpwd);
  set_global(st, "PWD", newcwd);
  st.export_set.insert("PWD");
  st.export_set.insert("OLDPWD");
  if (print_dir) out_bytes(os, newcwd + "\n");
  return bstatus(0);
}

inline BuiltinOutcome builtin_pwd(ShellState& st, OsInterface& os, const Fields& args) {
  bool physical = !args.empty() && args[0] == "-P";
  out_bytes(os, (physical ? os.getcwd_os() : st.cwd) + "\n");
  return bstatus(0);
}

inline BuiltinOutcome builtin_read(ShellState& st, OsInterface& os, const Fields& args) {
  bool raw = false;
  size_t i = 0;
  for (; i < args.size(); i++) {
    if (args[i] == "-r") raw = true;
    else if (args[i] == "--") { i++; break; }
    else break;
  }
  if (i >= args.size()) {
    diag(os, "read", "variable name required");
    return bstatus(2);
  }
  std::vector<Str> names(args.begin() + i, args.end());
  for (auto& n : names)
    if (!valid_name(n)) {
      diag(os, "read", n + ": bad variable name");
      return bstatus(2);
    }
  auto line = os.read_line(0, !raw);
  if (line.kind == ReadLineResult::Kind::Error) {
    diag(os, "read", line.error);
    return bstatus(2);
  }
  bool eof = line.kind == ReadLineResult::Kind::Eof;
  const Str& text = line.bytes;

  // byte stream with backslash protection (unless -r)
  std::vector<std::pair<char, bool>> chars;  // (byte, protected)
  for (size_t k = 0; k < text.size(); k++) {
    if (!raw && text[k] == '\\' && k + 1 < text.size()) {
      chars.push_back({text[k + 1], true});
      k++;
    } else if (!raw && text[k] == '\\') {
      // trailing backslash with nothing after: drop
    } else {
      chars.push_back({text[k], false});
    }
  }
  Str ifs = ifs_value(st);
  auto is_ws = [&](std::pair<char, bool> c) { return !c.second && ifs_ws(c.first, ifs); };
  auto is_delim = [&](std::pair<char, bool> c) {
    return !c.second && ifs.find(c.first) != Str::npos;
  };
  size_t pos = 0, n = chars.size();
  Fields values;
  while (pos < n && is_ws(chars[pos])) pos++;
  for (size_t v = 0; v + 1 < names.size() && pos < n; v++) {
    Str field;
    while (pos < n && !is_delim(chars[pos])) field += chars[pos++].first;
    values.push_back(field);
    if (pos < n) {
      bool nonws = !is_ws(chars[pos]);
      pos++;
      if (nonws) {
        while (pos < n && is_ws(chars[pos])) pos++;
      } else {
        while (pos < n && is_ws(chars[pos])) pos++;
        if (pos < n && is_delim(chars[pos]) && !is_ws(chars[pos])) pos++;
      }
    }
  }
  if (pos < n) {
    // last variable takes the remainder, trailing IFS whitespace trimmed
    size_t end = n;
    while (end > pos && is_ws(chars[end - 1])) end--;
    Str rest;
    for (size_t k = pos; k < end; k++) rest += chars[k].first;
    values.push_back(rest);
  }
  int status = eof && text.empty() ? 1 : 0;
  for (size_t v = 0; v < names.size(); v++) {
    Str value = v < values.size() ? values[v] : Str();
    if (auto err = set_global(st, names[v], value)) {
      diag(os, "read", err->name + ": is read only");
      return bstatus(2);
    }
  }
  return bstatus(status);
}

inline BuiltinOutcome builtin_getopts(ShellState& st, OsInterface& os, const Fields& args) {
  if (args.size() < 2) {
    diag(os, "getopts", "usage: getopts optstring name [arg...]");
    return bstatus(2);
  }
  Str optstring = args[0];
  Str varname = args[1];
  if (!valid_name(varname)) {
    diag(os, "getopts", varname + ": bad variable name");
    return bstatus(2);
  }
  bool silent = !optstring.empty() && optstring[0] == ':';
  Fields argv(args.begin() + 2, args.end());
  if (argv.empty()) argv = st.positional;
  auto arg_at = [&](long k) -> const Str& { return argv[k - 1]; };  // 1-based
  long nargs = static_cast<long>(argv.size());

  long ind = 1;
  if (auto v = lookup(st, "OPTIND")) {
    if (auto p = parse_int(*v); p && *p >= 1) ind = *p;
  }
  std::optional<int> off = st.getopts_offset;

  auto finish = [&](long new_ind, std::optional<int> new_off, const Str& var_value,
                    std::optional<Str> optarg, int status) {
    set_global(st, "OPTIND", std::to_string(new_ind));
    st.getopts_offset = new_off;
    set_global(st, varname, var_value);
    if (optarg) set_global(st, "OPTARG", *optarg);
    return bstatus(status);
  };

  Str group;
  int at = 0;
  if (off && ind >= 2 && ind - 1 <= nargs &&
      static_cast<size_t>(*off) < arg_at(ind - 1).size()) {
    group = arg_at(ind - 1);  // still inside the previous (consumed) argument
    at = *off;
  } else {
    if (ind > nargs) return finish(ind, std::nullopt, "?", std::nullopt, 1);
    group = arg_at(ind);
    if (group == "--") return finish(ind + 1, std::nullopt, "?", std::nullopt, 1);
    if (group.size() < 2 || group[0] != '-')
      return finish(ind, std::nullopt, "?", std::nullopt, 1);
    ind++;  // the whole argument is consumed up front (early increment)
    at = 1;
  }
  char c = group[at];
  std::optional<int> next_off;
  if (static_cast<size_t>(at + 1) < group.size()) next_off = at + 1;

  size_t ospos = optstring.find(c);
  bool known = c != ':' && ospos != Str::npos;
  if (!known) {
    if (silent)
      return finish(ind, next_off, "?", Str(1, c), 0);
    diag(os, "getopts", Str("illegal option -") + c);
    return finish(ind, next_off, "?", std::nullopt, 0);
  }
  bool wants_arg = ospos + 1 < optstring.size() && optstring[ospos + 1] == ':';
  if (!wants_arg) return finish(ind, next_off, Str(1, c), std::nullopt, 0);
  // option argument: rest of the group, or the next argument
  if (next_off) {
    Str optarg = group.substr(*next_off);
    return finish(ind, std::nullopt, Str(1, c), optarg, 0);
  }
  if (ind > nargs) {
    if (silent) return finish(ind, std::nullopt, ":", Str(1, c), 0);
    diag(os, "getopts", Str("option requires an argument -") + c);
    return finish(ind, std::nullopt, "?", std::nullopt, 0);
  }
  Str optarg = arg_at(ind);
  return finish(ind + 1, std::nullopt, Str(1, c), optarg, 0);
}

inline BuiltinOutcome builtin_kill(ShellState& st, OsInterface& os, const Fields& args) {
  Sig sig = Sig::TERM;
  size_t i = 0;
  if (i < args.size() && args[i] == "-l") {
    Str out;
    for (auto& [s, name] : signal_table())
      if (s != Sig::EXIT) out += Str(name) + "\n";
    out_bytes(os, out);
    return bstatus(0);
  }
  if (i < args.size() && args[i] == "-s") {
    if (i + 1 >= args.size()) {
      diag(os, "kill", "option -s requires a signal");
      return bstatus(2);
    }
    auto s = signal_from_name(args[i + 1]);
    if (!s) {
      diag(os, "kill", args[i + 1] + ": bad signal");
      return bstatus(2);
    }
    sig = *s;
    i += 2;
  } else if (i < args.size() && args[i].size() > 1 && args[i][0] == '-' &&
             args[i] != "--") {
    auto s = signal_from_name(args[i].substr(1));
    if (!s) {
      diag(os, "kill", args[i] + ": bad signal");
      return bstatus(2);
    }
    sig = *s;
    i++;
  }
  if (i < args.size() && args[i] == "--") i++;
  if (i >= args.size()) {
    diag(os, "kill", "pid argument required");
    return bstatus(2);
  }
  int status = 0;
  for (; i < args.size(); i++) {
    auto pid = parse_int(args[i]);
    if (!pid) {
      diag(os, "kill", args[i] + ": bad pid");
      status = 1;
      continue;
    }
    if (!os.send_signal(*pid, sig)) {
      diag(os, "kill", args[i] + ": no such process");
      status = 1;
    }
  }
  (void)st;
  return bstatus(status);
}

inline BuiltinOutcome builtin_wait(ShellState& st, OsInterface& os, const Fields& args) {
  int status = 0;
  if (args.empty()) {
    for (auto& [id, job] : st.jobs)
      for (auto& m : job.members)
        if (!m.status) m.status = os.wait_pid(m.pid);
    return bstatus(0);
  }
  for (auto& a : args) {
    auto pid = parse_int(a);
    if (!pid) {
      diag(os, "wait", a + ": bad pid");
      status = 2;
      continue;
    }
    bool known = false;
    for (auto& [id, job] : st.jobs) {
      for (auto& m : job.members) {
        if (m.pid == *pid) {
          known = true;
          if (!m.status) m.status = os.wait_pid(m.pid);
          status = *m.status;
        }
      }
    }
    if (!known) status = 127;  // unknown pid
  }
  return bstatus(status);
}

inline BuiltinOutcome builtin_umask(ShellState&, OsInterface& os, const Fields& args) {
  if (args.empty()) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "%04o\n", os.umask_get());
    out_bytes(os, buf);
    return bstatus(0);
  }
  const Str& a = args[0];
  if (a.empty() || a.find_first_not_of("01234567") != Str::npos) {
    diag(os, "umask", a + ": bad octal mask");
    return bstatus(1);
  }
  os.umask_set(static_cast<int>(std::strtol(a.c_str(), nullptr, 8)));
  return bstatus(0);
}

inline BuiltinOutcome builtin_alias(ShellState& st, OsInterface& os, const Fields& args) {
  if (args.empty()) {
    for (auto& [n, v] : st.aliases) out_bytes(os, n + "=" + shquote(v) + "\n");
    return bstatus(0);
  }
  int status = 0;
  for (auto& a : args) {
    size_t eq = a.find('=');
    if (eq == Str::npos) {
      auto it = st.aliases.find(a);
      if (it == st.aliases.end()) {
        diag(os, "alias", a + ": not found");
        status = 1;
      } else {
        out_bytes(os, it->first + "=" + shquote(it->second) + "\n");
      }
    } else {
      st.aliases[a.substr(0, eq)] = a.substr(eq + 1);
    }
  }
  return bstatus(status);
}

inline BuiltinOutcome builtin_unalias(ShellState& st, OsInterface& os, const Fields& args) {
  if (!args.empty() && args[0] == "-a") {
    st.aliases.clear();
    return bstatus(0);
  }
  int status = 0;
  for (auto& a : args) {
    if (!st.aliases.erase(a)) {
      diag(os, "unalias", a + ": not found");
      status = 1;
    }
  }
  return bstatus(status);
}

inline Str describe_command(ShellState& st, OsInterface& os, const Str& name,
                            bool verbose, bool& found) {
  static const std::set<Str> keywords = {"if", "then", "else", "elif", "fi", "do",
                                         "done", "case", "esac", "while", "until",
                                         "for", "{", "}", "!", "in"};
  found = true;
  if (keywords.count(name))
    return verbose ? name + " is a shell keyword" : name;
  if (auto it = st.aliases.find(name); it != st.aliases.end())
    return verbose ? name + " is an alias for " + it->second
                   : "alias " + name + "=" + shquote(it->second);
  auto kind = dispatch(name);
  if (kind == BuiltinKind::Special)
    return verbose ? name + " is a special shell builtin" : name;
  if (st.functions.count(name)) return verbose ? name + " is a shell function" : name;
  if (kind == BuiltinKind::Mandatory || kind == BuiltinKind::Extra)
    return verbose ? name + " is a shell builtin" : name;
  if (auto path = resolve_path(st, os, name)) {
    Str abs = join_path(st.cwd, *path);
    return verbose ? name + " is " + abs : abs;
  }
  found = false;
  return name + ": not found";
}

inline BuiltinOutcome builtin_type(ShellState& st, OsInterface& os, const Fields& args) {
  int status = 0;
  for (auto& a : args) {
    bool found;
    Str text = describe_command(st, os, a, true, found);
    if (found) out_bytes(os, text + "\n");
    else {
      err_bytes(os, "smolsh: type: " + text + "\n");
      status = 127;
    }
  }
  return bstatus(status);
}

inline BuiltinOutcome builtin_hash(ShellState& st, OsInterface& os, const Fields& args) {
  if (!args.empty() && args[0] == "-r") {
    st.hash_table.clear();
    return bstatus(0);
  }
  if (args.empty()) {
    for (auto& [n, p] : st.hash_table) out_bytes(os, n + "=" + p + "\n");
    return bstatus(0);
  }
  int status = 0;
  for (auto& a : args) {
    // the table is user-visible bookkeeping; resolution never consults it
    if (auto path = resolve_path(st, os, a)) {
      st.hash_table[a] = join_path(st.cwd, *path);
    } else if (dispatch(a) == BuiltinKind::None && !st.functions.count(a)) {
      diag(os, "hash", a + ": not found");
      status = 1;
    }
  }
  return bstatus(status);
}

inline BuiltinOutcome builtin_command_v(ShellState& st, OsInterface& os,
                                        const Fields& args, bool verbose) {
  int status = 0;
  for (auto& a : args) {
    bool found;
    Str text = describe_command(st, os, a, verbose, found);
    if (found) out_bytes(os, text + "\n");
    else status = 127;
  }
  return bstatus(status);
}

// --- extras

inline BuiltinOutcome builtin_echo(ShellState&, OsInterface& os, const Fields& args) {
  size_t i = 0;
  bool newline = true;
  if (!args.empty() && args[0] == "-n") {
    newline = false;
    i = 1;
  }
  Str out;
  for (size_t k = i; k < args.size(); k++) out += (k > i ? " " : "") + args[k];
  if (newline) out += "\n";
  out_bytes(os, out);
  return bstatus(0);
}

inline BuiltinOutcome builtin_printf(ShellState&, OsInterface& os, const Fields& args) {
  if (args.empty()) {
    diag(os, "printf", "format argument required");
    return bstatus(2);
  }
  const Str& format = args[0];
  size_t argi = 1;
  int status = 0;
  Str out;
  auto next_arg = [&]() -> Str {
    if (argi < args.size()) return args[argi++];
    return "";
  };
  auto to_long = [&](const Str& s) -> long long {
    if (s.empty()) return 0;
    if (s[0] == '\'' || s[0] == '"')
      return s.size() > 1 ? static_cast<unsigned char>(s[1]) : 0;
    errno = 0;
    char* end = nullptr;
    long long v = std::strtoll(s.c_str(), &end, 0);
    if (end == s.c_str() || (end && *end != '\0')) {
      diag(os, "printf", s + ": not completely converted");
      status = 1;
    }
    return v;
  };
  bool consumed_any = false;
  do {
    consumed_any = false;
    size_t i = 0;
    while (i < format.size()) {
      char c = format[i];
      if (c == '\\' && i + 1 < format.size()) {
        char e = format[i + 1];
        i += 2;
        switch (e) {
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          case 'r': out += '\r'; break;
          case 'a': out += '\a'; break;
          case 'b': out += '\b'; break;
          case 'f': out += '\f'; break;
          case 'v': out += '\v'; break;
          case '\\': out += '\\'; break;
          case '\'': out += '\''; break;
          case '"': out += '"'; break;
          case '0': case '1': case '2': case '3':
          case '4': case '5': case '6': case '7': {
            int value = e - '0';
            int digits = 1;
            while (digits < 3 && i < format.size() && format[i] >= '0' &&
                   format[i] <= '7') {
              value = value * 8 + (format[i] - '0');
              i++;
              digits++;
            }
            out += static_cast<char>(value);
            break;
          }
          default:
            out += '\\';
            out += e;
        }
        continue;
      }
      if (c != '%') {
        out += c;
        i++;
        continue;
      }
      if (i + 1 < format.size() && format[i + 1] == '%') {
        out += '%';
        i += 2;
        continue;
      }
      // %[flags][width][.prec]conv
      size_t j = i + 1;
      Str spec = "%";
      while (j < format.size() && Str("-+ #0").find(format[j]) != Str::npos)
        spec += format[j++];
      while (j < format.size() && std::isdigit(static_cast<unsigned char>(format[j])))
        spec += format[j++];
      if (j < format.size() && format[j] == '.') {
        spec += format[j++];
        while (j < format.size() && std::isdigit(static_cast<unsigned char>(format[j])))
          spec += format[j++];
      }
      if (j >= format.size()) {
        out += spec;
        break;
      }
      char conv = format[j++];
      i = j;
      char buf[512];
      switch (conv) {
        case 's': {
          Str a = next_arg();
          consumed_any = true;
          Str f = spec + "s";
          std::snprintf(buf, sizeof buf, f.c_str(), a.c_str());
          out += buf;
          break;
        }
        case 'c': {
          Str a = next_arg();
          consumed_any = true;
          if (!a.empty()) out += a[0];
          break;
        }
        case 'd': case 'i': {
          long long v = to_long(next_arg());
          consumed_any = true;
          Str f = spec + "lld";
          std::snprintf(buf, sizeof buf, f.c_str(), v);
          out += buf;
          break;
        }
        case 'o': case 'u': case 'x': case 'X': {
          long long v = to_long(next_arg());
          consumed_any = true;
          Str f = spec + "ll" + conv;
          std::snprintf(buf, sizeof buf, f.c_str(),
                        static_cast<unsigned long long>(v));
          out += buf;
          break;
        }
        default:
          diag(os, "printf", Str("%") + conv + ": invalid directive");
          out_bytes(os, out);
          return bstatus(1);
      }
    }
  } while (argi < args.size() && consumed_any);
  out_bytes(os, out);
  return bstatus(status);
}

// --- test / [

struct TestEval {
  ShellState& st;
  OsInterface& os;
  const Fields& a;
  size_t pos = 0;
  bool err = false;
  Str err_msg;

  bool at_end() const { return pos >= a.size(); }
  const Str& peek() const { return a[pos]; }
  Str take() { return a[pos++]; }

  static bool is_unary_op(const Str& s) {
    return s.size() == 2 && s[0] == '-' && Str("bcdefghLnprSstuwxz").find(s[1]) != Str::npos;
  }
  static bool is_binary_op(const Str& s) {
    return s == "=" || s == "!=" || s == "-eq" || s == "-ne" || s == "-gt" ||
           s == "-ge" || s == "-lt" || s == "-le";
  }

  long to_int(const Str& s) {
    auto v = parse_int(s);
    if (!v) {
      err = true;
      err_msg = s + ": integer expression expected";
      return 0;
    }
    return *v;
  }

  bool unary(const Str& op, const Str& arg) {
    Str path = arg.empty() ? arg : (arg[0] == '/' ? arg : join_path(st.cwd, arg));
    switch (op[1]) {
      case 'n': return !arg.empty();
      case 'z': return arg.empty();
      case 't': {
        auto fd = parse_int(arg);
        return fd && os.fd_is_tty(static_cast<int>(*fd));
      }
      case 'e': return os.stat_path(path, true).has_value();
      case 'f': {
        auto i = os.stat_path(path, true);
        return i && i->kind == FileKind::Regular;
      }
      case 'd': {
        auto i = os.stat_path(path, true);
        return i && i->kind == FileKind::Directory;
      }
      case 'h': case 'L': {
        auto i = os.stat_path(path, false);
        return i && i->kind == FileKind::Symlink;
      }
      case 'b': {
        auto i = os.stat_path(path, true);
        return i && i->kind == FileKind::BlockDev;
      }
      case 'c': {
        auto i = os.stat_path(path, true);
        return i && i->kind == FileKind::CharDev;
      }
      case 'p': {
        auto i = os.stat_path(path, true);
        return i && i->kind == FileKind::Fifo;
      }
      case 'S': {
        auto i = os.stat_path(path, true);
        return i && i->kind == FileKind::Socket;
      }
      case 's': {
        auto i = os.stat_path(path, true);
        return i && i->size > 0;
      }
      case 'g': {
        auto i = os.stat_path(path, true);
        return i && (i->perms & 02000);
      }
      case 'u': {
        auto i = os.stat_path(path, true);
        return i && (i->perms & 04000);
      }
      case 'r': return os.file_readable(path);
      case 'w': return os.file_writable(path);
      case 'x': return os.file_executable(path);
    }
    return false;
  }

  bool binary(const Str& l, const Str& op, const Str& r) {
    if (op == "=") return l == r;
    if (op == "!=") return l != r;
    long a1 = to_int(l), b1 = to_int(r);
    if (op == "-eq") return a1 == b1;
    if (op == "-ne") return a1 != b1;
    if (op == "-gt") return a1 > b1;
    if (op == "-ge") return a1 >= b1;
    if (op == "-lt") return a1 < b1;
    if (op == "-le") return a1 <= b1;
    return false;
  }

  // expression grammar with -a/-o/!/( ) for five or more arguments
  bool oexpr() {
    bool v = aexpr();
    while (!at_end() && peek() == "-o") {
      take();
      bool r = aexpr();
      v = v || r;
    }
    return v;
  }
  bool aexpr() {
    bool v = nexpr();
    while (!at_end() && peek() == "-a") {
      take();
      bool r = nexpr();
      v = v && r;
    }
    return v;
  }
  bool nexpr() {
    if (!at_end() && peek() == "!") {
      take();
      return !nexpr();
    }
    return primary();
  }
  bool primary() {
    if (at_end()) {
      err = true;
      err_msg = "argument expected";
      return false;
    }
    Str t = take();
    if (t == "(") {
      bool v = oexpr();
      if (at_end() || take() != ")") {
        err = true;
        err_msg = "closing paren expected";
      }
      return v;
    }
    if (is_unary_op(t) && !at_end()) return unary(t, take());
    // binary?
    if (!at_end() && is_binary_op(peek())) {
      Str op = take();
      if (at_end()) {
        err = true;
        err_msg = "argument expected";
        return false;
      }
      return binary(t, op, take());
    }
    return !t.empty();
  }
};

inline BuiltinOutcome builtin_test(ShellState& st, OsInterface& os, Fields args,
                                   bool bracket) {
  if (bracket) {
    if (args.empty() || args.back() != "]") {
      diag(os, "[", "missing ]");
      return bstatus(2);
    }
    args.pop_back();
  }
  const char* who = bracket ? "[" : "test";
  bool value = false;
  size_t n = args.size();
  TestEval ev{st, os, args, 0, false, {}};
  if (n == 0) {
    value = false;
  } else if (n == 1) {
    value = !args[0].empty();
  } else if (n == 2) {
    if (args[0] == "!") value = args[1].empty();
    else if (TestEval::is_unary_op(args[0])) value = ev.unary(args[0], args[1]);
    else {
      diag(os, who, args[0] + ": unexpected operator");
      return bstatus(2);
    }
  } else if (n == 3) {
    if (TestEval::is_binary_op(args[1])) value = ev.binary(args[0], args[1], args[2]);
    else if (args[0] == "!") {
      Fields rest(args.begin() + 1, args.end());
      auto r = builtin_test(st, os, rest, false);
      if (r.status == 2) return r;
      value = r.status != 0;
    } else if (args[0] == "(" && args[2] == ")") {
      value = !args[1].empty();
    } else {
      value = ev.oexpr();
    }
  } else if (n == 4 && args[0] == "!") {
    Fields rest(args.begin() + 1, args.end());
    auto r = builtin_test(st, os, rest, false);
    if (r.status == 2) return r;
    value = r.status != 0;
  } else {
    value = ev.oexpr();
    if (!ev.err && !ev.at_end()) {
      ev.err = true;
      ev.err_msg = "too many arguments";
    }
  }
  if (ev.err) {
    diag(os, who, ev.err_msg);
    return bstatus(2);
  }
  return bstatus(value ? 0 : 1);
}

}  // namespace builtin_detail

// Runs a builtin by name. `command -v/-V` is handled here; the plain
// `command` prefix is resolved by run_cmd in the evaluation module.
inline BuiltinOutcome run_builtin(ShellState& st, OsInterface& os, const Str& name,
                                  const Fields& args, bool simple_invocation = false) {
  using namespace builtin_detail;
  switch (dispatch(name)) {
    case BuiltinKind::Unsupported:
      diag(os, name, "unsupported (job control and history are out of scope)");
      return bstatus(127);
    case BuiltinKind::None:
      diag(os, name, "not a builtin");
      return bstatus(127);
    default:
      break;
  }
  if (name == ":") return bstatus(0);
  if (name == "true") return bstatus(0);
  if (name == "false") return bstatus(1);
  if (name == "break") return builtin_break_continue(st, os, args, true);
  if (name == "continue") return builtin_break_continue(st, os, args, false);
  if (name == ".") return builtin_dot(st, os, args, simple_invocation);
  if (name == "eval") return builtin_eval(st, os, args, simple_invocation);
  if (name == "exec") return builtin_exec(st, os, args);
  if (name == "exit") return builtin_exit(st, os, args);
  if (name == "export") return builtin_export_readonly(st, os, args, false);
  if (name == "readonly") return builtin_export_readonly(st, os, args, true);
  if (name == "return") return builtin_return(st, os, args);
  if (name == "set") return builtin_set(st, os, args);
  if (name == "shift") return builtin_shift(st, os, args);
  if (name == "times") return builtin_times(st, os, args);
  if (name == "trap") return builtin_trap(st, os, args);
  if (name == "unset") return builtin_unset(st, os, args);
  if (name == "local") return builtin_local(st, os, args);
  if (name == "alias") return builtin_alias(st, os, args);
  if (name == "unalias") return builtin_unalias(st, os, args);
  if (name == "cd") return builtin_cd(st, os, args);
  if (name == "pwd") return builtin_pwd(st, os, args);
  if (name == "read") return builtin_read(st, os, args);
  if (name == "getopts") return builtin_getopts(st, os, args);
  if (name == "kill") return builtin_kill(st, os, args);
  if (name == "wait") return builtin_wait(st, os, args);
  if (name == "umask") return builtin_umask(st, os, args);
  if (name == "type") return builtin_type(st, os, args);
  if (name == "hash") return builtin_hash(st, os, args);
  if (name == "command") {
    // only -v/-V reach here
    bool verbose = !args.empty() && args[0] == "-V";
    Fields rest(args.begin() + (args.empty() ? 0 : 1), args.end());
    return builtin_command_v(st, os, rest, verbose);
  }
  if (name == "echo") return builtin_echo(st, os, args);
  if (name == "printf") return builtin_printf(st, os, args);
  if (name == "test") return builtin_test(st, os, args, false);
  if (name == "[") return builtin_test(st, os, args, true);
  builtin_detail::diag(os, name, "not implemented");
  return builtin_detail::bstatus(127);
}

}  // namespace smolsh

#endif  // SMOLSH_BUILTINS_HPP
