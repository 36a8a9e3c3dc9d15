// smolsh: the shell binary. POSIX sh invocation interface:
//   smolsh [-abCefhimnuvx] [-o option]... [+...] [-c command_string [name arg...]]
//   smolsh ... [-s] [arg...]
//   smolsh ... script_file [arg...]

#include <unistd.h>

#include <cstdio>
#include <iostream>

#include "smolsh/os_system.hpp"
#include "smolsh/os_symbolic.hpp"

using namespace smolsh;

namespace {

void usage(SystemOs& os) {
  os.write_all(2,
               "usage: smolsh [-abCefhimnuvx] [-o option] [+...] "
               "[-c command_string [name [arg...]] | -s [arg...] | file [arg...]]\n");
}

std::map<Str, Str> host_environment(char** envp) {
  std::map<Str, Str> env;
  for (char** e = envp; *e; e++) {
    Str entry = *e;
    size_t eq = entry.find('=');
    if (eq == Str::npos) continue;
    env[entry.substr(0, eq)] = entry.substr(eq + 1);
  }
  return env;
}

struct Invocation {
  bool c_mode = false;
  bool s_mode = false;
  bool interactive_flag = false;
  Str command_string;
  std::vector<Str> operands;
  std::set<Str> enable, disable;
  bool bad = false;
};

const char* option_for_letter(char c) {
  switch (c) {
    case 'a': return "allexport";
    case 'b': return "notify";
    case 'C': return "noclobber";
    case 'e': return "errexit";
    case 'f': return "noglob";
    case 'h': return "hashall";
    case 'm': return "monitor";
    case 'n': return "noexec";
    case 'u': return "nounset";
    case 'v': return "verbose";
    case 'x': return "xtrace";
    default: return nullptr;
  }
}

Invocation parse_invocation(int argc, char** argv) {
  Invocation inv;
  int i = 1;
  for (; i < argc; i++) {
    Str a = argv[i];
    if (a == "--") {
      i++;
      break;
    }
    if (a.size() < 2 || (a[0] != '-' && a[0] != '+')) break;
    bool enable = a[0] == '-';
    if (a == "-o" || a == "+o") {
      if (i + 1 >= argc) {
        inv.bad = true;
        return inv;
      }
      (enable ? inv.enable : inv.disable).insert(argv[++i]);
      continue;
    }
    bool stop = false;
    for (size_t k = 1; k < a.size() && !stop; k++) {
      char c = a[k];
      if (c == 'c' && enable) {
        inv.c_mode = true;
      } else if (c == 's' && enable) {
        inv.s_mode = true;
      } else if (c == 'i') {
        inv.interactive_flag = enable;
        if (enable) inv.enable.insert("interactive");
        else inv.disable.insert("interactive");
      } else if (const char* name = option_for_letter(c)) {
        (enable ? inv.enable : inv.disable).insert(name);
      } else {
        inv.bad = true;
        return inv;
      }
    }
  }
  for (; i < argc; i++) inv.operands.push_back(argv[i]);
  if (inv.c_mode) {
    if (inv.operands.empty()) {
      inv.bad = true;
      return inv;
    }
    inv.command_string = inv.operands.front();
    inv.operands.erase(inv.operands.begin());
  }
  return inv;
}

}  // namespace

int main(int argc, char** argv, char** envp) {
  SystemOs os;
  Invocation inv = parse_invocation(argc, argv);
  if (inv.bad) {
    usage(os);
    return 2;
  }

  ShellState st;
  st.root_pid = os.self_pid();
  st.cwd = os.getcwd_os();
  import_host_env(st, host_environment(envp));
  if (!lookup(st, "IFS")) st.global_env["IFS"] = " \t\n";
  if (!lookup(st, "PS1")) st.global_env["PS1"] = "$ ";
  if (!lookup(st, "PS2")) st.global_env["PS2"] = "> ";
  if (!lookup(st, "PS4")) st.global_env["PS4"] = "+ ";
  if (!lookup(st, "OPTIND")) st.global_env["OPTIND"] = "1";
  if (!lookup(st, "PWD")) st.global_env["PWD"] = st.cwd;
  st.export_set.insert("PWD");
  st.global_env["PPID"] = std::to_string(getppid());
  for (auto& name : inv.enable)
    if (name != "interactive") st.options.insert(name);
  for (auto& name : inv.disable) st.options.erase(name);

  std::shared_ptr<ParseSession> session;
  Str arg0 = "smolsh";
  Fields positional;

  if (inv.c_mode) {
    session = ParseSession::from_string(inv.command_string);
    if (!inv.operands.empty()) {
      arg0 = inv.operands[0];
      positional.assign(inv.operands.begin() + 1, inv.operands.end());
    }
  } else if (inv.s_mode || inv.operands.empty()) {
    session = ParseSession::from_reader([&os]() -> std::optional<Str> {
      auto r = os.read_line(0, false);
      if (r.kind == ReadLineResult::Kind::Eof && r.bytes.empty()) return std::nullopt;
      if (r.kind == ReadLineResult::Kind::Error) return std::nullopt;
      return r.bytes + "\n";
    });
    positional = inv.operands;
  } else {
    Str path = inv.operands[0];
    Str abs = join_path(st.cwd, path);
    auto fd = os.file_redir(RedirMode::Read, abs);
    if (!fd.ok()) {
      os.write_all(2, "smolsh: " + path + ": " + fd.error + "\n");
      return 127;
    }
    auto content = os.read_all(*fd);
    os.close_fd(*fd);
    if (!content.ok()) {
      os.write_all(2, "smolsh: " + path + ": " + content.error + "\n");
      return 127;
    }
    session = ParseSession::from_string(*content);
    arg0 = path;
    positional.assign(inv.operands.begin() + 1, inv.operands.end());
  }
  st.arg0 = arg0;
  st.positional = positional;

  bool interactive =
      inv.interactive_flag ||
      (!inv.c_mode && inv.operands.empty() && os.fd_is_tty(0) && os.fd_is_tty(2));
  if (inv.disable.count("interactive")) interactive = false;
  if (interactive) {
    st.options.insert("interactive");
    session->interactive = true;
    session->prompt_writer = [&os](const Str& p) { os.write_all(2, p); };
  }

  EvalLoop loop;
  loop.pctx = session;
  loop.source_name = arg0;
  loop.interactive = interactive;
  loop.toplevel = true;
  loop.kind = EvalLoopKind::TopLevel;
  loop.exit_on_error = !interactive;

  // Debugging aid: SMOLSH_TRACE=1 mirrors the step trace to fd 9 if open.
  StepHook hook = nullptr;
  std::vector<Str> records;
  Str source_desc = inv.c_mode ? inv.command_string : arg0;
  bool tracing = false;
  {
    const char* t = ::getenv("SMOLSH_TRACE");
    if (t && Str(t) == "1" && os.fd_valid(9)) tracing = true;
  }
  std::map<Str, Str> prev_env = st.global_env;
  int step_no = 0;
  if (tracing) {
    hook = [&](const EvalStep& s, const ShellState& state, const CommandPtr& cmd) {
      EnvDelta delta;
      for (auto& [k, v] : state.global_env) {
        auto old = prev_env.find(k);
        if (old == prev_env.end() || old->second != v) delta[k] = v;
      }
      for (auto& [k, v] : prev_env)
        if (!state.global_env.count(k)) delta[k] = std::nullopt;
      prev_env = state.global_env;
      records.push_back(to_trace_json(step_no++, s.expand_phase ? "expand" : "eval",
                                      s.rule, delta, render(cmd), "", ""));
    };
  }

  int status = evaluate_to_exit(st, os, mk(std::move(loop)), hook);

  if (tracing) {
    Str out = "{\"version\":1,\"source\":" + jsonw::str(source_desc) + ",\"steps\":[";
    for (size_t k = 0; k < records.size(); k++) out += (k ? "," : "") + records[k];
    out += "],\"final\":{\"status\":" + std::to_string(status) +
           ",\"stdout\":\"\",\"stderr\":\"\"}}\n";
    os.write_all(9, out);
  }
  return status;
}
