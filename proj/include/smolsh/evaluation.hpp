// evaluation.hpp: the command small-step machine. One rule fires per step;
// stepping is a total deterministic function of (state, command) up to OS
// call results.

#ifndef SMOLSH_EVALUATION_HPP
#define SMOLSH_EVALUATION_HPP

#include "smolsh/builtins.hpp"
#include "smolsh/expansion.hpp"
#include "smolsh/parser.hpp"

namespace smolsh {

struct EvalStep {
  const char* rule = "";
  bool expand_phase = false;
};

EvalStep step_eval(ShellState& st, OsInterface& os, bool checking, CommandPtr& c);

namespace eval_detail {

inline void write_err(OsInterface& os, const Str& msg) {
  os.write_all(2, "smolsh: " + msg + "\n");
}

// Possibly exit with an expansion/redirection error: message on stderr,
// status set, Exit when b_exit.
inline CommandPtr exp_error(ShellState& st, OsInterface& os, const Fields& msg,
                            bool b_exit, int status = 2) {
  if (!msg.empty()) {
    Str joined;
    for (size_t i = 0; i < msg.size(); i++) joined += (i ? " " : "") + msg[i];
    write_err(os, joined);
  }
  set_status(st, status);
  return b_exit ? mk(ExitCmd{}) : mk(DoneCmd{});
}

inline bool is_special_name(const Str& name) {
  return dispatch(name) == BuiltinKind::Special;
}

inline Word literal_word(const Str& s) {
  Word w;
  w.push_back(lit_elem(s));
  return w;
}

inline void xtrace_emit(ShellState& st, OsInterface& os, const EnvFrag& assigns,
                        const Fields& fields) {
  if (!st.opt("xtrace")) return;
  Str line = lookup(st, "PS4").value_or("+ ");
  bool first = true;
  for (auto& [n, v] : assigns) {
    if (!first) line += " ";
    first = false;
    line += n + "=" + v;
  }
  for (auto& f : fields) {
    if (!first) line += " ";
    first = false;
    line += f;
  }
  os.write_all(2, line + "\n");
}

// ---------------------------------------------------------------------------
// Redirections

inline std::variant<SavedFds, Str> apply_redirs(ShellState& st, OsInterface& os,
                                                const std::vector<ExpandedRedir>& ers);
inline void restore_redirs(ShellState& st, OsInterface& os, const SavedFds& sfds);

inline std::variant<SavedFds, Str> apply_redirs(ShellState& st, OsInterface& os,
                                                const std::vector<ExpandedRedir>& ers) {
  SavedFds sfds;
  auto rollback = [&]() { restore_redirs(st, os, sfds); };
  auto save_fd = [&](Fd fd) -> bool {
    if (sfds.count(fd)) {
      os.close_fd(fd);
      return true;
    }
    if (os.fd_valid(fd)) {
      auto saved = os.close_and_save(fd);
      if (!saved.ok()) return false;
      sfds[fd] = SavedFdRestore{*saved};
    } else {
      sfds[fd] = SavedFdClose{};
    }
    return true;
  };
  for (auto& er : ers) {
    if (auto* f = std::get_if<EFile>(&er.v)) {
      Str path = f->path.empty() ? f->path : join_path(st.cwd, f->path);
      if (f->mode == RedirMode::Write && st.opt("noclobber")) {
        auto info = os.stat_path(path, true);
        if (info && info->kind == FileKind::Regular) {
          rollback();
          return "cannot create " + f->path + ": File exists";
        }
      }
      auto newfd = os.file_redir(f->mode, path);
      if (!newfd.ok()) {
        rollback();
        return "cannot open " + f->path + ": " + newfd.error;
      }
      if (*newfd == f->fd) {
        if (!sfds.count(f->fd)) sfds[f->fd] = SavedFdClose{};
      } else {
        if (!save_fd(f->fd)) {
          os.close_fd(*newfd);
          rollback();
          return "cannot save file descriptor " + std::to_string(f->fd);
        }
        os.renumber(true, *newfd, f->fd);
      }
    } else if (auto* d = std::get_if<EDup>(&er.v)) {
      if (!d->target) {  // n>&- / n<&-: close
        if (!save_fd(d->fd)) {
          rollback();
          return "cannot save file descriptor " + std::to_string(d->fd);
        }
        // save_fd left the fd closed
      } else {
        if (!os.fd_valid(*d->target)) {
          rollback();
          return std::to_string(*d->target) + ": bad file descriptor";
        }
        if (*d->target == d->fd) continue;
        if (!save_fd(d->fd)) {
          rollback();
          return "cannot save file descriptor " + std::to_string(d->fd);
        }
        os.renumber(false, *d->target, d->fd);
      }
    } else if (auto* h = std::get_if<EHere>(&er.v)) {
      auto hfd = os.heredoc(h->body);
      if (!hfd.ok()) {
        rollback();
        return "cannot create heredoc: " + hfd.error;
      }
      if (*hfd == h->fd) {
        if (!sfds.count(h->fd)) sfds[h->fd] = SavedFdClose{};
      } else {
        if (!save_fd(h->fd)) {
          os.close_fd(*hfd);
          rollback();
          return "cannot save file descriptor " + std::to_string(h->fd);
        }
        os.renumber(true, *hfd, h->fd);
      }
    }
  }
  return sfds;
}

// Restores or closes each disturbed fd; best-effort, LIFO across frames.
inline void restore_redirs(ShellState&, OsInterface& os, const SavedFds& sfds) {
  for (auto& [fd, entry] : sfds) {
    if (auto* r = std::get_if<SavedFdRestore>(&entry)) {
      os.renumber(true, r->from, fd);
    } else {
      if (os.fd_valid(fd)) os.close_fd(fd);
    }
  }
}

// ---------------------------------------------------------------------------
// Traps

inline CommandPtr parse_trap_handler(OsInterface& os, const Str& text) {
  auto session = ParseSession::from_string(text);
  CommandPtr all;
  std::map<Str, Str> no_aliases;
  while (true) {
    auto r = parse_next(*session, no_aliases, "", "");
    if (r.kind == ParseResult::Kind::Eof) break;
    if (r.kind == ParseResult::Kind::Blank) continue;
    if (r.kind == ParseResult::Kind::SyntaxError) {
      write_err(os, "trap: " + r.error);
      return nullptr;
    }
    all = all ? mk(Seq{all, r.cmd}) : r.cmd;
  }
  return all ? all : mk(DoneCmd{});
}

// Polls pending signals; wraps c in Trapped frames so the first-delivered
// handler runs first. Ignored signals are discarded; handler parse errors are
// reported and dropped for that delivery.
inline CommandPtr check_traps(ShellState& st, OsInterface& os, CommandPtr c) {
  std::vector<Sig> pending;
  while (auto sig = os.pending_signal()) pending.push_back(*sig);
  for (auto it = pending.rbegin(); it != pending.rend(); ++it) {
    auto h = st.traps.find(*it);
    if (h == st.traps.end() || h->second.empty()) continue;
    CommandPtr handler = parse_trap_handler(os, h->second);
    if (!handler) continue;
    c = mk(Trapped{*it, st.last_status, handler, c});
  }
  return c;
}

// ---------------------------------------------------------------------------
// Command resolution (runCmd)

struct RunOutcome {
  bool error = false;       // resolution/builtin error; RunFail path
  int error_status = 0;
  Fields error_fields;      // printed by expError (may be empty if printed)
  CommandPtr continuation;  // Done / Call frame / Wait / EvalLoop / Exec...
  bool restore = true;
  bool completed = false;   // continuation is Done with a final status
};

inline Pid fork_exec_image(ShellState& st, OsInterface& os, const Str& path,
                           const Str& name, const Fields& args,
                           const std::map<Str, Str>& env) {
  ExecCmd ex;
  ex.path = path;
  ex.name = name;
  ex.args = args;
  ex.env = env;
  return os.fork_shell(make_child_state(st), mk(std::move(ex)));
}

// Resolve a command: special builtin, function, other builtin, then PATH
// executable. The temp-assignment scope is popped here on every path except
// function calls (the Call frame owns it) and special builtins (already
// merged by CmdRunSpecial).
inline RunOutcome run_cmd(ShellState& st, OsInterface& os, bool checking,
                          EnvFrag env_frag, Str name, Fields args,
                          CommandOptions co) {
  (void)checking;
  RunOutcome out;
  bool scope_popped = is_special_name(name) && !co.simple_invocation;

  // `command` prefix: re-resolve, suppressing special severity and function
  // lookup; -v/-V are ordinary builtin queries.
  while (name == "command") {
    if (!args.empty() && (args[0] == "-v" || args[0] == "-V")) break;
    if (args.empty()) {
      if (!scope_popped) pop_scope(st);
      set_status(st, 0);
      out.continuation = mk(DoneCmd{});
      out.completed = true;
      return out;
    }
    co.simple_invocation = true;
    name = args[0];
    args.erase(args.begin());
  }

  auto finish_builtin = [&](const BuiltinOutcome& b) {
    if (!scope_popped) pop_scope(st);
    if (b.is_error) {
      out.error = true;
      out.error_status = b.status;
      return;
    }
    set_status(st, b.status);
    out.continuation = b.continuation ? b.continuation : mk(DoneCmd{});
    out.completed = !b.continuation;
    out.restore = !b.no_restore;
  };

  BuiltinKind kind = dispatch(name);
  if (kind == BuiltinKind::Special) {
    finish_builtin(run_builtin(st, os, name, args, co.simple_invocation));
    return out;
  }
  if (!co.simple_invocation) {
    auto fn = st.functions.find(name);
    if (fn != st.functions.end()) {
      CallFrame call;
      call.saved_loop_depth = st.loop_depth;
      call.saved_positional = st.positional;
      call.fn_name = name;
      call.orig = fn->second;
      call.cur = fn->second;
      st.positional = args;
      if (!st.opt("nonlexicalctrl")) st.loop_depth = 0;
      st.call_depth++;
      out.continuation = mk(std::move(call));
      return out;  // scope stays pushed: the Call frame pops it
    }
  }
  if (kind == BuiltinKind::Mandatory || kind == BuiltinKind::Extra ||
      kind == BuiltinKind::Unsupported) {
    finish_builtin(run_builtin(st, os, name, args, co.simple_invocation));
    return out;
  }

  // executable via $PATH
  auto path = resolve_path(st, os, name, true);
  if (!path) {
    auto exists = resolve_path(st, os, name, false);
    if (!scope_popped) pop_scope(st);
    if (exists && os.file_exists(join_path(st.cwd, *exists))) {
      out.error = true;
      out.error_status = 126;
      out.error_fields = {name + ": cannot execute"};
    } else {
      out.error = true;
      out.error_status = 127;
      out.error_fields = {name + ": not found"};
    }
    return out;
  }
  Str abs = join_path(st.cwd, *path);
  if (name.find('/') != Str::npos) {
    if (!os.file_exists(abs)) {
      if (!scope_popped) pop_scope(st);
      out.error = true;
      out.error_status = 127;
      out.error_fields = {name + ": not found"};
      return out;
    }
    if (!os.file_executable(abs)) {
      if (!scope_popped) pop_scope(st);
      out.error = true;
      out.error_status = 126;
      out.error_fields = {name + ": cannot execute"};
      return out;
    }
  }
  auto env = export_env(st, env_frag);
  if (!scope_popped) pop_scope(st);
  Pid pid = fork_exec_image(st, os, abs, name, args, env);
  out.continuation = mk(WaitCmd{pid, checking, true});
  return out;
}

// Wiring for pipeline members: dup stdin/stdout onto the pipe ends, then
// close every raw pipe fd in the child.
inline std::vector<FdAction> pipeline_wiring(std::optional<Fd> in_fd,
                                             std::optional<Fd> out_fd,
                                             const std::vector<Fd>& all_fds) {
  std::vector<FdAction> actions;
  if (in_fd) actions.push_back(fd_dup2(*in_fd, 0));
  if (out_fd) actions.push_back(fd_dup2(*out_fd, 1));
  for (Fd fd : all_fds) actions.push_back(fd_close(fd));
  return actions;
}

// Reap the remaining members of the job containing pid (foreground
// pipelines): once the last member exits, the earlier ones die of SIGPIPE.
inline void reap_job_siblings(ShellState& st, OsInterface& os, Pid pid) {
  for (auto& [id, job] : st.jobs) {
    bool ours = false;
    for (auto& m : job.members)
      if (m.pid == pid) ours = true;
    if (!ours) continue;
    for (auto& m : job.members) {
      if (m.pid == pid && !m.status) m.status = st.last_status;
      if (!m.status) m.status = os.wait_pid(m.pid);
    }
    return;
  }
}

}  // namespace eval_detail

// ---------------------------------------------------------------------------
// step_eval

inline EvalStep step_eval(ShellState& st, OsInterface& os, bool checking,
                          CommandPtr& c) {
  using namespace eval_detail;
  EvalStep step;
  auto rule = [&](const char* r) { step.rule = r; };

  // ---- source forms ------------------------------------------------------
  if (auto* s = as<Simple>(c)) {
    CmdArgs next;
    next.assigns = s->assigns;
    next.es = es_start(ExpansionOptions{true, true}, s->words);
    next.redirs = s->redirs;
    next.co = CommandOptions{};
    c = mk(std::move(next));
    rule("CmdStart");
    return step;
  }
  if (auto* n = as<Not>(c)) {
    CommandPtr body = n->cmd;
    if (is_control(body) && !is_done(body)) {
      c = body;
      rule("NotCtrl");
      return step;
    }
    if (is_done(body)) {
      if (st.last_status == 0) {
        set_status(st, 1);
        rule("NotSuccess");
      } else {
        set_status(st, 0);
        rule("NotFail");
      }
      c = mk(DoneCmd{});
      return step;
    }
    EvalStep inner = step_eval(st, os, true, body);
    c = mk(Not{body});
    return inner;
  }
  if (auto* s = as<Seq>(c)) {
    CommandPtr c1 = s->c1;
    if (is_done(c1)) {
      c = s->c2;
      rule("SeqNext");
      return step;
    }
    if (is_control(c1)) {
      c = c1;
      rule("SeqCtrl");
      return step;
    }
    EvalStep inner = step_eval(st, os, checking, c1);
    c = mk(Seq{c1, s->c2});
    return inner;
  }
  if (auto* a = as<And>(c)) {
    CommandPtr c1 = a->c1;
    if (is_done(c1)) {
      if (st.last_status == 0) {
        c = a->c2;
        rule("AndTrue");
      } else {
        c = mk(DoneCmd{});
        rule("AndFalse");
      }
      return step;
    }
    if (is_control(c1)) {
      c = c1;
      rule("AndCtrl");
      return step;
    }
    EvalStep inner = step_eval(st, os, true, c1);
    c = mk(And{c1, a->c2});
    return inner;
  }
  if (auto* o = as<Or>(c)) {
    CommandPtr c1 = o->c1;
    if (is_done(c1)) {
      if (st.last_status != 0) {
        c = o->c2;
        rule("OrFalse");
      } else {
        c = mk(DoneCmd{});
        rule("OrTrue");
      }
      return step;
    }
    if (is_control(c1)) {
      c = c1;
      rule("OrCtrl");
      return step;
    }
    EvalStep inner = step_eval(st, os, true, c1);
    c = mk(Or{c1, o->c2});
    return inner;
  }
  if (auto* i = as<If>(c)) {
    CommandPtr cond = i->cond;
    if (is_done(cond)) {
      if (st.last_status == 0) {
        c = i->then_cmd;
        rule("IfThen");
      } else if (i->else_cmd) {
        c = i->else_cmd;
        rule("IfElse");
      } else {
        set_status(st, 0);
        c = mk(DoneCmd{});
        rule("IfNone");
      }
      return step;
    }
    if (is_control(cond)) {
      c = cond;
      rule("IfCtrl");
      return step;
    }
    EvalStep inner = step_eval(st, os, true, cond);
    c = mk(If{cond, i->then_cmd, i->else_cmd});
    return inner;
  }
  if (auto* w = as<While>(c)) {
    st.loop_depth++;
    c = mk(WhileCond{w->cond, w->cond, w->body, 0});
    rule("WhileBegin");
    return step;
  }
  if (auto* f = as<For>(c)) {
    c = mk(ForArgs{f->var, es_start(ExpansionOptions{true, true}, f->words), f->body});
    rule("ForBegin");
    return step;
  }
  if (auto* cs = as<Case>(c)) {
    c = mk(CaseArg{es_start(ExpansionOptions{false, false}, cs->scrutinee),
                   cs->branches});
    rule("CaseBegin");
    return step;
  }
  if (auto* fd = as<FnDef>(c)) {
    st.functions[fd->name] = fd->body;
    set_status(st, 0);
    c = mk(DoneCmd{});
    rule("FnDef");
    return step;
  }
  if (auto* sub = as<Subshell>(c)) {
    Pid pid = os.fork_shell(make_child_state(st), sub->cmd);
    c = mk(WaitCmd{pid, checking, true});
    rule("SubshellFork");
    return step;
  }
  if (auto* bg = as<Background>(c)) {
    std::vector<FdAction> wiring;
    if (!st.opt("monitor")) wiring.push_back(fd_devnull(0));
    Pid pid = os.fork_shell(make_child_state(st), bg->cmd, wiring);
    JobInfo job;
    job.id = st.next_job_id++;
    job.members.push_back({pid, bg->cmd, std::nullopt});
    job.leader = pid;
    job.command = bg->cmd;
    st.jobs[job.id] = job;
    st.last_bg_pid = pid;
    set_status(st, 0);
    c = mk(DoneCmd{});
    rule("BgFork");
    return step;
  }
  if (auto* p = as<Pipeline>(c)) {
    size_t n = p->commands.size();
    std::vector<std::pair<Fd, Fd>> pipes;
    std::vector<Fd> all_fds;
    for (size_t i = 0; i + 1 < n; i++) {
      auto pr = os.make_pipe();
      if (!pr.ok()) {
        for (auto& [r, w] : pipes) {
          os.close_fd(r);
          os.close_fd(w);
        }
        c = exp_error(st, os, {"cannot create pipe: " + pr.error},
                      !checking && st.opt("errexit"));
        rule("PipeErr");
        return step;
      }
      pipes.push_back(*pr);
      all_fds.push_back((*pr).first);
      all_fds.push_back((*pr).second);
    }
    JobInfo job;
    job.id = st.next_job_id++;
    job.command = c;
    std::vector<Pid> pids;
    for (size_t i = 0; i < n; i++) {
      std::optional<Fd> in_fd, out_fd;
      if (i > 0) in_fd = pipes[i - 1].first;
      if (i + 1 < n) out_fd = pipes[i].second;
      Pid pid = os.fork_shell(make_child_state(st), p->commands[i],
                              pipeline_wiring(in_fd, out_fd, all_fds));
      pids.push_back(pid);
      job.members.push_back({pid, p->commands[i], std::nullopt});
    }
    for (Fd fd : all_fds) os.close_fd(fd);
    job.leader = pids.front();
    st.jobs[job.id] = job;
    if (p->background) {
      st.last_bg_pid = pids.back();
      set_status(st, 0);
      c = mk(DoneCmd{});
      rule("BgPipeFork");
    } else {
      c = mk(WaitCmd{pids.back(), checking, true});
      rule("PipeFork");
    }
    return step;
  }
  if (auto* r = as<Redirected>(c)) {
    RedirState rs;
    rs.todo = r->redirs;
    c = mk(RedirWrap{r->cmd, std::move(rs)});
    rule("RedirBegin");
    return step;
  }

  // ---- runtime forms -----------------------------------------------------
  if (auto* ca = as<CmdArgs>(c)) {
    if (auto* err = std::get_if<EsError>(&ca->es.v)) {
      Fields f = err->f;
      c = exp_error(st, os, f, !st.interactive());
      rule("CmdArgErr");
      return step;
    }
    if (auto* done = std::get_if<EsDone>(&ca->es.v)) {
      CmdRedirs next;
      next.assigns = ca->assigns;
      next.fields = done->f;
      next.rs.todo = ca->redirs;
      next.co = ca->co;
      c = mk(std::move(next));
      rule("CmdArgDone");
      return step;
    }
    CmdArgs copy = *ca;
    auto r = step_expansion(st, os, copy.es);
    copy.co.did_cmd_subst = copy.co.did_cmd_subst || r.did_cmd_subst;
    c = mk(std::move(copy));
    step.rule = r.rule;
    step.expand_phase = true;
    return step;
  }
  if (auto* cr = as<CmdRedirs>(c)) {
    CmdRedirs copy = *cr;
    Str cmd_name = copy.fields.empty() ? Str() : copy.fields[0];
    bool special_exit = !cmd_name.empty() && is_special_name(cmd_name) &&
                        !copy.co.simple_invocation && !st.interactive();
    if (copy.rs.in_progress) {
      auto& ip = *copy.rs.in_progress;
      if (auto* err = std::get_if<EsError>(&ip.es.v)) {
        Fields f = err->f;
        c = exp_error(st, os, f, special_exit);
        rule("CmdRedirErr");
        return step;
      }
      if (auto* done = std::get_if<EsDone>(&ip.es.v)) {
        // build the expanded redirection
        Fields f = done->f;
        if (auto* fr = std::get_if<FileRedir>(&ip.r.v)) {
          if (f.size() != 1 || f[0].empty()) {
            c = exp_error(st, os, {"ambiguous redirect"}, special_exit);
            rule("CmdRedirErr");
            return step;
          }
          copy.rs.done.push_back({EFile{fr->mode, fr->fd, f[0]}});
        } else if (auto* dr = std::get_if<DupRedir>(&ip.r.v)) {
          if (f.size() != 1 || f[0].empty()) {
            c = exp_error(st, os, {"ambiguous redirect"}, special_exit);
            rule("CmdRedirErr");
            return step;
          }
          if (f[0] == "-") {
            copy.rs.done.push_back({EDup{dr->dir, dr->fd, std::nullopt}});
          } else if (f[0].find_first_not_of("0123456789") == Str::npos) {
            copy.rs.done.push_back({EDup{dr->dir, dr->fd, std::atoi(f[0].c_str())}});
          } else {
            c = exp_error(st, os, {f[0] + ": ambiguous redirect"}, special_exit);
            rule("CmdRedirErr");
            return step;
          }
        } else if (auto* hr = std::get_if<HereRedir>(&ip.r.v)) {
          Str body;
          for (auto& fld : f) body += fld;
          copy.rs.done.push_back({EHere{hr->kind, hr->fd, body}});
        }
        copy.rs.in_progress.reset();
        c = mk(std::move(copy));
        rule("CmdRedir");
        return step;
      }
      auto r = step_expansion(st, os, ip.es);
      copy.co.did_cmd_subst = copy.co.did_cmd_subst || r.did_cmd_subst;
      c = mk(std::move(copy));
      step.rule = r.rule;
      step.expand_phase = true;
      return step;
    }
    if (!copy.rs.todo.empty()) {
      Redirection r = copy.rs.todo.front();
      copy.rs.todo.erase(copy.rs.todo.begin());
      Word target;
      if (auto* fr = std::get_if<FileRedir>(&r.v)) target = fr->target;
      else if (auto* dr = std::get_if<DupRedir>(&r.v)) target = dr->target;
      else if (auto* hr = std::get_if<HereRedir>(&r.v)) {
        if (hr->kind == HereKind::NoExpand) {
          Str body;
          if (hr->body)
            for (auto& e : *hr->body)
              if (auto* l = std::get_if<Literal>(&e.v)) body += l->text;
          copy.rs.done.push_back({EHere{hr->kind, hr->fd, body}});
          c = mk(std::move(copy));
          rule("CmdRedirQuotedHeredoc");
          return step;
        }
        target = hr->body ? *hr->body : Word{};
      }
      copy.rs.in_progress = RedirState::InProgress{
          r, es_start(ExpansionOptions{false, false}, target)};
      c = mk(std::move(copy));
      rule("CmdRedirStart");
      return step;
    }
    // all redirections expanded: apply them, then push the assignment scope
    auto applied = apply_redirs(st, os, copy.rs.done);
    if (auto* err = std::get_if<Str>(&applied)) {
      bool b_exit = (!checking && st.opt("errexit")) ||
                    (!cmd_name.empty() && is_special_name(cmd_name) &&
                     !copy.co.simple_invocation && !st.interactive());
      c = exp_error(st, os, {*err}, b_exit);
      rule("CmdRedirDoneErr");
      return step;
    }
    push_scope(st);
    CmdAssigns next;
    for (auto& [n, w] : copy.assigns)
      next.pending.push_back({n, es_start(ExpansionOptions{false, false}, w)});
    next.fields = copy.fields;
    next.sfds = std::get<SavedFds>(applied);
    next.co = copy.co;
    c = mk(std::move(next));
    rule("CmdRedirDone");
    return step;
  }
  if (auto* cas = as<CmdAssigns>(c)) {
    if (!cas->pending.empty()) {
      CmdAssigns copy = *cas;
      auto& [name, es] = copy.pending.front();
      if (auto* err = std::get_if<EsError>(&es.v)) {
        Fields f = err->f;
        restore_redirs(st, os, copy.sfds);
        pop_scope(st);
        c = exp_error(st, os, f, !st.interactive());
        rule("CmdAssignErr");
        return step;
      }
      if (auto* done = std::get_if<EsDone>(&es.v)) {
        Str value = to_string_fields(done->f);
        if (set_local(st, name, value)) {
          bool b_exit = (!checking && st.opt("errexit")) || !st.interactive();
          restore_redirs(st, os, copy.sfds);
          pop_scope(st);
          c = exp_error(st, os, {name + ": is read only"}, b_exit);
          rule("CmdAssignSetErr");
          return step;
        }
        copy.done_assigns.push_back({name, value});
        copy.pending.erase(copy.pending.begin());
        c = mk(std::move(copy));
        rule("CmdAssignSet");
        return step;
      }
      auto r = step_expansion(st, os, es);
      copy.co.did_cmd_subst = copy.co.did_cmd_subst || r.did_cmd_subst;
      c = mk(std::move(copy));
      step.rule = r.rule;
      step.expand_phase = true;
      return step;
    }
    if (cas->fields.empty()) {
      // no command word: locals merge into the environment, fds restored,
      // status from the last substitution (if any) else 0
      xtrace_emit(st, os, cas->done_assigns, {});
      SavedFds sfds = cas->sfds;
      EnvFrag merged = cas->done_assigns;
      bool b_subst = cas->co.did_cmd_subst;
      pop_scope(st);
      for (auto& [n, v] : merged) set_global(st, n, v);
      restore_redirs(st, os, sfds);
      set_status(st, b_subst ? st.last_status : 0);
      c = mk(DoneCmd{});
      rule("CmdAssignDoneNoCmd");
      return step;
    }
    xtrace_emit(st, os, cas->done_assigns, cas->fields);
    CmdReady next;
    next.env = cas->done_assigns;
    next.name = cas->fields[0];
    next.args = Fields(cas->fields.begin() + 1, cas->fields.end());
    next.sfds = cas->sfds;
    next.co = cas->co;
    c = mk(std::move(next));
    rule("CmdAssignDoneCmd");
    return step;
  }
  if (auto* ready = as<CmdReady>(c)) {
    if (st.opt("noexec")) {
      pop_scope(st);
      restore_redirs(st, os, ready->sfds);
      c = mk(DoneCmd{});
      rule("CmdRunNoexec");
      return step;
    }
    if (is_special_name(ready->name) && !ready->co.simple_invocation) {
      // special builtins get global assignments
      CmdReady copy = *ready;
      pop_scope(st);
      for (auto& [n, v] : copy.env) set_global(st, n, v);
      c = mk(Run{copy.env, copy.name, copy.args, copy.sfds, copy.co});
      rule("CmdRunSpecial");
      return step;
    }
    c = mk(Run{ready->env, ready->name, ready->args, ready->sfds, ready->co});
    rule("CmdRun");
    return step;
  }
  if (auto* run = as<Run>(c)) {
    Run copy = *run;
    RunOutcome out =
        run_cmd(st, os, checking, copy.env, copy.name, copy.args, copy.co);
    if (out.error) {
      bool b_exit = (!checking && st.opt("errexit")) ||
                    (is_special_name(copy.name) && !copy.co.simple_invocation &&
                     !st.interactive());
      CommandPtr after = exp_error(st, os, out.error_fields, b_exit, out.error_status);
      if (is_exit(after)) {
        restore_redirs(st, os, copy.sfds);
        c = after;
      } else {
        restore_redirs(st, os, copy.sfds);
        c = check_traps(st, os, after);
      }
      rule("RunFail");
      return step;
    }
    if (out.completed && st.last_status != 0 && !checking && st.opt("errexit")) {
      restore_redirs(st, os, copy.sfds);
      c = mk(ExitCmd{});
      rule("RunErr");
      return step;
    }
    if (out.restore)
      c = mk(RedirsFrame{out.continuation, copy.sfds});
    else
      c = out.continuation;
    rule("Run");
    return step;
  }
  if (auto* rf = as<RedirsFrame>(c)) {
    CommandPtr cur = rf->cur;
    if (is_done(cur)) {
      restore_redirs(st, os, rf->sfds);
      c = check_traps(st, os, mk(DoneCmd{}));
      rule("RedirsDone");
      return step;
    }
    if (is_control(cur)) {
      restore_redirs(st, os, rf->sfds);
      c = cur;
      rule("RedirsCtrl");
      return step;
    }
    EvalStep inner = step_eval(st, os, checking, cur);
    c = mk(RedirsFrame{cur, rf->sfds});
    return inner;
  }
  if (auto* rw = as<RedirWrap>(c)) {
    RedirWrap copy = *rw;
    if (copy.rs.in_progress) {
      auto& ip = *copy.rs.in_progress;
      if (auto* err = std::get_if<EsError>(&ip.es.v)) {
        Fields f = err->f;
        c = exp_error(st, os, f, !st.interactive());
        rule("RedirErr");
        return step;
      }
      if (auto* done = std::get_if<EsDone>(&ip.es.v)) {
        Fields f = done->f;
        if (auto* fr = std::get_if<FileRedir>(&ip.r.v)) {
          if (f.size() != 1 || f[0].empty()) {
            c = exp_error(st, os, {"ambiguous redirect"}, !st.interactive());
            rule("RedirErr");
            return step;
          }
          copy.rs.done.push_back({EFile{fr->mode, fr->fd, f[0]}});
        } else if (auto* dr = std::get_if<DupRedir>(&ip.r.v)) {
          if (f.size() == 1 && f[0] == "-") {
            copy.rs.done.push_back({EDup{dr->dir, dr->fd, std::nullopt}});
          } else if (f.size() == 1 &&
                     f[0].find_first_not_of("0123456789") == Str::npos &&
                     !f[0].empty()) {
            copy.rs.done.push_back({EDup{dr->dir, dr->fd, std::atoi(f[0].c_str())}});
          } else {
            c = exp_error(st, os, {"ambiguous redirect"}, !st.interactive());
            rule("RedirErr");
            return step;
          }
        } else if (auto* hr = std::get_if<HereRedir>(&ip.r.v)) {
          Str body;
          for (auto& fld : f) body += fld;
          copy.rs.done.push_back({EHere{hr->kind, hr->fd, body}});
        }
        copy.rs.in_progress.reset();
        c = mk(std::move(copy));
        rule("RedirExpand");
        return step;
      }
      auto r = step_expansion(st, os, ip.es);
      c = mk(std::move(copy));
      step.rule = r.rule;
      step.expand_phase = true;
      return step;
    }
    if (!copy.rs.todo.empty()) {
      Redirection r = copy.rs.todo.front();
      copy.rs.todo.erase(copy.rs.todo.begin());
      Word target;
      if (auto* fr = std::get_if<FileRedir>(&r.v)) target = fr->target;
      else if (auto* dr = std::get_if<DupRedir>(&r.v)) target = dr->target;
      else if (auto* hr = std::get_if<HereRedir>(&r.v)) {
        if (hr->kind == HereKind::NoExpand) {
          Str body;
          if (hr->body)
            for (auto& e : *hr->body)
              if (auto* l = std::get_if<Literal>(&e.v)) body += l->text;
          copy.rs.done.push_back({EHere{hr->kind, hr->fd, body}});
          c = mk(std::move(copy));
          rule("RedirQuotedHeredoc");
          return step;
        }
        target = hr->body ? *hr->body : Word{};
      }
      copy.rs.in_progress = RedirState::InProgress{
          r, es_start(ExpansionOptions{false, false}, target)};
      c = mk(std::move(copy));
      rule("RedirStart");
      return step;
    }
    auto applied = apply_redirs(st, os, copy.rs.done);
    if (auto* err = std::get_if<Str>(&applied)) {
      bool b_exit = !checking && st.opt("errexit");
      c = exp_error(st, os, {*err}, b_exit);
      rule("RedirDoneErr");
      return step;
    }
    c = mk(RedirsFrame{copy.inner, std::get<SavedFds>(applied)});
    rule("RedirDone");
    return step;
  }
  if (auto* wc = as<WhileCond>(c)) {
    CommandPtr cur = wc->cur;
    if (is_done(cur)) {
      if (st.last_status == 0) {
        c = mk(WhileBody{wc->orig, wc->body, wc->body, wc->last_body_status});
        rule("WhileTrue");
      } else {
        st.loop_depth--;
        set_status(st, wc->last_body_status);
        c = mk(DoneCmd{});
        rule("WhileFalse");
      }
      return step;
    }
    if (auto* br = as<BreakCmd>(cur)) {
      st.loop_depth--;
      c = br->n > 1 ? mk(BreakCmd{br->n - 1}) : mk(DoneCmd{});
      rule("WhileBreak");
      return step;
    }
    if (auto* cont = as<ContinueCmd>(cur)) {
      if (cont->n > 1) {
        st.loop_depth--;
        c = mk(ContinueCmd{cont->n - 1});
      } else {
        c = mk(WhileCond{wc->orig, wc->orig, wc->body, wc->last_body_status});
      }
      rule("WhileContinue");
      return step;
    }
    if (is_control(cur)) {
      st.loop_depth--;
      c = cur;
      rule("WhileCtrl");
      return step;
    }
    EvalStep inner = step_eval(st, os, true, cur);
    c = mk(WhileCond{wc->orig, cur, wc->body, wc->last_body_status});
    return inner;
  }
  if (auto* wb = as<WhileBody>(c)) {
    CommandPtr cur = wb->cur;
    if (is_done(cur)) {
      c = mk(WhileCond{wb->cond, wb->cond, wb->body, st.last_status});
      rule("WhileBodyDone");
      return step;
    }
    if (auto* br = as<BreakCmd>(cur)) {
      st.loop_depth--;
      c = br->n > 1 ? mk(BreakCmd{br->n - 1}) : mk(DoneCmd{});
      rule("WhileBreak");
      return step;
    }
    if (auto* cont = as<ContinueCmd>(cur)) {
      if (cont->n > 1) {
        st.loop_depth--;
        c = mk(ContinueCmd{cont->n - 1});
      } else {
        c = mk(WhileCond{wb->cond, wb->cond, wb->body, st.last_status});
      }
      rule("WhileContinue");
      return step;
    }
    if (is_control(cur)) {
      st.loop_depth--;
      c = cur;
      rule("WhileCtrl");
      return step;
    }
    EvalStep inner = step_eval(st, os, checking, cur);
    c = mk(WhileBody{wb->cond, wb->body, cur, wb->last_body_status});
    return inner;
  }
  if (auto* fa = as<ForArgs>(c)) {
    if (auto* err = std::get_if<EsError>(&fa->es.v)) {
      Fields f = err->f;
      c = exp_error(st, os, f, !st.interactive());
      rule("ForArgsErr");
      return step;
    }
    if (auto* done = std::get_if<EsDone>(&fa->es.v)) {
      c = mk(ForStart{fa->var, done->f, fa->body});
      rule("ForArgsDone");
      return step;
    }
    ForArgs copy = *fa;
    auto r = step_expansion(st, os, copy.es);
    c = mk(std::move(copy));
    step.rule = r.rule;
    step.expand_phase = true;
    return step;
  }
  if (auto* fs = as<ForStart>(c)) {
    if (fs->fields.empty()) {
      set_status(st, 0);
      c = mk(DoneCmd{});
      rule("ForDone");
      return step;
    }
    if (set_global(st, fs->var, fs->fields[0])) {
      bool b_exit = (!checking && st.opt("errexit")) || !st.interactive();
      c = exp_error(st, os, {fs->var + ": is read only"}, b_exit);
      rule("ForSetErr");
      return step;
    }
    st.loop_depth++;
    Fields rest(fs->fields.begin() + 1, fs->fields.end());
    c = mk(ForRunning{fs->var, rest, fs->body, fs->body});
    rule("ForNext");
    return step;
  }
  if (auto* fr = as<ForRunning>(c)) {
    CommandPtr cur = fr->cur;
    auto next_iteration = [&]() {
      if (fr->remaining.empty()) {
        st.loop_depth--;
        c = mk(DoneCmd{});
        rule("ForDone");
        return;
      }
      if (set_global(st, fr->var, fr->remaining[0])) {
        st.loop_depth--;
        bool b_exit = (!checking && st.opt("errexit")) || !st.interactive();
        c = exp_error(st, os, {fr->var + ": is read only"}, b_exit);
        rule("ForSetErr");
        return;
      }
      Fields rest(fr->remaining.begin() + 1, fr->remaining.end());
      c = mk(ForRunning{fr->var, rest, fr->body, fr->body});
      rule("ForNext");
    };
    if (is_done(cur)) {
      next_iteration();
      return step;
    }
    if (auto* br = as<BreakCmd>(cur)) {
      st.loop_depth--;
      c = br->n > 1 ? mk(BreakCmd{br->n - 1}) : mk(DoneCmd{});
      rule("ForBreak");
      return step;
    }
    if (auto* cont = as<ContinueCmd>(cur)) {
      if (cont->n > 1) {
        st.loop_depth--;
        c = mk(ContinueCmd{cont->n - 1});
        rule("ForContinue");
      } else {
        next_iteration();
        rule("ForContinue");
      }
      return step;
    }
    if (is_control(cur)) {
      st.loop_depth--;
      c = cur;
      rule("ForCtrl");
      return step;
    }
    EvalStep inner = step_eval(st, os, checking, cur);
    c = mk(ForRunning{fr->var, fr->remaining, fr->body, cur});
    return inner;
  }
  if (auto* caa = as<CaseArg>(c)) {
    if (auto* err = std::get_if<EsError>(&caa->es.v)) {
      Fields f = err->f;
      c = exp_error(st, os, f, !st.interactive());
      rule("CaseArgErr");
      return step;
    }
    if (auto* done = std::get_if<EsDone>(&caa->es.v)) {
      c = mk(CaseMatch{to_string_fields(done->f), caa->branches});
      rule("CaseArgDone");
      return step;
    }
    CaseArg copy = *caa;
    auto r = step_expansion(st, os, copy.es);
    c = mk(std::move(copy));
    step.rule = r.rule;
    step.expand_phase = true;
    return step;
  }
  if (auto* cm = as<CaseMatch>(c)) {
    if (cm->branches.empty()) {
      set_status(st, 0);
      c = mk(DoneCmd{});
      rule("CaseNone");
      return step;
    }
    CaseBranch br = cm->branches.front();
    std::vector<CaseBranch> rest(cm->branches.begin() + 1, cm->branches.end());
    c = mk(CaseCheck{cm->scrutinee, br.patterns, br.body, rest});
    rule("CaseNextBranch");
    return step;
  }
  if (auto* cc = as<CaseCheck>(c)) {
    if (cc->patterns.empty()) {
      c = mk(CaseMatch{cc->scrutinee, cc->rest});
      rule("CaseNoMatch");
      return step;
    }
    Word pat_word = cc->patterns.front();
    auto pe = expand_pattern_word(st, os, pat_word);
    if (!pe.ok) {
      c = exp_error(st, os, pe.error, !st.interactive());
      rule("CaseCheckErr");
      return step;
    }
    CompiledPattern pat = compile(pe.pattern);
    if (match(pat, cc->scrutinee)) {
      if (cc->body) {
        c = cc->body;
      } else {
        set_status(st, 0);
        c = mk(DoneCmd{});
      }
      rule("CaseCheckMatch");
      return step;
    }
    CaseCheck copy = *cc;
    copy.patterns.erase(copy.patterns.begin());
    c = mk(std::move(copy));
    rule("CaseCheckNoMatch");
    return step;
  }
  if (auto* call = as<CallFrame>(c)) {
    CommandPtr cur = call->cur;
    auto unwind = [&]() {
      st.positional = call->saved_positional;
      st.loop_depth = call->saved_loop_depth;
      st.call_depth--;
      pop_scope(st);
    };
    if (is_done(cur)) {
      unwind();
      c = check_traps(st, os, mk(DoneCmd{}));
      rule("CallDone");
      return step;
    }
    if (as<ReturnCmd>(cur)) {
      unwind();
      c = mk(DoneCmd{});
      rule("CallReturn");
      return step;
    }
    if (is_control(cur)) {
      // exit always passes; break/continue pass only under nonlexicalctrl
      unwind();
      c = cur;
      rule("CallCtrl");
      return step;
    }
    EvalStep inner = step_eval(st, os, checking, cur);
    CallFrame copy = *call;
    copy.cur = cur;
    c = mk(std::move(copy));
    return inner;
  }
  if (auto* el = as<EvalLoop>(c)) {
    EvalLoop loop = *el;
    if (loop.interactive) {
      os.set_ps1(lookup(st, "PS1").value_or("$ "));
      os.set_ps2(lookup(st, "PS2").value_or("> "));
    }
    auto r = parse_next(*loop.pctx, st.aliases, os.ps1_text, os.ps2_text);
    loop.lineno = loop.pctx->lineno;
    if (r.kind == ParseResult::Kind::Blank) {
      c = mk(std::move(loop));
      rule("EvalLoopBlank");
      return step;
    }
    if (r.kind == ParseResult::Kind::Eof) {
      if (loop.kind == EvalLoopKind::Dot) st.dot_depth--;
      if (loop.kind == EvalLoopKind::TopLevel) {
        c = mk(ExitCmd{});
      } else {
        c = mk(DoneCmd{});
      }
      rule("EvalLoopEof");
      return step;
    }
    if (r.kind == ParseResult::Kind::SyntaxError) {
      write_err(os, loop.source_name + ": line " + std::to_string(r.lineno) +
                        ": syntax error: " + r.error);
      set_status(st, 2);
      if (loop.kind == EvalLoopKind::TopLevel && loop.interactive) {
        c = mk(std::move(loop));  // report and keep reading
      } else {
        if (loop.kind == EvalLoopKind::Dot) st.dot_depth--;
        bool fatal = loop.exit_on_error && !st.interactive();
        c = fatal ? mk(ExitCmd{}) : mk(DoneCmd{});
      }
      rule("EvalLoopSyntaxErr");
      return step;
    }
    if (st.opt("verbose")) os.write_all(2, r.consumed_text);
    if (st.opt("noexec")) {
      c = mk(std::move(loop));
      rule("EvalLoopNoexec");
      return step;
    }
    c = mk(EvalLoopCmd{std::move(loop), r.cmd});
    rule("EvalLoopParse");
    return step;
  }
  if (auto* ec = as<EvalLoopCmd>(c)) {
    CommandPtr cur = ec->cur;
    if (is_done(cur)) {
      c = check_traps(st, os, mk(EvalLoop{ec->loop}));
      rule("EvalLoopCmdDone");
      return step;
    }
    if (is_exit(cur)) {
      if (ec->loop.kind == EvalLoopKind::Dot) st.dot_depth--;
      c = cur;
      rule("EvalLoopExit");
      return step;
    }
    if (as<ReturnCmd>(cur)) {
      if (ec->loop.kind == EvalLoopKind::Dot) {
        st.dot_depth--;
        c = mk(DoneCmd{});
        rule("EvalLoopReturn");
      } else if (ec->loop.kind == EvalLoopKind::EvalStr) {
        c = cur;  // `return` passes through eval to the enclosing function
        rule("EvalLoopCtrl");
      } else {
        c = mk(EvalLoop{ec->loop});
        rule("EvalLoopCtrl");
      }
      return step;
    }
    if (is_control(cur)) {  // break/continue
      if (ec->loop.kind == EvalLoopKind::TopLevel) {
        c = mk(EvalLoop{ec->loop});
      } else {
        if (ec->loop.kind == EvalLoopKind::Dot) st.dot_depth--;
        c = cur;
      }
      rule("EvalLoopCtrl");
      return step;
    }
    EvalStep inner = step_eval(st, os, false, cur);
    c = mk(EvalLoopCmd{ec->loop, cur});
    return inner;
  }
  if (auto* ex = as<ExecCmd>(c)) {
    ExecError err = os.exec_image(ex->path, ex->name, ex->args, ex->env);
    if (err.unsupported) {
      set_status(st, 0);
      c = mk(ExitCmd{});
      rule("ExecUnsupported");
      return step;
    }
    if (err.noexec && ex->fallback_as_script) {
      auto fd = os.file_redir(RedirMode::Read, ex->path);
      if (fd.ok()) {
        auto content = os.read_all(*fd);
        os.close_fd(*fd);
        if (content.ok()) {
          st.arg0 = ex->path;
          st.positional = ex->args;
          EvalLoop loop;
          loop.pctx = ParseSession::from_string(*content);
          loop.source_name = ex->path;
          loop.kind = EvalLoopKind::TopLevel;
          loop.toplevel = true;
          c = mk(std::move(loop));
          rule("ExecScript");
          return step;
        }
      }
    }
    write_err(os, ex->name + ": " + (err.message.empty() ? "cannot execute" : err.message));
    set_status(st, 126);
    c = st.interactive() ? mk(DoneCmd{}) : mk(ExitCmd{});
    rule("ExecFail");
    return step;
  }
  if (auto* w = as<WaitCmd>(c)) {
    int status = os.wait_pid(w->pid);
    set_status(st, status);
    if (w->for_cmd) reap_job_siblings(st, os, w->pid);
    if (!w->checked && st.opt("errexit") && st.last_status != 0) {
      c = mk(ExitCmd{});
      rule("WaitErrexit");
      return step;
    }
    c = check_traps(st, os, mk(DoneCmd{}));
    rule("Wait");
    return step;
  }
  if (auto* t = as<Trapped>(c)) {
    CommandPtr handler = t->handler;
    if (is_done(handler)) {
      set_status(st, t->saved_status);
      c = t->cont;
      rule("TrappedDone");
      return step;
    }
    if (is_control(handler)) {
      c = handler;
      rule("TrappedCtrl");
      return step;
    }
    EvalStep inner = step_eval(st, os, false, handler);
    c = mk(Trapped{t->sig, t->saved_status, handler, t->cont});
    return inner;
  }
  // Naked control forms at the root: treat as completed.
  if (as<BreakCmd>(c) || as<ContinueCmd>(c) || as<ReturnCmd>(c)) {
    c = mk(DoneCmd{});
    rule("CtrlAtRoot");
    return step;
  }
  assert(false && "step_eval on a terminal command");
  return step;
}

// ---------------------------------------------------------------------------
// Drivers

using StepHook =
    std::function<void(const EvalStep&, const ShellState&, const CommandPtr&)>;

inline int run_to_completion(ShellState& st, OsInterface& os, CommandPtr c,
                             const StepHook& hook = nullptr) {
  while (!is_terminal(c)) {
    EvalStep s = step_eval(st, os, false, c);
    if (hook) hook(s, st, c);
  }
  return st.last_status;
}

// Runs a command to exit, firing the EXIT trap once at termination.
inline int evaluate_to_exit(ShellState& st, OsInterface& os, CommandPtr c,
                            const StepHook& hook = nullptr) {
  int status = run_to_completion(st, os, std::move(c), hook);
  auto exit_trap = st.traps.find(Sig::EXIT);
  if (exit_trap != st.traps.end() && !exit_trap->second.empty() &&
      !st.running_exit_trap) {
    st.running_exit_trap = true;
    CommandPtr handler = eval_detail::parse_trap_handler(os, exit_trap->second);
    if (handler) run_to_completion(st, os, handler, hook);
    set_status(st, status);
  }
  return st.last_status;
}

}  // namespace smolsh

#endif  // SMOLSH_EVALUATION_HPP
