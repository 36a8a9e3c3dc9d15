// os_symbolic.hpp: the simulated OS instance. Symbolic processes, FIFO pipes
// with unbounded buffers, a synthetic filesystem with contents, a
// deterministic demand-driven scheduler, and fuel.
//
// Scheduling takes place in rounds: every live process takes one step per
// round in creation (pid) order. A process that waits or would block reading
// steps the waited-on or writing process instead, so order is demand-driven
// without losing determinism.

#ifndef SMOLSH_OS_SYMBOLIC_HPP
#define SMOLSH_OS_SYMBOLIC_HPP

#include "smolsh/evaluation.hpp"

namespace smolsh {

struct FsNode {
  enum class Kind { Dir, File, Symlink };
  Kind kind = Kind::Dir;
  std::map<Str, FsNode> children;  // Dir
  Str content;                     // File
  Str target;                      // Symlink
  bool executable = false;
};

struct FuelExhausted {};
struct SymDeadlock {};

class SymbolicOs;

struct SymbolicSystem {
  struct PipeBuf {
    int id = 0;
    Str buffer;
  };
  struct OpenFile {
    enum class Kind { File, Heredoc, Null, StdoutSink, StderrSink, StdinSrc };
    Kind kind = Kind::Null;
    Str path;       // File
    Str data;       // Heredoc/StdinSrc
    size_t offset = 0;
    RedirMode mode = RedirMode::Read;
  };
  struct FdEntry {
    enum class Kind { PipeRead, PipeWrite, Open };
    Kind kind = Kind::Open;
    int id = 0;  // pipe id or open-file id
  };
  struct Process {
    Pid pid = 0;
    bool zombie = false;
    bool stopped = false;  // carried but never set: job control out of scope
    int exit_status = 0;
    ShellState state;
    CommandPtr cmd;
    std::map<Fd, FdEntry> fds;
    std::deque<Sig> sig_queue;
    std::map<Sig, SigDisposition> dispositions;
    std::optional<int> pending_kill;  // delivered default-fatal signal
  };

  std::map<int, PipeBuf> pipes;
  std::map<int, OpenFile> open_files;
  std::map<Pid, Process> processes;  // creation order == pid order
  FsNode fs_root;
  std::map<Str, Str> passwd;  // user -> home dir (simulated getpwnam)
  int umask_value = 022;
  long fuel = 5000;
  bool fuel_exhausted = false;
  Str stdout_sink, stderr_sink;
  Pid next_pid = 1;
  int next_pipe_id = 1;
  int next_ofd = 1;
  std::set<Pid> stepping;  // demand-step recursion guard

  void consume_fuel() {
    if (fuel <= 0) {
      fuel_exhausted = true;
      throw FuelExhausted{};
    }
    fuel--;
  }

  int count_pipe_ends(int pipe_id, FdEntry::Kind kind) const {
    int n = 0;
    for (auto& [pid, p] : processes) {
      if (p.zombie) continue;
      for (auto& [fd, e] : p.fds)
        if (e.kind == kind && e.id == pipe_id) n++;
    }
    return n;
  }
  int writers_of(int pipe_id) const {
    return count_pipe_ends(pipe_id, FdEntry::Kind::PipeWrite);
  }
  int readers_of(int pipe_id) const {
    return count_pipe_ends(pipe_id, FdEntry::Kind::PipeRead);
  }

  void gc_open_file(int ofd) {
    for (auto& [pid, p] : processes) {
      if (p.zombie) continue;
      for (auto& [fd, e] : p.fds)
        if (e.kind == FdEntry::Kind::Open && e.id == ofd) return;
    }
    open_files.erase(ofd);
  }

  void zombify(Process& p, int status) {
    std::vector<int> ofds;
    for (auto& [fd, e] : p.fds)
      if (e.kind == FdEntry::Kind::Open) ofds.push_back(e.id);
    p.fds.clear();
    p.zombie = true;
    p.exit_status = clamp_status(status);
    p.cmd = nullptr;
    p.sig_queue.clear();
    for (int ofd : ofds) gc_open_file(ofd);
  }

  // First live process holding a write end of the pipe, in pid order.
  std::optional<Pid> first_writer(int pipe_id) const {
    for (auto& [pid, p] : processes) {
      if (p.zombie) continue;
      for (auto& [fd, e] : p.fds)
        if (e.kind == FdEntry::Kind::PipeWrite && e.id == pipe_id) return pid;
    }
    return std::nullopt;
  }

  bool step_process(Pid pid);             // defined after SymbolicOs
  void deliver_signal(Pid pid, Sig sig);  // dispositions applied here

  // --- filesystem walking

  struct ResolvedNode {
    FsNode* node = nullptr;
    FsNode* parent = nullptr;
    Str leaf;
  };

  FsNode* walk(const Str& abs_path, bool follow_final, int depth = 0) {
    if (depth > 8) return nullptr;
    FsNode* cur = &fs_root;
    std::vector<Str> parts;
    size_t i = 0;
    Str norm = normalize_path(abs_path);
    while (i < norm.size()) {
      size_t j = norm.find('/', i);
      if (j == Str::npos) j = norm.size();
      Str part = norm.substr(i, j - i);
      if (!part.empty()) parts.push_back(part);
      i = j + 1;
    }
    for (size_t k = 0; k < parts.size(); k++) {
      if (cur->kind == FsNode::Kind::Symlink) {
        Str rest;
        for (size_t m = k; m < parts.size(); m++) rest += "/" + parts[m];
        return walk(cur->target + rest, follow_final, depth + 1);
      }
      if (cur->kind != FsNode::Kind::Dir) return nullptr;
      auto it = cur->children.find(parts[k]);
      if (it == cur->children.end()) return nullptr;
      cur = &it->second;
    }
    if (follow_final && cur->kind == FsNode::Kind::Symlink)
      return walk(cur->target, true, depth + 1);
    return cur;
  }

  FsNode* parent_dir_of(const Str& abs_path, Str& leaf) {
    Str norm = normalize_path(abs_path);
    size_t slash = norm.rfind('/');
    if (slash == Str::npos) return nullptr;
    leaf = norm.substr(slash + 1);
    Str dir = slash == 0 ? "/" : norm.substr(0, slash);
    FsNode* d = walk(dir, true);
    if (!d || d->kind != FsNode::Kind::Dir || leaf.empty()) return nullptr;
    return d;
  }
};

// Per-process capability view of the symbolic system.
class SymbolicOs : public OsInterface {
 public:
  SymbolicOs(SymbolicSystem& sys, Pid self) : sys_(sys), self_(self) {}

  SymbolicSystem::Process& proc() { return sys_.processes.at(self_); }

  Fd lowest_free_fd(int from = 0) {
    auto& fds = proc().fds;
    Fd fd = from;
    while (fds.count(fd)) fd++;
    return fd;
  }

  // --- process calls

  Pid fork_shell(const ShellState& child_state, CommandPtr cmd,
                 const std::vector<FdAction>& actions = {}) override {
    Pid pid = sys_.next_pid++;
    SymbolicSystem::Process child;
    child.pid = pid;
    child.state = child_state;
    child.cmd = std::move(cmd);
    child.fds = proc().fds;
    child.dispositions = proc().dispositions;
    // non-ignored traps were reset by make_child_state; mirror dispositions
    for (auto& [sig, d] : child.dispositions)
      if (d == SigDisposition::Record) d = SigDisposition::Default;
    for (auto& [sig, action] : child.state.traps)
      if (action.empty()) child.dispositions[sig] = SigDisposition::Ignore;
    for (auto& a : actions) {
      switch (a.kind) {
        case FdAction::Kind::Dup2: {
          auto it = child.fds.find(a.from);
          if (it != child.fds.end()) child.fds[a.to] = it->second;
          else child.fds.erase(a.to);
          break;
        }
        case FdAction::Kind::Close:
          child.fds.erase(a.from);
          break;
        case FdAction::Kind::OpenDevNull: {
          SymbolicSystem::OpenFile of;
          of.kind = SymbolicSystem::OpenFile::Kind::Null;
          int id = sys_.next_ofd++;
          sys_.open_files[id] = of;
          child.fds[a.to] = {SymbolicSystem::FdEntry::Kind::Open, id};
          break;
        }
      }
    }
    sys_.processes[pid] = std::move(child);
    return pid;
  }

  // Unbounded stepping of the waited-on process, each step consuming fuel.
  int wait_pid(Pid pid) override {
    if (pid == self_ || !sys_.processes.count(pid)) return 127;
    auto* target = &sys_.processes.at(pid);
    while (!target->zombie) {
      if (!sys_.step_process(pid)) throw SymDeadlock{};
      target = &sys_.processes.at(pid);
    }
    return target->exit_status;
  }

  Pid self_pid() override { return self_; }

  bool send_signal(Pid pid, Sig sig) override {
    if (!sys_.processes.count(pid)) return false;
    sys_.deliver_signal(pid, sig);
    return true;
  }

  std::optional<Sig> pending_signal() override {
    auto& q = proc().sig_queue;
    if (q.empty()) return std::nullopt;
    Sig s = q.front();
    q.pop_front();
    return s;
  }

  void set_disposition(Sig sig, SigDisposition d) override {
    if (sig == Sig::KILL || sig == Sig::STOP) return;  // immutable
    proc().dispositions[sig] = d;
  }

  RusageInfo rusage() override { return RusageInfo{}; }

  // The symbolic instance cannot run real executables; every exec yields a
  // zombie. Two tiny emulations (ls, cat) make the classic substitution and
  // pipe demos work against the synthetic filesystem.
  ExecError exec_image(const Str& path, const Str&, const Fields& args,
                       const std::map<Str, Str>&) override {
    ExecError err;
    err.unsupported = true;
    err.message = "symbolic mode cannot exec";
    Str base = path;
    size_t slash = base.rfind('/');
    if (slash != Str::npos) base = base.substr(slash + 1);
    if (base == "ls") {
      Str dir = args.empty() ? proc().state.cwd
                             : join_path(proc().state.cwd, args[0]);
      auto listing = list_dir(dir);
      if (!listing.ok()) {
        write_all(2, "ls: " + (args.empty() ? dir : args[0]) + ": " +
                         listing.error + "\n");
        err.unsupported_status = 1;
        return err;
      }
      Str out;
      for (auto& name : *listing)
        if (name.empty() || name[0] != '.') out += name + "\n";
      write_all(1, out);
      return err;
    }
    if (base == "cat") {
      if (args.empty()) {
        auto data = read_all(0);
        if (data.ok()) write_all(1, *data);
        return err;
      }
      for (auto& a : args) {
        Str p2 = join_path(proc().state.cwd, a);
        FsNode* n = sys_.walk(p2, true);
        if (!n || n->kind != FsNode::Kind::File) {
          write_all(2, "cat: " + a + ": No such file or directory\n");
          err.unsupported_status = 1;
          continue;
        }
        write_all(1, n->content);
      }
      return err;
    }
    return err;
  }

  // --- fd calls

  OsResult<std::pair<Fd, Fd>> make_pipe() override {
    int id = sys_.next_pipe_id++;
    sys_.pipes[id] = SymbolicSystem::PipeBuf{id, {}};
    Fd r = lowest_free_fd(3);
    proc().fds[r] = {SymbolicSystem::FdEntry::Kind::PipeRead, id};
    Fd w = lowest_free_fd(3);
    proc().fds[w] = {SymbolicSystem::FdEntry::Kind::PipeWrite, id};
    return os_ok(std::make_pair(r, w));
  }

  void close_fd(Fd fd) override {
    auto& fds = proc().fds;
    auto it = fds.find(fd);
    if (it == fds.end()) return;
    int ofd = it->second.kind == SymbolicSystem::FdEntry::Kind::Open ? it->second.id : -1;
    fds.erase(it);
    if (ofd >= 0) sys_.gc_open_file(ofd);
  }

  bool fd_valid(Fd fd) override { return proc().fds.count(fd) != 0; }

  OsResult<Str> read_all(Fd fd) override {
    auto it = proc().fds.find(fd);
    if (it == proc().fds.end()) return os_err<Str>("bad file descriptor");
    auto entry = it->second;
    if (entry.kind == SymbolicSystem::FdEntry::Kind::PipeWrite)
      return os_err<Str>("file descriptor not readable");
    if (entry.kind == SymbolicSystem::FdEntry::Kind::PipeRead) {
      Str out;
      while (true) {
        auto& pipe = sys_.pipes[entry.id];
        out += pipe.buffer;
        pipe.buffer.clear();
        if (sys_.writers_of(entry.id) == 0) break;
        auto writer = sys_.first_writer(entry.id);
        if (!writer) break;
        for (int k = 0; k < 10 && !sys_.processes.at(*writer).zombie; k++)
          if (!sys_.step_process(*writer)) throw SymDeadlock{};
      }
      return os_ok(out);
    }
    auto& of = sys_.open_files[entry.id];
    using K = SymbolicSystem::OpenFile::Kind;
    if (of.kind == K::Null) return os_ok(Str());
    if (of.kind == K::StdoutSink || of.kind == K::StderrSink)
      return os_err<Str>("file descriptor not readable");
    const Str* data = &of.data;
    if (of.kind == K::File) {
      FsNode* n = sys_.walk(of.path, true);
      if (!n || n->kind != FsNode::Kind::File) return os_err<Str>("no such file");
      data = &n->content;
    }
    Str out = of.offset < data->size() ? data->substr(of.offset) : Str();
    of.offset = data->size();
    return os_ok(out);
  }

  OsResult<Str> read_chunk(Fd fd, size_t max) override {
    auto r = read_line_raw(fd, max);
    return r;
  }

  // Demand-driven line read: if no full line is buffered and writers exist,
  // the first writer is stepped in batches of 10 before rechecking.
  ReadLineResult read_line(Fd fd, bool allow_continuation) override {
    ReadLineResult res;
    Str line;
    while (true) {
      auto one = read_byte(fd);
      if (!one.ok()) {
        res.kind = ReadLineResult::Kind::Error;
        res.error = one.error;
        return res;
      }
      const Str& b = *one;
      if (b.empty()) {  // EOF
        res.kind = line.empty() ? ReadLineResult::Kind::Eof : ReadLineResult::Kind::Line;
        res.bytes = line;
        return res;
      }
      if (b[0] == '\n') {
        if (allow_continuation && !line.empty() && line.back() == '\\') {
          line.pop_back();
          continue;
        }
        res.kind = ReadLineResult::Kind::Line;
        res.bytes = line;
        return res;
      }
      line += b[0];
    }
  }

  OsResult<bool> write_all(Fd fd, const Str& bytes) override {
    auto it = proc().fds.find(fd);
    if (it == proc().fds.end()) return os_err<bool>("bad file descriptor");
    auto entry = it->second;
    if (entry.kind == SymbolicSystem::FdEntry::Kind::PipeRead)
      return os_err<bool>("file descriptor not writable");
    if (entry.kind == SymbolicSystem::FdEntry::Kind::PipeWrite) {
      if (sys_.readers_of(entry.id) == 0) {
        // writing with no readers delivers PIPE to the writer
        sys_.deliver_signal(self_, Sig::PIPE);
        return os_err<bool>("broken pipe");
      }
      sys_.pipes[entry.id].buffer += bytes;
      return os_ok(true);
    }
    auto& of = sys_.open_files[entry.id];
    using K = SymbolicSystem::OpenFile::Kind;
    switch (of.kind) {
      case K::Null: return os_ok(true);
      case K::StdoutSink:
        sys_.stdout_sink += bytes;
        return os_ok(true);
      case K::StderrSink:
        sys_.stderr_sink += bytes;
        return os_ok(true);
      case K::StdinSrc: return os_err<bool>("file descriptor not writable");
      case K::Heredoc: return os_err<bool>("file descriptor not writable");
      case K::File: {
        FsNode* n = sys_.walk(of.path, true);
        if (!n || n->kind != FsNode::Kind::File) return os_err<bool>("no such file");
        if (of.mode == RedirMode::Append) {
          n->content += bytes;
        } else {
          if (of.offset > n->content.size()) n->content.resize(of.offset, '\0');
          n->content.replace(of.offset, bytes.size(), bytes);
          of.offset += bytes.size();
        }
        return os_ok(true);
      }
    }
    return os_err<bool>("file descriptor not writable");
  }

  OsResult<Fd> file_redir(RedirMode mode, const Str& path) override {
    using K = SymbolicSystem::OpenFile::Kind;
    SymbolicSystem::OpenFile of;
    Str norm = normalize_path(path);
    if (norm == "/dev/null") {
      of.kind = K::Null;
    } else if (mode == RedirMode::Read) {
      FsNode* n = sys_.walk(norm, true);
      if (!n) return os_err<Fd>("No such file or directory");
      if (n->kind == FsNode::Kind::Dir) return os_err<Fd>("Is a directory");
      of.kind = K::File;
      of.path = norm;
    } else {
      FsNode* n = sys_.walk(norm, true);
      if (!n) {
        Str leaf;
        FsNode* parent = sys_.parent_dir_of(norm, leaf);
        if (!parent) return os_err<Fd>("No such file or directory");
        FsNode file;
        file.kind = FsNode::Kind::File;
        parent->children[leaf] = file;
        n = &parent->children[leaf];
      } else if (n->kind == FsNode::Kind::Dir) {
        return os_err<Fd>("Is a directory");
      } else if (mode == RedirMode::Write || mode == RedirMode::Clobber) {
        n->content.clear();
      }
      of.kind = K::File;
      of.path = norm;
      of.mode = mode;
      if (mode == RedirMode::Append) of.offset = n->content.size();
    }
    int id = sys_.next_ofd++;
    sys_.open_files[id] = of;
    Fd fd = lowest_free_fd(3);
    proc().fds[fd] = {SymbolicSystem::FdEntry::Kind::Open, id};
    return os_ok(fd);
  }

  OsResult<Fd> close_and_save(Fd fd) override {
    auto it = proc().fds.find(fd);
    if (it == proc().fds.end()) return os_err<Fd>("bad file descriptor");
    Fd saved = lowest_free_fd(10);
    proc().fds[saved] = it->second;
    proc().fds.erase(fd);
    return os_ok(saved);
  }

  OsResult<bool> renumber(bool close_original, Fd from, Fd to) override {
    auto it = proc().fds.find(from);
    if (it == proc().fds.end()) return os_err<bool>("bad file descriptor");
    if (from == to) return os_ok(true);
    auto entry = it->second;
    close_fd(to);
    proc().fds[to] = entry;
    if (close_original) proc().fds.erase(from);
    return os_ok(true);
  }

  OsResult<Fd> heredoc(const Str& body) override {
    SymbolicSystem::OpenFile of;
    of.kind = SymbolicSystem::OpenFile::Kind::Heredoc;
    of.data = body;
    int id = sys_.next_ofd++;
    sys_.open_files[id] = of;
    Fd fd = lowest_free_fd(3);
    proc().fds[fd] = {SymbolicSystem::FdEntry::Kind::Open, id};
    return os_ok(fd);
  }

  // --- fs calls

  // The emulated utilities resolve via $PATH without living in the user's
  // synthetic tree.
  static bool is_virtual_util(const Str& path) {
    return path == "/bin/ls" || path == "/bin/cat";
  }

  bool file_exists(const Str& path) override {
    if (is_virtual_util(normalize_path(path))) return true;
    return sys_.walk(path, true) != nullptr;
  }
  bool file_executable(const Str& path) override {
    if (is_virtual_util(normalize_path(path))) return true;
    FsNode* n = sys_.walk(path, true);
    return n && (n->executable || n->kind == FsNode::Kind::Dir);
  }
  bool file_readable(const Str& path) override { return sys_.walk(path, true) != nullptr; }
  bool file_writable(const Str& path) override { return sys_.walk(path, true) != nullptr; }
  bool fd_is_tty(Fd) override { return false; }

  std::optional<StatInfo> stat_path(const Str& path, bool follow) override {
    if (is_virtual_util(normalize_path(path))) {
      StatInfo info;
      info.kind = FileKind::Regular;
      info.perms = 0755;
      return info;
    }
    FsNode* n = sys_.walk(path, follow);
    if (!n) return std::nullopt;
    StatInfo info;
    switch (n->kind) {
      case FsNode::Kind::Dir:
        info.kind = FileKind::Directory;
        info.perms = 0755;
        break;
      case FsNode::Kind::File:
        info.kind = FileKind::Regular;
        info.perms = n->executable ? 0755 : 0644;
        info.size = n->content.size();
        break;
      case FsNode::Kind::Symlink:
        info.kind = FileKind::Symlink;
        info.perms = 0777;
        break;
    }
    return info;
  }

  OsResult<std::vector<Str>> list_dir(const Str& path) override {
    FsNode* n = sys_.walk(path, true);
    if (!n) return os_err<std::vector<Str>>("No such file or directory");
    if (n->kind != FsNode::Kind::Dir)
      return os_err<std::vector<Str>>("Not a directory");
    std::vector<Str> names;
    for (auto& [name, child] : n->children) names.push_back(name);
    return os_ok(names);  // map keys are already byte-sorted
  }

  Str getcwd_os() override { return proc().state.cwd; }

  OsResult<bool> chdir_os(const Str& path) override {
    FsNode* n = sys_.walk(path, true);
    if (!n || n->kind != FsNode::Kind::Dir)
      return os_err<bool>("No such file or directory");
    return os_ok(true);
  }

  int umask_get() override { return sys_.umask_value; }
  void umask_set(int mask) override { sys_.umask_value = mask & 0777; }

  std::optional<Str> home_dir(const Str& user) override {
    auto it = sys_.passwd.find(user);
    if (it == sys_.passwd.end()) return std::nullopt;
    return it->second;
  }

  void set_ps1(const Str& text) override { ps1_text = text; }
  void set_ps2(const Str& text) override { ps2_text = text; }

 private:
  // One byte or empty-on-EOF; drives writers on demand.
  OsResult<Str> read_byte(Fd fd) {
    auto it = proc().fds.find(fd);
    if (it == proc().fds.end()) return os_err<Str>("bad file descriptor");
    auto entry = it->second;
    if (entry.kind == SymbolicSystem::FdEntry::Kind::PipeWrite)
      return os_err<Str>("file descriptor not readable");
    if (entry.kind == SymbolicSystem::FdEntry::Kind::PipeRead) {
      while (true) {
        auto& pipe = sys_.pipes[entry.id];
        if (!pipe.buffer.empty()) {
          Str b = pipe.buffer.substr(0, 1);
          pipe.buffer.erase(0, 1);
          return os_ok(b);
        }
        if (sys_.writers_of(entry.id) == 0) return os_ok(Str());
        auto writer = sys_.first_writer(entry.id);
        if (!writer) return os_ok(Str());
        for (int k = 0; k < 10 && !sys_.processes.at(*writer).zombie; k++)
          if (!sys_.step_process(*writer)) throw SymDeadlock{};
      }
    }
    auto& of = sys_.open_files[entry.id];
    using K = SymbolicSystem::OpenFile::Kind;
    if (of.kind == K::Null) return os_ok(Str());
    if (of.kind == K::StdoutSink || of.kind == K::StderrSink)
      return os_err<Str>("file descriptor not readable");
    const Str* data = &of.data;
    if (of.kind == K::File) {
      FsNode* n = sys_.walk(of.path, true);
      if (!n || n->kind != FsNode::Kind::File) return os_err<Str>("no such file");
      data = &n->content;
    }
    if (of.offset >= data->size()) return os_ok(Str());
    Str b = data->substr(of.offset, 1);
    of.offset++;
    return os_ok(b);
  }

  OsResult<Str> read_line_raw(Fd fd, size_t max) {
    Str out;
    while (out.size() < max) {
      auto b = read_byte(fd);
      if (!b.ok()) return b;
      if ((*b).empty()) break;
      out += (*b)[0];
    }
    return os_ok(out);
  }

  SymbolicSystem& sys_;
  Pid self_;
};

// ---------------------------------------------------------------------------
// Scheduling

inline void SymbolicSystem::deliver_signal(Pid pid, Sig sig) {
  auto it = processes.find(pid);
  if (it == processes.end() || it->second.zombie) return;
  Process& p = it->second;
  SigDisposition d = SigDisposition::Default;
  auto dit = p.dispositions.find(sig);
  if (dit != p.dispositions.end()) d = dit->second;
  if (sig == Sig::KILL) {
    if (stepping.count(pid)) p.pending_kill = 128 + static_cast<int>(sig);
    else zombify(p, 128 + static_cast<int>(sig));
    return;
  }
  switch (d) {
    case SigDisposition::Record:
      p.sig_queue.push_back(sig);
      return;
    case SigDisposition::Ignore:
      return;
    case SigDisposition::Default:
      break;
  }
  switch (sig) {
    case Sig::CHLD:
    case Sig::CONT:
    case Sig::STOP:
    case Sig::TSTP:
    case Sig::TTIN:
    case Sig::TTOU:
      return;  // job control out of scope; default here is no-op
    default:
      // default-fatal: HUP INT QUIT ABRT ALRM TERM USR1 USR2 PIPE
      if (stepping.count(pid)) p.pending_kill = 128 + static_cast<int>(sig);
      else zombify(p, 128 + static_cast<int>(sig));
  }
}

// One step of one process; false when no progress is possible (re-entrant
// demand on a process already mid-step).
inline bool SymbolicSystem::step_process(Pid pid) {
  auto it = processes.find(pid);
  if (it == processes.end() || it->second.zombie) return true;
  if (stepping.count(pid)) return false;
  Process& p = it->second;
  if (is_terminal(p.cmd)) {
    // run the EXIT trap, if one was set in this process, then become a zombie
    auto tr = p.state.traps.find(Sig::EXIT);
    if (tr != p.state.traps.end() && !tr->second.empty() && !p.state.running_exit_trap) {
      consume_fuel();
      p.state.running_exit_trap = true;
      int saved = p.state.last_status;
      SymbolicOs os(*this, pid);
      CommandPtr handler = eval_detail::parse_trap_handler(os, tr->second);
      if (handler) {
        stepping.insert(pid);
        p.cmd = mk(Trapped{Sig::EXIT, saved, handler, mk(DoneCmd{})});
        stepping.erase(pid);
        return true;
      }
    }
    zombify(p, p.state.last_status);
    return true;
  }
  consume_fuel();
  stepping.insert(pid);
  SymbolicOs os(*this, pid);
  CommandPtr cmd = p.cmd;
  bool ok = true;
  try {
    step_eval(p.state, os, false, cmd);
  } catch (...) {
    stepping.erase(pid);
    throw;
  }
  stepping.erase(pid);
  auto again = processes.find(pid);
  if (again == processes.end()) return ok;
  Process& p2 = again->second;
  if (p2.pending_kill) {
    zombify(p2, *p2.pending_kill);
    return ok;
  }
  if (!p2.zombie) p2.cmd = cmd;
  return ok;
}

// ---------------------------------------------------------------------------
// Driving a whole program

struct StepTrace {
  std::vector<Str> records;  // one JSON object per root-shell step
  int status = 0;
  Str stdout_bytes, stderr_bytes;
  bool fuel_exhausted = false;
};

struct SymbolicSpec {
  std::map<Str, Str> env;
  FsNode fs_root;  // default: empty root directory
  std::map<Str, Str> passwd;
  Str stdin_data;
  long fuel = 5000;
  Str cwd = "/";
};

inline ShellState initial_symbolic_state(const SymbolicSpec& spec) {
  ShellState st;
  st.root_pid = 1;
  st.arg0 = "smolsh";
  st.cwd = spec.cwd;
  import_host_env(st, spec.env);
  if (!lookup(st, "IFS")) st.global_env["IFS"] = " \t\n";
  if (!lookup(st, "PS1")) st.global_env["PS1"] = "$ ";
  if (!lookup(st, "PS2")) st.global_env["PS2"] = "> ";
  if (!lookup(st, "PS4")) st.global_env["PS4"] = "+ ";
  if (!lookup(st, "OPTIND")) st.global_env["OPTIND"] = "1";
  if (!lookup(st, "PATH")) st.global_env["PATH"] = "/bin";
  st.global_env["PWD"] = st.cwd;
  st.export_set.insert("PWD");
  return st;
}


// Drives the scheduler to completion or fuel exhaustion, recording every
// root-shell expansion and evaluation step. Byte-deterministic for identical
// inputs.
inline StepTrace run_symbolic(CommandPtr program, const SymbolicSpec& spec) {
  SymbolicSystem sys;
  sys.fs_root = spec.fs_root;
  sys.passwd = spec.passwd;
  sys.fuel = spec.fuel;

  SymbolicSystem::Process root;
  root.pid = sys.next_pid++;
  root.state = initial_symbolic_state(spec);
  root.cmd = std::move(program);
  int stdin_ofd = sys.next_ofd++;
  {
    SymbolicSystem::OpenFile of;
    of.kind = SymbolicSystem::OpenFile::Kind::StdinSrc;
    of.data = spec.stdin_data;
    sys.open_files[stdin_ofd] = of;
  }
  int out_ofd = sys.next_ofd++;
  {
    SymbolicSystem::OpenFile of;
    of.kind = SymbolicSystem::OpenFile::Kind::StdoutSink;
    sys.open_files[out_ofd] = of;
  }
  int err_ofd = sys.next_ofd++;
  {
    SymbolicSystem::OpenFile of;
    of.kind = SymbolicSystem::OpenFile::Kind::StderrSink;
    sys.open_files[err_ofd] = of;
  }
  root.fds[0] = {SymbolicSystem::FdEntry::Kind::Open, stdin_ofd};
  root.fds[1] = {SymbolicSystem::FdEntry::Kind::Open, out_ofd};
  root.fds[2] = {SymbolicSystem::FdEntry::Kind::Open, err_ofd};
  Pid root_pid = root.pid;
  sys.processes[root_pid] = std::move(root);

  StepTrace trace;
  int step_no = 0;
  try {
    while (true) {
      auto& rootp = sys.processes.at(root_pid);
      if (rootp.zombie) break;
      // one round: every live process steps once, root first (pid order)
      std::vector<Pid> live;
      for (auto& [pid, p] : sys.processes)
        if (!p.zombie) live.push_back(pid);
      for (Pid pid : live) {
        auto pit = sys.processes.find(pid);
        if (pit == sys.processes.end() || pit->second.zombie) continue;
        if (pid == root_pid) {
          // record the root step with state deltas
          auto& rp = pit->second;
          if (is_terminal(rp.cmd)) {
            sys.step_process(pid);
            continue;
          }
          std::map<Str, Str> env_before = rp.state.global_env;
          size_t out_before = sys.stdout_sink.size();
          size_t err_before = sys.stderr_sink.size();
          sys.consume_fuel();
          SymbolicOs os(sys, pid);
          sys.stepping.insert(pid);
          CommandPtr cmd = rp.cmd;
          EvalStep es;
          try {
            es = step_eval(rp.state, os, false, cmd);
          } catch (...) {
            sys.stepping.erase(pid);
            if (auto* stillp = &sys.processes.at(root_pid); !stillp->zombie)
              stillp->cmd = cmd;
            throw;
          }
          sys.stepping.erase(pid);
          auto& rp2 = sys.processes.at(root_pid);
          if (rp2.pending_kill) {
            sys.zombify(rp2, *rp2.pending_kill);
          } else if (!rp2.zombie) {
            rp2.cmd = cmd;
          }
          EnvDelta delta;
          if (!rp2.zombie) {
            for (auto& [k, v] : rp2.state.global_env) {
              auto old = env_before.find(k);
              if (old == env_before.end() || old->second != v) delta[k] = v;
            }
            for (auto& [k, v] : env_before)
              if (!rp2.state.global_env.count(k)) delta[k] = std::nullopt;
          }
          Str term = rp2.zombie ? Str("\xe2\x9f\xa8" "exited\xe2\x9f\xa9")
                                : render(rp2.cmd);
          trace.records.push_back(to_trace_json(
              step_no++, es.expand_phase ? "expand" : "eval", es.rule, delta, term,
              sys.stdout_sink.substr(out_before), sys.stderr_sink.substr(err_before)));
        } else {
          sys.step_process(pid);
        }
      }
    }
  } catch (FuelExhausted&) {
    trace.fuel_exhausted = true;
  } catch (SymDeadlock&) {
    trace.fuel_exhausted = true;
  }
  auto& rootp = sys.processes.at(root_pid);
  trace.status = rootp.zombie ? rootp.exit_status : rootp.state.last_status;
  trace.stdout_bytes = sys.stdout_sink;
  trace.stderr_bytes = sys.stderr_sink;
  return trace;
}

}  // namespace smolsh

#endif  // SMOLSH_OS_SYMBOLIC_HPP
