// os.hpp: the abstract OS interface -- the single boundary through which all
// effects flow. Two instances: os_system.hpp (real syscalls) and
// os_symbolic.hpp (deterministic simulation).
//
// Call inventory note: the paper counts 40 calls (14 process/signal, 24
// filesystem of which 10 are stat/lstat variants, 2 parser prompts). The ten
// stat variants are collapsed here into one stat-kind record with a follow
// flag; everything else maps one call per member.

#ifndef SMOLSH_OS_HPP
#define SMOLSH_OS_HPP

#include "smolsh/state.hpp"

namespace smolsh {

struct OsError { Str message; };

template <typename T>
struct OsResult {
  std::optional<T> value;
  Str error;
  bool ok() const { return value.has_value(); }
  const T& operator*() const { return *value; }
  const T* operator->() const { return &*value; }
};
template <typename T>
OsResult<T> os_ok(T v) { return {std::move(v), {}}; }
template <typename T>
OsResult<T> os_err(Str msg) { return {std::nullopt, std::move(msg)}; }

struct ReadLineResult {
  enum class Kind { Line, Eof, Error } kind = Kind::Eof;
  Str bytes;   // Line: content without the terminating newline
  Str error;
};

enum class FileKind { Regular, Directory, Symlink, CharDev, BlockDev, Fifo, Socket };
struct StatInfo {
  FileKind kind = FileKind::Regular;
  uint64_t size = 0;
  int64_t mtime = 0;
  int perms = 0;  // permission bits
};

enum class SigDisposition { Default, Ignore, Record };

struct RusageInfo {
  // microseconds
  int64_t self_user = 0, self_sys = 0, children_user = 0, children_sys = 0;
};

struct ExecError {
  Str message;
  bool noexec = false;       // ENOEXEC: fall back to running as a script
  bool unsupported = false;  // symbolic instance cannot exec images
  int unsupported_status = 0;
};

// File-descriptor wiring applied between fork and the child's first step
// (pipeline plumbing, command-substitution capture, background stdin). Doing
// this at fork time leaves no saved-fd copies behind in the child.
struct FdAction {
  enum class Kind { Dup2, Close, OpenDevNull };
  Kind kind = Kind::Close;
  Fd from = -1;
  Fd to = -1;
};
inline FdAction fd_dup2(Fd from, Fd to) { return {FdAction::Kind::Dup2, from, to}; }
inline FdAction fd_close(Fd fd) { return {FdAction::Kind::Close, fd, -1}; }
inline FdAction fd_devnull(Fd to) { return {FdAction::Kind::OpenDevNull, -1, to}; }

class OsInterface {
 public:
  virtual ~OsInterface() = default;

  // --- process calls
  // Fork a new shell evaluating cmd in child_state; returns child pid.
  virtual Pid fork_shell(const ShellState& child_state, CommandPtr cmd,
                         const std::vector<FdAction>& actions = {}) = 0;
  // Blocks until pid terminates; 0..255 (128+sig for signal deaths), 127 for
  // unknown pids.
  virtual int wait_pid(Pid pid) = 0;
  virtual Pid self_pid() = 0;
  virtual bool send_signal(Pid pid, Sig sig) = 0;
  virtual std::optional<Sig> pending_signal() = 0;
  virtual void set_disposition(Sig sig, SigDisposition d) = 0;
  virtual RusageInfo rusage() = 0;
  // Replace the process image; returns only on failure.
  virtual ExecError exec_image(const Str& path, const Str& argv0,
                               const Fields& args, const std::map<Str, Str>& env) = 0;

  // --- fd calls
  virtual OsResult<std::pair<Fd, Fd>> make_pipe() = 0;
  virtual void close_fd(Fd fd) = 0;
  virtual OsResult<Str> read_all(Fd fd) = 0;
  virtual OsResult<Str> read_chunk(Fd fd, size_t max) = 0;
  // One line; allow_continuation processes backslash-newline joins (for the
  // read builtin). The system instance blocks; the symbolic instance
  // demand-steps writers internally.
  virtual ReadLineResult read_line(Fd fd, bool allow_continuation) = 0;
  virtual OsResult<bool> write_all(Fd fd, const Str& bytes) = 0;
  // Open for redirection; absolute path.
  virtual OsResult<Fd> file_redir(RedirMode mode, const Str& path) = 0;
  // Duplicate fd to the lowest free fd >= 10 (close-on-exec) and close it.
  virtual OsResult<Fd> close_and_save(Fd fd) = 0;
  // dup2(from, to); optionally closing from afterwards.
  virtual OsResult<bool> renumber(bool close_original, Fd from, Fd to) = 0;
  virtual bool fd_valid(Fd fd) = 0;
  // An fd that yields exactly body then EOF, never blocking the shell.
  virtual OsResult<Fd> heredoc(const Str& body) = 0;

  // --- fs calls (absolute paths; callers resolve against sigma.cwd)
  virtual bool file_exists(const Str& path) = 0;
  virtual bool file_executable(const Str& path) = 0;
  virtual bool file_readable(const Str& path) = 0;
  virtual bool file_writable(const Str& path) = 0;
  virtual bool fd_is_tty(Fd fd) = 0;
  virtual std::optional<StatInfo> stat_path(const Str& path, bool follow) = 0;
  virtual OsResult<std::vector<Str>> list_dir(const Str& path) = 0;  // sorted
  virtual Str getcwd_os() = 0;
  virtual OsResult<bool> chdir_os(const Str& path) = 0;
  virtual int umask_get() = 0;
  virtual void umask_set(int mask) = 0;
  virtual std::optional<Str> home_dir(const Str& user) = 0;  // user database

  // --- parser prompts (inert bytes)
  virtual void set_ps1(const Str& text) = 0;
  virtual void set_ps2(const Str& text) = 0;
  Str ps1_text, ps2_text;
};

// ---------------------------------------------------------------------------
// Path utilities

// Logical join + normalization: resolves "." and ".." textually.
inline Str normalize_path(const Str& path) {
  std::vector<Str> parts;
  size_t i = 0;
  bool absolute = !path.empty() && path[0] == '/';
  while (i < path.size()) {
    size_t j = path.find('/', i);
    if (j == Str::npos) j = path.size();
    Str part = path.substr(i, j - i);
    if (part == "..") {
      if (!parts.empty() && parts.back() != "..")
        parts.pop_back();
      else if (!absolute)
        parts.push_back(part);
    } else if (!part.empty() && part != ".") {
      parts.push_back(part);
    }
    i = j + 1;
  }
  Str out = absolute ? "/" : "";
  for (size_t k = 0; k < parts.size(); k++) out += (k ? "/" : "") + parts[k];
  if (out.empty()) out = absolute ? "/" : ".";
  return out;
}

inline Str join_path(const Str& base, const Str& rel) {
  if (!rel.empty() && rel[0] == '/') return normalize_path(rel);
  return normalize_path(base + "/" + rel);
}

// Resolve a command name against $PATH. Names containing a slash are returned
// as-is. Empty PATH entries mean the current directory. No memoization.
inline std::optional<Str> resolve_path(const ShellState& st, OsInterface& os,
                                       const Str& name, bool need_exec = true) {
  if (name.find('/') != Str::npos) return name;
  Str path = lookup(st, "PATH").value_or("");
  size_t i = 0;
  while (i <= path.size()) {
    size_t j = path.find(':', i);
    if (j == Str::npos) j = path.size();
    Str dir = path.substr(i, j - i);
    if (dir.empty()) dir = st.cwd;
    Str candidate = join_path(dir, name);
    if (os.file_exists(candidate) && (!need_exec || os.file_executable(candidate))) {
      auto stt = os.stat_path(candidate, true);
      if (!stt || stt->kind != FileKind::Directory) return candidate;
    }
    i = j + 1;
    if (j == path.size()) break;
  }
  return std::nullopt;
}

}  // namespace smolsh

#endif  // SMOLSH_OS_HPP
