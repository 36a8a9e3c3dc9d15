// os_system.hpp: the real-syscall OS instance. A thin shim over the host:
// the host scheduler does the scheduling, host signals are recorded by a
// handler into an async-signal-safe ring and polled by pending_signal.

#ifndef SMOLSH_OS_SYSTEM_HPP
#define SMOLSH_OS_SYSTEM_HPP

#include <dirent.h>
#include <fcntl.h>
#include <pwd.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>

#include "smolsh/evaluation.hpp"

namespace smolsh {

namespace system_detail {

inline constexpr size_t kSigRing = 256;
inline std::atomic<int> g_sig_ring[kSigRing];
inline std::atomic<size_t> g_sig_tail{0};
inline size_t g_sig_head = 0;  // consumed only on the stepping thread

extern "C" inline void record_signal(int signo) {
  size_t t = g_sig_tail.load(std::memory_order_relaxed);
  g_sig_ring[t % kSigRing].store(signo, std::memory_order_relaxed);
  g_sig_tail.store(t + 1, std::memory_order_release);
}

inline void reset_signal_queue() {
  g_sig_head = g_sig_tail.load(std::memory_order_relaxed);
}

}  // namespace system_detail

class SystemOs : public OsInterface {
 public:
  // --- process calls

  Pid fork_shell(const ShellState& child_state, CommandPtr cmd,
                 const std::vector<FdAction>& actions = {}) override {
    pid_t pid = ::fork();
    if (pid < 0) return -1;
    if (pid == 0) {
      system_detail::reset_signal_queue();
      for (auto& a : actions) {
        switch (a.kind) {
          case FdAction::Kind::Dup2:
            ::dup2(a.from, a.to);
            break;
          case FdAction::Kind::Close:
            ::close(a.from);
            break;
          case FdAction::Kind::OpenDevNull: {
            int nul = ::open("/dev/null", O_RDONLY);
            if (nul >= 0 && nul != a.to) {
              ::dup2(nul, a.to);
              ::close(nul);
            }
            break;
          }
        }
      }
      // child: non-ignored traps reset to default dispositions
      for (auto& [sig, name] : signal_table()) {
        (void)name;
        if (sig == Sig::EXIT || sig == Sig::KILL || sig == Sig::STOP) continue;
        auto h = child_state.traps.find(sig);
        ::signal(static_cast<int>(sig),
                 (h != child_state.traps.end() && h->second.empty()) ? SIG_IGN
                                                                     : SIG_DFL);
      }
      ShellState st = child_state;
      int status = evaluate_to_exit(st, *this, std::move(cmd));
      ::_exit(clamp_status(status));
    }
    return pid;
  }

  int wait_pid(Pid pid) override {
    if (pid <= 0) return 127;
    int status = 0;
    while (true) {
      pid_t r = ::waitpid(static_cast<pid_t>(pid), &status, 0);
      if (r < 0) {
        if (errno == EINTR) continue;
        return 127;  // unknown pid
      }
      break;
    }
    if (WIFEXITED(status)) return WEXITSTATUS(status);
    if (WIFSIGNALED(status)) return 128 + WTERMSIG(status);
    return 127;
  }

  Pid self_pid() override { return ::getpid(); }

  bool send_signal(Pid pid, Sig sig) override {
    return ::kill(static_cast<pid_t>(pid), static_cast<int>(sig)) == 0;
  }

  std::optional<Sig> pending_signal() override {
    using namespace system_detail;
    if (g_sig_head == g_sig_tail.load(std::memory_order_acquire)) return std::nullopt;
    int signo = g_sig_ring[g_sig_head % kSigRing].load(std::memory_order_relaxed);
    g_sig_head++;
    return static_cast<Sig>(signo);
  }

  void set_disposition(Sig sig, SigDisposition d) override {
    if (sig == Sig::EXIT || sig == Sig::KILL || sig == Sig::STOP) return;
    struct sigaction sa;
    std::memset(&sa, 0, sizeof sa);
    sigemptyset(&sa.sa_mask);
    switch (d) {
      case SigDisposition::Default: sa.sa_handler = SIG_DFL; break;
      case SigDisposition::Ignore: sa.sa_handler = SIG_IGN; break;
      case SigDisposition::Record:
        sa.sa_handler = system_detail::record_signal;
        sa.sa_flags = SA_RESTART;
        break;
    }
    ::sigaction(static_cast<int>(sig), &sa, nullptr);
  }

  RusageInfo rusage() override {
    RusageInfo info;
    struct rusage self, children;
    if (::getrusage(RUSAGE_SELF, &self) == 0) {
      info.self_user = self.ru_utime.tv_sec * 1000000LL + self.ru_utime.tv_usec;
      info.self_sys = self.ru_stime.tv_sec * 1000000LL + self.ru_stime.tv_usec;
    }
    if (::getrusage(RUSAGE_CHILDREN, &children) == 0) {
      info.children_user =
          children.ru_utime.tv_sec * 1000000LL + children.ru_utime.tv_usec;
      info.children_sys =
          children.ru_stime.tv_sec * 1000000LL + children.ru_stime.tv_usec;
    }
    return info;
  }

  ExecError exec_image(const Str& path, const Str& argv0, const Fields& args,
                       const std::map<Str, Str>& env) override {
    std::vector<char*> argv;
    std::vector<Str> storage;
    storage.push_back(argv0);
    for (auto& a : args) storage.push_back(a);
    for (auto& s : storage) argv.push_back(const_cast<char*>(s.c_str()));
    argv.push_back(nullptr);
    std::vector<Str> env_storage;
    for (auto& [k, v] : env) env_storage.push_back(k + "=" + v);
    std::vector<char*> envp;
    for (auto& s : env_storage) envp.push_back(const_cast<char*>(s.c_str()));
    envp.push_back(nullptr);
    ::execve(path.c_str(), argv.data(), envp.data());
    ExecError err;
    err.noexec = errno == ENOEXEC;
    err.message = std::strerror(errno);
    return err;
  }

  // --- fd calls

  OsResult<std::pair<Fd, Fd>> make_pipe() override {
    int fds[2];
    if (::pipe(fds) != 0) return os_err<std::pair<Fd, Fd>>(std::strerror(errno));
    return os_ok(std::make_pair(fds[0], fds[1]));
  }

  void close_fd(Fd fd) override { ::close(fd); }

  OsResult<Str> read_all(Fd fd) override {
    Str out;
    char buf[4096];
    while (true) {
      ssize_t n = ::read(fd, buf, sizeof buf);
      if (n < 0) {
        if (errno == EINTR) continue;
        return os_err<Str>(std::strerror(errno));
      }
      if (n == 0) break;
      out.append(buf, static_cast<size_t>(n));
    }
    return os_ok(out);
  }

  OsResult<Str> read_chunk(Fd fd, size_t max) override {
    Str out;
    out.resize(max);
    while (true) {
      ssize_t n = ::read(fd, out.data(), max);
      if (n < 0) {
        if (errno == EINTR) continue;
        return os_err<Str>(std::strerror(errno));
      }
      out.resize(static_cast<size_t>(n));
      return os_ok(out);
    }
  }

  // One line, byte at a time so nothing past the newline is consumed (the
  // shell and its children may share this fd).
  ReadLineResult read_line(Fd fd, bool allow_continuation) override {
    ReadLineResult res;
    Str line;
    bool saw_any = false;
    while (true) {
      char c;
      ssize_t n = ::read(fd, &c, 1);
      if (n < 0) {
        if (errno == EINTR) continue;
        res.kind = ReadLineResult::Kind::Error;
        res.error = std::strerror(errno);
        return res;
      }
      if (n == 0) break;  // EOF
      saw_any = true;
      if (c == '\n') {
        if (allow_continuation && !line.empty() && line.back() == '\\') {
          line.pop_back();
          continue;
        }
        res.kind = ReadLineResult::Kind::Line;
        res.bytes = line;
        return res;
      }
      line += c;
    }
    res.kind = saw_any ? ReadLineResult::Kind::Line : ReadLineResult::Kind::Eof;
    res.bytes = line;
    return res;
  }

  OsResult<bool> write_all(Fd fd, const Str& bytes) override {
    size_t off = 0;
    while (off < bytes.size()) {
      ssize_t n = ::write(fd, bytes.data() + off, bytes.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        return os_err<bool>(std::strerror(errno));
      }
      off += static_cast<size_t>(n);
    }
    return os_ok(true);
  }

  OsResult<Fd> file_redir(RedirMode mode, const Str& path) override {
    int flags = 0;
    switch (mode) {
      case RedirMode::Write: flags = O_WRONLY | O_CREAT | O_TRUNC; break;
      case RedirMode::Clobber: flags = O_WRONLY | O_CREAT | O_TRUNC; break;
      case RedirMode::Read: flags = O_RDONLY; break;
      case RedirMode::ReadWrite: flags = O_RDWR | O_CREAT; break;
      case RedirMode::Append: flags = O_WRONLY | O_CREAT | O_APPEND; break;
    }
    int fd = ::open(path.c_str(), flags, 0666);
    if (fd < 0) return os_err<Fd>(std::strerror(errno));
    return os_ok(fd);
  }

  OsResult<Fd> close_and_save(Fd fd) override {
    int saved = ::fcntl(fd, F_DUPFD_CLOEXEC, 10);
    if (saved < 0) return os_err<Fd>(std::strerror(errno));
    ::close(fd);
    return os_ok(saved);
  }

  OsResult<bool> renumber(bool close_original, Fd from, Fd to) override {
    if (from != to && ::dup2(from, to) < 0) return os_err<bool>(std::strerror(errno));
    if (close_original && from != to) ::close(from);
    return os_ok(true);
  }

  bool fd_valid(Fd fd) override { return ::fcntl(fd, F_GETFD) >= 0; }

  // An unlinked temp file: yields exactly body then EOF at any size without
  // blocking the shell.
  OsResult<Fd> heredoc(const Str& body) override {
    char templ[] = "/tmp/smolsh_hd_XXXXXX";
    int fd = ::mkstemp(templ);
    if (fd < 0) return os_err<Fd>(std::strerror(errno));
    ::unlink(templ);
    size_t off = 0;
    while (off < body.size()) {
      ssize_t n = ::write(fd, body.data() + off, body.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        ::close(fd);
        return os_err<Fd>(std::strerror(errno));
      }
      off += static_cast<size_t>(n);
    }
    if (::lseek(fd, 0, SEEK_SET) < 0) {
      ::close(fd);
      return os_err<Fd>(std::strerror(errno));
    }
    return os_ok(fd);
  }

  // --- fs calls

  bool file_exists(const Str& path) override { return ::access(path.c_str(), F_OK) == 0; }
  bool file_executable(const Str& path) override {
    return ::access(path.c_str(), X_OK) == 0;
  }
  bool file_readable(const Str& path) override { return ::access(path.c_str(), R_OK) == 0; }
  bool file_writable(const Str& path) override { return ::access(path.c_str(), W_OK) == 0; }
  bool fd_is_tty(Fd fd) override { return ::isatty(fd) == 1; }

  std::optional<StatInfo> stat_path(const Str& path, bool follow) override {
    struct stat sb;
    int r = follow ? ::stat(path.c_str(), &sb) : ::lstat(path.c_str(), &sb);
    if (r != 0) return std::nullopt;
    StatInfo info;
    if (S_ISREG(sb.st_mode)) info.kind = FileKind::Regular;
    else if (S_ISDIR(sb.st_mode)) info.kind = FileKind::Directory;
    else if (S_ISLNK(sb.st_mode)) info.kind = FileKind::Symlink;
    else if (S_ISCHR(sb.st_mode)) info.kind = FileKind::CharDev;
    else if (S_ISBLK(sb.st_mode)) info.kind = FileKind::BlockDev;
    else if (S_ISFIFO(sb.st_mode)) info.kind = FileKind::Fifo;
    else if (S_ISSOCK(sb.st_mode)) info.kind = FileKind::Socket;
    info.size = static_cast<uint64_t>(sb.st_size);
    info.mtime = sb.st_mtime;
    info.perms = sb.st_mode & 07777;
    return info;
  }

  OsResult<std::vector<Str>> list_dir(const Str& path) override {
    DIR* d = ::opendir(path.c_str());
    if (!d) return os_err<std::vector<Str>>(std::strerror(errno));
    std::vector<Str> names;
    while (struct dirent* e = ::readdir(d)) {
      Str name = e->d_name;
      if (name == "." || name == "..") continue;
      names.push_back(name);
    }
    ::closedir(d);
    std::sort(names.begin(), names.end());
    return os_ok(names);
  }

  Str getcwd_os() override {
    char buf[4096];
    if (::getcwd(buf, sizeof buf)) return buf;
    return "/";
  }

  OsResult<bool> chdir_os(const Str& path) override {
    if (::chdir(path.c_str()) != 0) return os_err<bool>(std::strerror(errno));
    return os_ok(true);
  }

  int umask_get() override {
    mode_t m = ::umask(0);
    ::umask(m);
    return static_cast<int>(m);
  }
  void umask_set(int mask) override { ::umask(static_cast<mode_t>(mask)); }

  std::optional<Str> home_dir(const Str& user) override {
    struct passwd* pw = ::getpwnam(user.c_str());
    if (!pw || !pw->pw_dir) return std::nullopt;
    return Str(pw->pw_dir);
  }

  void set_ps1(const Str& text) override { ps1_text = text; }
  void set_ps2(const Str& text) override { ps2_text = text; }
};

}  // namespace smolsh

#endif  // SMOLSH_OS_SYSTEM_HPP
