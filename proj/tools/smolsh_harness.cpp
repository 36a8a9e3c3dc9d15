// smolsh-harness: the conformance test harness. Each <name>.test script runs
// in a hermetic temp directory; stdout must match <name>.test.out byte for
// byte and the exit code must match the integer in <name>.test.ec (missing
// .ec means 0). --diff mode compares two shells directly instead.

#include <dirent.h>
#include <fcntl.h>
#include <signal.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace {

using Str = std::string;

struct RunResult {
  int status = -1;
  Str out;
  bool timed_out = false;
};

Str slurp(const Str& path, bool* ok = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    if (ok) *ok = false;
    return "";
  }
  if (ok) *ok = true;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Run `shell script` in work_dir, stdout captured, stdin /dev/null.
RunResult run_shell(const Str& shell, const Str& script, const Str& work_dir,
                    int timeout_sec) {
  RunResult res;
  int outpipe[2];
  if (pipe(outpipe) != 0) return res;
  pid_t pid = fork();
  if (pid < 0) {
    close(outpipe[0]);
    close(outpipe[1]);
    return res;
  }
  if (pid == 0) {
    setpgid(0, 0);
    if (chdir(work_dir.c_str()) != 0) _exit(125);
    int nul = open("/dev/null", O_RDONLY);
    if (nul >= 0) {
      dup2(nul, 0);
      close(nul);
    }
    dup2(outpipe[1], 1);
    close(outpipe[0]);
    close(outpipe[1]);
    execl(shell.c_str(), shell.c_str(), script.c_str(), (char*)nullptr);
    _exit(126);
  }
  setpgid(pid, pid);
  close(outpipe[1]);
  // read with timeout: poll the pipe, kill the process group when exceeded
  time_t deadline = time(nullptr) + timeout_sec;
  char buf[4096];
  int fd = outpipe[0];
  fcntl(fd, F_SETFL, O_NONBLOCK);
  bool child_done = false;
  int status = 0;
  while (true) {
    ssize_t n = read(fd, buf, sizeof buf);
    if (n > 0) {
      res.out.append(buf, static_cast<size_t>(n));
      continue;
    }
    if (n == 0) break;  // EOF: all writers gone
    if (errno != EAGAIN && errno != EINTR) break;
    if (!child_done) {
      pid_t r = waitpid(pid, &status, WNOHANG);
      if (r == pid) child_done = true;
    }
    if (child_done) {
      // child exited; grandchildren may still hold the pipe briefly
      ssize_t m = read(fd, buf, sizeof buf);
      if (m > 0) {
        res.out.append(buf, static_cast<size_t>(m));
        continue;
      }
      if (m == 0) break;
      break;  // EAGAIN after exit: stop waiting for stragglers
    }
    if (time(nullptr) >= deadline) {
      res.timed_out = true;
      kill(-pid, SIGKILL);
      break;
    }
    struct timespec ts = {0, 2000000};  // 2ms
    nanosleep(&ts, nullptr);
  }
  close(fd);
  if (!child_done) waitpid(pid, &status, 0);
  if (res.timed_out) {
    res.status = -1;
  } else if (WIFEXITED(status)) {
    res.status = WEXITSTATUS(status);
  } else if (WIFSIGNALED(status)) {
    res.status = 128 + WTERMSIG(status);
  }
  return res;
}

Str make_temp_dir() {
  char templ[] = "/tmp/smolsh_test_XXXXXX";
  char* d = mkdtemp(templ);
  return d ? Str(d) : Str("/tmp");
}

void remove_tree(const Str& path) {
  DIR* d = opendir(path.c_str());
  if (d) {
    while (struct dirent* e = readdir(d)) {
      Str name = e->d_name;
      if (name == "." || name == "..") continue;
      Str full = path + "/" + name;
      struct stat sb;
      if (lstat(full.c_str(), &sb) == 0 && S_ISDIR(sb.st_mode))
        remove_tree(full);
      else
        unlink(full.c_str());
    }
    closedir(d);
  }
  rmdir(path.c_str());
}

Str category_of(const Str& name) {
  size_t dot = name.find('.');
  return dot == Str::npos ? Str("misc") : name.substr(0, dot);
}

void print_diff(const Str& expected, const Str& got) {
  std::istringstream e(expected), g(got);
  Str el, gl;
  int line = 0;
  while (true) {
    bool he = static_cast<bool>(std::getline(e, el));
    bool hg = static_cast<bool>(std::getline(g, gl));
    line++;
    if (!he && !hg) break;
    if (he != hg || el != gl) {
      if (he) std::cout << "  -" << line << ": " << el << "\n";
      if (hg) std::cout << "  +" << line << ": " << gl << "\n";
      if (!he || !hg) break;
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  Str tests_dir;
  Str shell = "./smolsh";
  Str ref_shell;
  Str allow_file;
  int timeout_sec = 10;
  bool list_only = false;
  for (int i = 1; i < argc; i++) {
    Str a = argv[i];
    auto need = [&](const char* what) -> Str {
      if (i + 1 >= argc) {
        std::cerr << "smolsh-harness: " << what << " requires an argument\n";
        exit(2);
      }
      return argv[++i];
    };
    if (a == "--shell") shell = need("--shell");
    else if (a == "--diff") ref_shell = need("--diff");
    else if (a == "--timeout") timeout_sec = std::atoi(need("--timeout").c_str());
    else if (a == "--allow") allow_file = need("--allow");
    else if (a == "--list") list_only = true;
    else if (!a.empty() && a[0] == '-') {
      std::cerr << "usage: smolsh-harness [--shell path] [--diff ref_shell] "
                   "[--timeout sec] [--allow file] tests_dir\n";
      return 2;
    } else tests_dir = a;
  }
  if (tests_dir.empty()) {
    std::cerr << "smolsh-harness: tests directory required\n";
    return 2;
  }
  // absolute shell paths: tests run from temp dirs
  char realbuf[4096];
  if (realpath(shell.c_str(), realbuf)) shell = realbuf;
  if (!ref_shell.empty() && realpath(ref_shell.c_str(), realbuf)) ref_shell = realbuf;

  std::set<Str> allowed;  // documented divergences for --diff mode
  if (!allow_file.empty()) {
    std::ifstream in(allow_file);
    Str line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      size_t sp = line.find_first_of(" \t");
      allowed.insert(sp == Str::npos ? line : line.substr(0, sp));
    }
  }

  std::vector<Str> tests;
  {
    DIR* d = opendir(tests_dir.c_str());
    if (!d) {
      std::cerr << "smolsh-harness: cannot open " << tests_dir << "\n";
      return 2;
    }
    while (struct dirent* e = readdir(d)) {
      Str name = e->d_name;
      if (name.size() > 5 && name.substr(name.size() - 5) == ".test")
        tests.push_back(name.substr(0, name.size() - 5));
    }
    closedir(d);
  }
  std::sort(tests.begin(), tests.end());
  if (list_only) {
    for (auto& t : tests) std::cout << t << "\n";
    return 0;
  }

  std::map<Str, std::pair<int, int>> categories;  // category -> (pass, total)
  int failed = 0, broken = 0, diverged_bad = 0;
  for (auto& name : tests) {
    Str script = tests_dir + "/" + name + ".test";
    if (realpath(script.c_str(), realbuf)) script = realbuf;
    Str dir = make_temp_dir();
    auto& cat = categories[category_of(name)];
    cat.second++;
    if (!ref_shell.empty()) {
      RunResult mine = run_shell(shell, script, dir, timeout_sec);
      Str dir2 = make_temp_dir();
      RunResult ref = run_shell(ref_shell, script, dir2, timeout_sec);
      remove_tree(dir2);
      bool same = !mine.timed_out && !ref.timed_out && mine.status == ref.status &&
                  mine.out == ref.out;
      if (same) {
        std::cout << "PASS " << name << "\n";
        cat.first++;
      } else if (allowed.count(name)) {
        std::cout << "DIVERGE (allowed) " << name << "\n";
        cat.first++;
      } else {
        std::cout << "DIVERGE " << name << " (mine: status " << mine.status
                  << ", ref: status " << ref.status << ")\n";
        print_diff(ref.out, mine.out);
        diverged_bad++;
      }
      remove_tree(dir);
      continue;
    }
    bool out_ok = true, ec_ok = true;
    Str expected_out = slurp(tests_dir + "/" + name + ".test.out", &out_ok);
    Str ec_text = slurp(tests_dir + "/" + name + ".test.ec", &ec_ok);
    int expected_ec = 0;
    if (ec_ok) expected_ec = std::atoi(ec_text.c_str());
    if (!out_ok) {
      std::cout << "BROKEN " << name << " (missing .test.out)\n";
      broken++;
      cat.second--;
      remove_tree(dir);
      continue;
    }
    RunResult r = run_shell(shell, script, dir, timeout_sec);
    remove_tree(dir);
    if (r.timed_out) {
      std::cout << "FAIL " << name << " (timeout)\n";
      failed++;
      continue;
    }
    if (r.out != expected_out) {
      std::cout << "FAIL " << name << " (stdout)\n";
      print_diff(expected_out, r.out);
      failed++;
      continue;
    }
    if (r.status != expected_ec) {
      std::cout << "FAIL " << name << " (exit " << r.status << " != " << expected_ec
                << ")\n";
      failed++;
      continue;
    }
    std::cout << "PASS " << name << "\n";
    cat.first++;
  }

  std::cout << "----\n";
  for (auto& [cat, counts] : categories)
    std::cout << cat << ": " << counts.first << "/" << counts.second << "\n";
  if (broken) std::cout << "broken: " << broken << "\n";
  if (!ref_shell.empty()) {
    std::cout << (diverged_bad == 0 ? "DIFF OK" : "DIFF FAILURES") << "\n";
    return diverged_bad == 0 ? 0 : 1;
  }
  std::cout << (failed == 0 ? "ALL PASS" : "FAILURES") << "\n";
  return failed == 0 ? 0 : 1;
}
