#ifndef SMOLSH_TEST_HELPERS_HPP
#define SMOLSH_TEST_HELPERS_HPP

#include "smolsh/os_symbolic.hpp"

namespace smolsh_test {

using namespace smolsh;

inline CommandPtr parse_program(const Str& src) {
  auto session = ParseSession::from_string(src);
  CommandPtr program;
  std::map<Str, Str> no_aliases;
  while (true) {
    auto r = parse_next(*session, no_aliases, "", "");
    if (r.kind == ParseResult::Kind::Eof) break;
    if (r.kind == ParseResult::Kind::Blank) continue;
    if (r.kind == ParseResult::Kind::SyntaxError)
      throw std::runtime_error("syntax error: " + r.error);
    program = program ? mk(Seq{program, r.cmd}) : r.cmd;
  }
  if (!program) program = mk(Simple{{}, {}, {}});
  return program;
}

struct SymResult {
  int status = 0;
  Str out, err;
  bool fuel_exhausted = false;
  std::vector<Str> records;
};

inline SymResult sym_run(const Str& src, SymbolicSpec spec = {}) {
  StepTrace t = run_symbolic(parse_program(src), spec);
  return {t.status, t.stdout_bytes, t.stderr_bytes, t.fuel_exhausted, t.records};
}

inline FsNode file_node(const Str& content = "", bool exec = false) {
  FsNode n;
  n.kind = FsNode::Kind::File;
  n.content = content;
  n.executable = exec;
  return n;
}

inline FsNode dir_node(std::map<Str, FsNode> children = {}) {
  FsNode n;
  n.kind = FsNode::Kind::Dir;
  n.children = std::move(children);
  return n;
}

// The six-file globbing directory from the expansion-examples figure.
inline SymbolicSpec glob_fixture() {
  SymbolicSpec spec;
  spec.fs_root = dir_node({{"ap", file_node()},
                           {"app", file_node()},
                           {"appall", file_node()},
                           {"apparition", file_node()},
                           {"appendix", file_node()},
                           {"applejack", file_node()}});
  return spec;
}

// The three-file directory used by the substitution/splitting figures.
inline SymbolicSpec abc_fixture() {
  SymbolicSpec spec;
  spec.fs_root = dir_node({{"a", file_node()}, {"b", file_node()}, {"c", file_node()}});
  return spec;
}

}  // namespace smolsh_test

#endif
