// smolsh-step: the symbolic stepper. Runs a shell program in the simulated
// OS and emits a JSON trace of every root-shell step:
//   {"version":1,"source":...,"steps":[...],"final":{"status":n,"stdout":...,
//    "stderr":...}}

#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"
#include "smolsh/os_symbolic.hpp"

using namespace smolsh;
using nlohmann::json;

namespace {

FsNode fs_from_json(const json& node) {
  FsNode out;
  if (node.contains("dir")) {
    out.kind = FsNode::Kind::Dir;
    for (auto& [name, child] : node["dir"].items())
      out.children[name] = fs_from_json(child);
  } else if (node.contains("file")) {
    out.kind = FsNode::Kind::File;
    out.content = node["file"].get<Str>();
    if (node.contains("executable")) out.executable = node["executable"].get<bool>();
  } else if (node.contains("link")) {
    out.kind = FsNode::Kind::Symlink;
    out.target = node["link"].get<Str>();
  }
  return out;
}

Str read_file_or_die(const Str& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::cerr << "smolsh-step: cannot read " << path << "\n";
    exit(2);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Inline JSON or a file path holding JSON.
json load_json_arg(const Str& arg) {
  Str text = (!arg.empty() && (arg[0] == '{' || arg[0] == '[')) ? arg
                                                                : read_file_or_die(arg);
  return json::parse(text);
}

void emit_envelope(const Str& source, const std::vector<Str>& steps, int status,
                   const Str& out, const Str& err, bool fuel_exhausted) {
  Str env = "{\"version\":1,\"source\":" + jsonw::str(source) + ",\"steps\":[";
  for (size_t i = 0; i < steps.size(); i++) env += (i ? "," : "") + steps[i];
  env += "],\"final\":{\"status\":" + std::to_string(status) +
         ",\"stdout\":" + jsonw::str(out) + ",\"stderr\":" + jsonw::str(err);
  if (fuel_exhausted) env += ",\"fuel_exhausted\":true";
  env += "}}";
  std::cout << env << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  Str source;
  bool have_source = false;
  SymbolicSpec spec;
  for (int i = 1; i < argc; i++) {
    Str a = argv[i];
    auto need = [&](const char* what) -> Str {
      if (i + 1 >= argc) {
        std::cerr << "smolsh-step: " << what << " requires an argument\n";
        exit(2);
      }
      return argv[++i];
    };
    if (a == "--cmd") {
      source = need("--cmd");
      have_source = true;
    } else if (a == "--env") {
      Str kv = need("--env");
      size_t eq = kv.find('=');
      if (eq == Str::npos) {
        std::cerr << "smolsh-step: --env expects k=v\n";
        return 2;
      }
      spec.env[kv.substr(0, eq)] = kv.substr(eq + 1);
    } else if (a == "--fs") {
      try {
        spec.fs_root = fs_from_json(load_json_arg(need("--fs")));
      } catch (std::exception& e) {
        std::cerr << "smolsh-step: bad --fs: " << e.what() << "\n";
        return 2;
      }
    } else if (a == "--passwd") {
      try {
        json pw = load_json_arg(need("--passwd"));
        for (auto& [user, home] : pw.items()) spec.passwd[user] = home.get<Str>();
      } catch (std::exception& e) {
        std::cerr << "smolsh-step: bad --passwd: " << e.what() << "\n";
        return 2;
      }
    } else if (a == "--stdin") {
      spec.stdin_data = need("--stdin");
    } else if (a == "--fuel") {
      spec.fuel = std::atol(need("--fuel").c_str());
      if (spec.fuel <= 0) {
        std::cerr << "smolsh-step: --fuel must be positive\n";
        return 2;
      }
    } else if (a == "--help") {
      std::cout << "usage: smolsh-step [--cmd string | script] [--env k=v]... "
                   "[--fs json] [--passwd json] [--stdin text] [--fuel n]\n";
      return 0;
    } else if (!a.empty() && a[0] == '-') {
      std::cerr << "smolsh-step: unknown flag " << a << "\n";
      return 2;
    } else {
      source = read_file_or_die(a);
      have_source = true;
    }
  }
  if (!have_source) {
    std::cerr << "smolsh-step: need --cmd or a script file\n";
    return 2;
  }

  // parse the whole program up front
  auto session = ParseSession::from_string(source);
  CommandPtr program;
  std::map<Str, Str> no_aliases;
  while (true) {
    auto r = parse_next(*session, no_aliases, "", "");
    if (r.kind == ParseResult::Kind::Eof) break;
    if (r.kind == ParseResult::Kind::Blank) continue;
    if (r.kind == ParseResult::Kind::SyntaxError) {
      std::vector<Str> steps;
      steps.push_back(to_trace_json(0, "eval", "SyntaxError", {},
                                    "line " + std::to_string(r.lineno) + ": " + r.error,
                                    "", ""));
      emit_envelope(source, steps, 2, "", "smolsh: syntax error: " + r.error + "\n",
                    false);
      return 2;
    }
    program = program ? mk(Seq{program, r.cmd}) : r.cmd;
  }
  if (!program) program = mk(Simple{{}, {}, {}});

  StepTrace trace = run_symbolic(program, spec);
  emit_envelope(source, trace.records, trace.status, trace.stdout_bytes,
                trace.stderr_bytes, trace.fuel_exhausted);
  return 0;
}
