#include <iostream>
#include <map>
#include <string>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include <CLI11.hpp>

#include "hyperctr/cli/commands.hpp"

namespace {

struct CommandFlags {
  CLI::App* app = nullptr;
  std::string config_file;
  std::map<std::string, std::string> values;
  std::map<std::string, bool> switches;
};

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Keep freed tape buffers in the heap instead of returning them to the OS.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  using namespace hyperctr;
  CLI::App app{"HyperCTR: multi-modal click-through rate prediction with hypergraph convolution"};
  app.require_subcommand(1);

  std::map<std::string, CommandFlags> commands;
  for (const auto& name : cli::command_names()) {
    CommandFlags& cf = commands[name];
    cf.app = app.add_subcommand(name);
    cf.app->add_option("--config", cf.config_file, "key=value file supplying defaults");
    for (const auto& spec : cli::command_keys(name)) {
      const std::string flag = "--" + cli::Options::dashed(spec.key);
      if (spec.boolean) {
        cf.app->add_flag(flag, cf.switches[spec.key], spec.help + " (default " + spec.fallback + ")");
      } else {
        cf.app->add_option(flag, cf.values[spec.key],
                           spec.help + (spec.fallback.empty() ? "" : " (default " + spec.fallback + ")"));
      }
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  for (auto& [name, cf] : commands) {
    if (!cf.app->parsed()) continue;
    try {
      KeyValues file;
      if (!cf.config_file.empty()) file = read_key_values(cf.config_file);
      KeyValues flags;
      for (const auto& spec : cli::command_keys(name)) {
        const std::string flag = "--" + cli::Options::dashed(spec.key);
        if (cf.app->count(flag) == 0) continue;
        flags[spec.key] = spec.boolean ? (cf.switches[spec.key] ? "true" : "false") : cf.values[spec.key];
      }
      cli::run_command(name, cli::resolve_config(name, file, flags), std::cout);
    } catch (const Error& e) {
      std::cerr << "hyperctr " << name << ": " << e.what() << '\n';
      return e.exit_code();
    } catch (const std::exception& e) {
      std::cerr << "hyperctr " << name << ": " << e.what() << '\n';
      return 1;
    }
  }
  return 0;
}
