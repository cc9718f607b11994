// SPDX-License-Identifier: Apache-2.0
// alignopt command-line driver.
#include <CLI11.hpp>

#include <iostream>
#include <map>

#include "alignopt/cli.hpp"

namespace {

using alignopt::ConfigError;
using alignopt::RunConfig;

struct Flags {
  std::string config;
  std::map<std::string, std::string> text;
  std::map<std::string, long long> integer;
  std::vector<std::string> sets;
};

// Converts `key=value` into a JSON value. Bare words become strings.
nlohmann::json parse_override(const std::string& value) {
  try {
    return nlohmann::json::parse(value);
  } catch (const nlohmann::json::exception&) {
    return value;
  }
}

RunConfig build_config(CLI::App& sub, const Flags& f) {
  RunConfig c;
  if (!f.config.empty()) c.merge_file(f.config);
  for (const auto& [key, v] : f.text)
    if (sub.get_option("--" + key)->count()) c.set(key, v);
  for (const auto& [key, v] : f.integer)
    if (sub.get_option("--" + key)->count()) c.set(key, v);
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    c.set(s.substr(0, eq), parse_override(s.substr(eq + 1)));
  }
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Alignment-based multi-task combinatorial optimization"};
  app.require_subcommand(1);
  std::map<std::string, Flags> flags;
  for (const auto& name : alignopt::cli::commands()) {
    auto* sub = app.add_subcommand(name);
    auto& f = flags[name];
    sub->add_option("--config", f.config, "JSON config file");
    for (const char* key : {"kind", "out", "input", "checkpoint", "provider", "mode"})
      sub->add_option(std::string("--") + key, f.text[key]);
    for (const char* key : {"n", "count", "seed", "workers"}) sub->add_option(std::string("--") + key, f.integer[key]);
    sub->add_option("--set", f.sets, "override any config key, key=value");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  auto* sub = app.get_subcommands().front();
  const auto name = sub->get_name();
  try {
    const auto cfg = build_config(*sub, flags[name]);
    return alignopt::cli::run(name, cfg, std::cout);
  } catch (const ConfigError& e) {
    std::cerr << "error: code=ConfigError message=" << e.what() << '\n';
    return 2;
  } catch (const alignopt::Error& e) {
    const std::string what = e.what();
    const auto colon = what.find(": ");
    std::cerr << "error: code=" << alignopt::to_string(e.code())
              << " message=" << (colon == std::string::npos ? what : what.substr(colon + 2)) << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: code=Internal message=" << e.what() << '\n';
    return 1;
  }
}
