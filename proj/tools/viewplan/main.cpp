#include <iostream>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "common.hpp"

int main(int argc, char** argv) {
  // stdout carries results (and the stdio wire protocol), so logs go to stderr
  spdlog::set_default_logger(spdlog::stderr_color_mt("viewplan"));

  CLI::App app{"viewplan: view-planning environment and benchmark toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "viewplan 0.1.0");
  std::string level = "info";
  app.add_option("--log-level", level, "trace, debug, info, warn, error, off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));
  app.parse_complete_callback([&] { spdlog::set_level(spdlog::level::from_str(level)); });

  viewplan::cli::register_data_commands(app);
  viewplan::cli::register_episode_commands(app);
  viewplan::cli::register_graph_commands(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const viewplan::cli::UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
