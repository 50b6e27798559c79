#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

namespace seasonet::cli {

struct Context {
  std::ostream& out;
  std::ostream& err;
  std::vector<std::string> argv;
  std::function<void()> action;  // set by the selected subcommand
};

void register_commands(CLI::App& app, Context& ctx);

}  // namespace seasonet::cli
