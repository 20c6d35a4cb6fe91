#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "drcgra/ir.hpp"

namespace drcgra::testing {

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(DRCGRA_FIXTURES_DIR) / name;
}

inline ir::DataflowGraph load_fixture(const std::string& name) { return ir::load_dfg(fixture(name)); }

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace drcgra::testing
