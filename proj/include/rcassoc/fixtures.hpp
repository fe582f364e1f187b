#pragma once

#include <string>
#include <vector>

#include "rcassoc/table.hpp"

namespace rcassoc {

/// Bundled example mobility tables, compiled into the binary so runs need no
/// external files:
///   table5 — father occupation (U,F,S,W) x son education (N,P,S,H,G)
///   table6 — son education (N,P,S,H,G) x son occupation (U,F,S,W)
///   table7 — father occupation (U,F,S,W) x son occupation (U,F,S,W)
bool is_fixture_name(const std::string& name);
ContingencyTable fixture_table(const std::string& name);
std::vector<std::string> fixture_names();

}  // namespace rcassoc
