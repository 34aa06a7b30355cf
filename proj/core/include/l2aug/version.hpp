#pragma once

#include <string>

namespace l2aug {

/// "l2aug <semver> (<git describe>)" for run provenance.
std::string version_string();

}  // namespace l2aug
