#pragma once

#include <string>
#include <vector>

#include "l2aug/params.hpp"

namespace l2aug::ad {

/// Binary tensor container: a 16-byte magic+version header followed by
/// length-prefixed (name, shape, raw little-endian f64 data) records.
/// The loader rejects unknown versions.
void save_checkpoint(const std::string& path, const ParamSet& params);
ParamSet load_checkpoint(const std::string& path);

}  // namespace l2aug::ad
