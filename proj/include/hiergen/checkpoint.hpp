#pragma once

#include <string>

#include "hiergen/model.hpp"

namespace hiergen {

// Flat binary file of named parameter entries. Magic "HGT1", then per entry:
// name length (u32 LE), UTF-8 name, rank (u32 LE), extents (u32 LE each),
// data (f64 LE). Entries run to end of file.
void save_checkpoint(const ModelParams& params, const std::string& path);

// Loads values into an already-built parameter set; every name must match
// with identical shape, extra or missing entries are errors.
void load_checkpoint(ModelParams& params, const std::string& path);

}  // namespace hiergen
