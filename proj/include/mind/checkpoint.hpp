#pragma once

#include <string>

#include "mind/networks.hpp"

namespace mind {

// MNDP parameter container: magic "MNDP", u32 version, config block, then
// each parameter group as (name, rank, dims, row-major little-endian f64).
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace mind
