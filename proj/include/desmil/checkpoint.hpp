#pragma once

#include <string>

#include "desmil/model.hpp"

namespace desmil {

// Flat binary container of raw doubles plus a text manifest giving each
// tensor's name, shape, and byte offset. Layout order is fixed so equal
// parameters always serialize to identical bytes.
void save_checkpoint(const ModelParams& params, const std::string& binary_path,
                     const std::string& manifest_path);

ModelParams load_checkpoint(const std::string& binary_path, const std::string& manifest_path);

} // namespace desmil
