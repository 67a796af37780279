#pragma once

#include <filesystem>

#include "racer/imaging.hpp"

namespace racer::imaging {

/// Binary PGM (P5, maxval 255).
Frame read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Frame& frame);

/// Edge maps are written as 64x64 PGM with pixel values 0 or 255.
void write_edge_pgm(const std::filesystem::path& path, const EdgeMap& edge);

}  // namespace racer::imaging
