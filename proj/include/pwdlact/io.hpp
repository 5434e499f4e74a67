#pragma once

#include <optional>
#include <stdexcept>
#include <string>

#include "pwdlact/grid.hpp"

namespace pwdlact {

/// Thrown when (de)serialization fails; the message names the file.
class io_error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// On-disk layout: the payload at `path` is the flat array as little-endian
// 32-bit floats (row-major; sinograms detectors-major), and `path + ".meta"`
// is a text sidecar of whitespace-separated key/value lines recording shape,
// geometry, value_range, and (for sinograms, optionally) the angular mask.

void save_image(const std::string& path, const Image& img);
Image load_image(const std::string& path);

void save_sinogram(const std::string& path, const Sinogram& sino,
                   const AngularMask* mask = nullptr);

struct LoadedSinogram {
    Sinogram sino;
    std::optional<AngularMask> mask;
};
LoadedSinogram load_sinogram(const std::string& path);

// Raw helpers shared by dataset and checkpoint files.
void write_f32(const std::string& path, const float* data, size_t count);
std::vector<float> read_f32(const std::string& path, size_t expect_count);

}  // namespace pwdlact
