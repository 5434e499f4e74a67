#pragma once

#include <cstdint>
#include <string>

#include "pwdlact/grid.hpp"

namespace pwdlact {

enum class PhantomKind {
    shepp_logan,      // the standard head phantom ellipse table
    random_ellipses,  // seeded random overlapping ellipses on a base disk
    dental_like,      // ring of high-intensity "teeth" on a soft-tissue disk
};

PhantomKind phantom_kind_from_name(const std::string& name);
std::string phantom_kind_name(PhantomKind kind);

struct PhantomSpec {
    PhantomKind kind = PhantomKind::shepp_logan;
    int image_size = 128;
    uint64_t seed = 0;
};

/// Deterministic for a fixed spec; values in [0, 1]. image_size must be even
/// (level-1 wavelet transforms need even sides) and at least 32.
Image generate_phantom(const PhantomSpec& spec);

}  // namespace pwdlact
