#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "pwdlact/grid.hpp"
#include "pwdlact/phantom.hpp"

namespace pwdlact {

/// Affine intensity map: normalize(x) = (x - shift) * scale.
struct NormParams {
    float shift = 0.0f;
    float scale = 1.0f;
    bool operator==(const NormParams&) const = default;
};

/// Map [lo, hi] onto [-1, 1].
NormParams norm_from_range(float lo, float hi);
void normalize(Image& img, const NormParams& n);
void denormalize(Image& img, const NormParams& n);

struct PairedSample {
    Image target;       // FBP of the full-angle measurement, normalized to [-1, 1]
    Image prior;        // FBP of the masked measurement, same affine map
    Sinogram sinogram;  // stored full-angle measurement (synthesis noise included)
    double angle_lo = 0.0;
    double angle_hi = 360.0;
    NormParams norm;
};

/// Simulate one acquisition: y = radon(phantom) + noise, target = fbp(y),
/// prior = fbp(mask(y)), both pushed through the same affine normalization.
/// By default the map takes the target's own range to [-1, 1]; dataset
/// builders pass a shared override so every sample lives on one scale.
PairedSample build_pair(const Image& phantom, const Geometry& geom, double angle_lo,
                        double angle_hi, double noise_sigma, uint64_t seed,
                        const NormParams* norm_override = nullptr);

struct DatasetManifest {
    int n_samples = 0;
    Geometry geom;
    std::vector<std::pair<double, double>> angle_ranges;  // distinct, first-seen order
    NormParams norm;
};

/// Writes one pair-file per sample plus manifest.txt into dir (created if
/// needed). All samples must share `geom` and the same norm params.
DatasetManifest persist_dataset(const std::vector<PairedSample>& samples, const Geometry& geom,
                                const std::string& dir);

std::vector<PairedSample> load_dataset(const std::string& dir,
                                       DatasetManifest* manifest_out = nullptr);
DatasetManifest load_manifest(const std::string& dir);

struct DatasetBuildOptions {
    int n_train = 512;
    int n_test = 64;
    int image_size = 128;
    int n_angles = 360;
    std::vector<std::pair<double, double>> angle_ranges = {{0.0, 90.0}, {0.0, 120.0}};
    double noise_sigma = 0.0;
    uint64_t seed = 1234;
    std::string kinds = "mixed";  // dental-like | random-ellipses | shepp-logan | mixed
};

/// Builds <out_dir>/train and <out_dir>/test. The normalization is one global
/// affine map computed from the training targets and reused for the test set.
void build_dataset(const DatasetBuildOptions& opt, const std::string& out_dir, std::ostream& log);

}  // namespace pwdlact
