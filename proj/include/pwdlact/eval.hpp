#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "pwdlact/dataset.hpp"
#include "pwdlact/sampler.hpp"

namespace pwdlact {

/// 10 log10(range^2 / MSE) over the full grid. Identical images report the
/// declared sentinel +infinity.
double psnr(const Image& a, const Image& b, double data_range);

/// Mean local SSIM over fully supported 7x7 Gaussian windows (sigma 1.5,
/// C1 = (0.01 range)^2, C2 = (0.03 range)^2).
double ssim(const Image& a, const Image& b, double data_range);

struct ImageMetrics {
    double psnr = 0.0;
    double ssim = 0.0;
    double seconds = 0.0;
};

/// Aggregates skip sentinel PSNR entries; an all-sentinel column aggregates to
/// the sentinel itself with zero spread.
struct ReconReport {
    std::string label;
    std::string config;
    double data_range = 2.0;
    std::vector<ImageMetrics> per_image;
    double mean_psnr = 0.0, std_psnr = 0.0;
    double mean_ssim = 0.0, std_ssim = 0.0;
    double mean_seconds = 0.0;

    void finalize();
};

/// Pairwise metrics restricted to the circular field of view (reconstruction
/// corners are undefined under parallel-beam FBP). Optional per-image timings
/// flow into the report; optional residual maps |recon - ref| are emitted.
ReconReport evaluate(const std::vector<Image>& recons, const std::vector<Image>& refs,
                     const std::string& label, const std::vector<double>* seconds = nullptr,
                     std::vector<Image>* residuals = nullptr);

void save_report(const std::string& path, const ReconReport& report);
ReconReport load_report(const std::string& path);

enum class AblationKind { guidance_weight, step_count, wtconv };

const char* ablation_name(AblationKind kind);

struct AblateContext {
    std::string checkpoint;      // trained model (the wavelet one for kind wtconv)
    std::string checkpoint_off;  // wavelet-free twin, required for kind wtconv
    std::vector<PairedSample> test_set;
    SampleConfig base;  // swept field is overridden per grid value
    int max_images = 0;  // 0 = whole test set
    std::string out_dir;
};

struct AblationRow {
    double value = 0.0;
    ReconReport report;
};

/// Reconstructs the test set once per grid value (sequentially, so wall-clock
/// numbers stay honest) and writes ablate_<kind>.tsv plus ablate_<kind>.svg
/// under ctx.out_dir.
std::vector<AblationRow> ablate(AblationKind kind, const std::vector<double>& grid,
                                const AblateContext& ctx, std::ostream* log = nullptr);

void save_ablation_table(const std::string& path, AblationKind kind,
                         const std::vector<AblationRow>& rows);
void save_ablation_plot(const std::string& path, AblationKind kind,
                        const std::vector<AblationRow>& rows);

}  // namespace pwdlact
