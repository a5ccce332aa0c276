#pragma once

#include <map>
#include <string>
#include <vector>

#include "djf/dataset.hpp"
#include "djf/detectors.hpp"
#include "djf/random_forest.hpp"

namespace djf {

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    int best_epoch = -1;        // epoch whose weights the detector ended with
    double best_val_loss = 0.0;
    long iterations = 0;
    bool diverged = false;
};

/// Trains a detector on the dataset's train split with SGD + momentum.
/// Preprocessed inputs are computed once and cached; for pix detectors the
/// mean image is computed from the train split first. After every epoch the
/// validation loss is measured and the weights with the minimum validation
/// loss are kept. If training loss goes non-finite, training aborts and the
/// best weights so far are restored.
TrainReport train_detector(Detector& det, const Dataset& ds, const SgdConfig& cfg,
                           bool verbose = false);

/// Per-(QF1, QF2) accuracy grid. Each cell is the balanced accuracy
/// 0.5 * (TPR over doubles with that pair + TNR over singles at QF2).
struct AccuracyGrid {
    int qf2 = 0;
    std::map<int, double> cell;  // qf1 -> balanced accuracy
    double macro = 0.0;          // mean over cells
    double overall = 0.0;        // plain accuracy over all evaluated patches
    std::size_t count = 0;
};

AccuracyGrid evaluate_detector(Detector& det, const Dataset& ds, Split split);

std::string format_grid(const AccuracyGrid& grid);

// --- localization -------------------------------------------------------

struct Heatmap {
    int grid_rows = 0, grid_cols = 0;
    int window = 64, stride = 16;
    std::vector<float> score;  // H1 probability per window, row-major

    float at(int r, int c) const {
        return score[static_cast<std::size_t>(r) * grid_cols + c];
    }
};

/// Slides the detector over the image (window x window patches every
/// `stride` pixels) and records the double-compression probability.
Heatmap localize(Detector& det, const Patch& image, int window = 64,
                 int stride = 16);

void save_heatmap_csv(const Heatmap& hm, const std::string& path);
/// Grayscale PNG of the window grid (score 0 -> black, 1 -> white).
void save_heatmap_png(const Heatmap& hm, const std::string& path);
/// Red overlay on the source image; per-pixel opacity is the mean score of
/// the windows covering that pixel.
void save_overlay_png(const Patch& image, const Heatmap& hm,
                      const std::string& path);

// --- score fusion ---------------------------------------------------------

/// Per-patch feature vector: each detector's H1 probability, in order.
std::pair<std::vector<std::vector<double>>, std::vector<int>> fusion_features(
    std::vector<Detector*>& detectors, const Dataset& ds, Split split);

/// Fraction of patches in the split the fused forest classifies correctly.
double evaluate_fusion(const RandomForest& forest,
                       std::vector<Detector*>& detectors, const Dataset& ds,
                       Split split);

}  // namespace djf
