#pragma once

// Training runs for the acceptance binary. Compiled against the single
// precision library, so only plain double/size_t cross this boundary.

#include <string>
#include <vector>

namespace acceptance {

struct OverfitResult {
  std::size_t params = 0;
  std::size_t steps = 0;
  double gain_before = 0;  // mean SI-SDR gain of the untrained model
  double gain_after = 0;
  double seconds = 0;
};

struct ModelScore {
  std::string config;
  std::size_t params = 0;
  double mean_gain = 0;
  double delayed_gain = 0;  // mean gain over test scenes with delay > 0
  double seconds = 0;
  std::vector<double> val_losses;
};

struct GeneralizationResult {
  std::size_t train_scenes = 0, test_scenes = 0, delayed_scenes = 0;
  ModelScore dual, single;
};

OverfitResult run_overfit(const std::string& config_dir);
GeneralizationResult run_generalization(const std::string& config_dir);

}  // namespace acceptance
