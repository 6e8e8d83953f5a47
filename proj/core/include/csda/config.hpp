#ifndef CSDA_CONFIG_HPP
#define CSDA_CONFIG_HPP

#include <cstdint>
#include <string>

#include "csda/losses.hpp"

namespace csda {

enum class AblationMode { kFull, kDdaOnly, kFocalOnly, kTwoNetFocal };

AblationMode ablation_from_string(const std::string& s);
std::string to_string(AblationMode m);

struct TrainConfig {
  LossVariant variant = LossVariant::kCsdaDelta;
  int d_cs = 4;
  double lambda_p = 1.3;
  double lambda_f = 0.5;
  double epsilon = 1e-8;
  double learning_rate = 1e-4;
  int batch_size = 8;
  int max_epochs = 20;
  int patience = 3;
  double lr_factor = 0.5;
  double min_lr = 1e-6;
  std::uint64_t seed = 0;
  int image_size = 64;
  AblationMode ablation = AblationMode::kFull;
  // network topology (desk-scale defaults)
  int depth = 3;
  int base_width = 8;
  // focal loss
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  bool augment = true;

  LossConfig loss_config() const;
};

// Flat `key = value` text format; parse -> serialize -> parse is the
// identity on TrainConfig.
std::string serialize_config(const TrainConfig& config);
TrainConfig parse_config(const std::string& text);

TrainConfig load_config(const std::string& path);
void save_config(const std::string& path, const TrainConfig& config);

}  // namespace csda

#endif  // CSDA_CONFIG_HPP
