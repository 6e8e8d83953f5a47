#include "csda/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace csda {

AblationMode ablation_from_string(const std::string& s) {
  if (s == "full") return AblationMode::kFull;
  if (s == "dda_only") return AblationMode::kDdaOnly;
  if (s == "focal_only") return AblationMode::kFocalOnly;
  if (s == "two_net_focal") return AblationMode::kTwoNetFocal;
  throw std::invalid_argument("unknown ablation mode: " + s);
}

std::string to_string(AblationMode m) {
  switch (m) {
    case AblationMode::kFull: return "full";
    case AblationMode::kDdaOnly: return "dda_only";
    case AblationMode::kFocalOnly: return "focal_only";
    case AblationMode::kTwoNetFocal: return "two_net_focal";
  }
  return "?";
}

LossConfig TrainConfig::loss_config() const {
  LossConfig c;
  c.variant = variant;
  c.d_cs = ablation == AblationMode::kDdaOnly ? 1 : d_cs;
  c.epsilon = epsilon;
  c.lambda_f = lambda_f;
  c.lambda_p = lambda_p;
  c.focal_gamma = focal_gamma;
  c.focal_alpha = focal_alpha;
  return c;
}

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string serialize_config(const TrainConfig& c) {
  std::ostringstream os;
  os << "variant = " << to_string(c.variant) << "\n";
  os << "d_cs = " << c.d_cs << "\n";
  os << "lambda_p = " << fmt_double(c.lambda_p) << "\n";
  os << "lambda_f = " << fmt_double(c.lambda_f) << "\n";
  os << "epsilon = " << fmt_double(c.epsilon) << "\n";
  os << "learning_rate = " << fmt_double(c.learning_rate) << "\n";
  os << "batch_size = " << c.batch_size << "\n";
  os << "max_epochs = " << c.max_epochs << "\n";
  os << "patience = " << c.patience << "\n";
  os << "lr_factor = " << fmt_double(c.lr_factor) << "\n";
  os << "min_lr = " << fmt_double(c.min_lr) << "\n";
  os << "seed = " << c.seed << "\n";
  os << "image_size = " << c.image_size << "\n";
  os << "ablation = " << to_string(c.ablation) << "\n";
  os << "depth = " << c.depth << "\n";
  os << "base_width = " << c.base_width << "\n";
  os << "focal_gamma = " << fmt_double(c.focal_gamma) << "\n";
  os << "focal_alpha = " << fmt_double(c.focal_alpha) << "\n";
  os << "augment = " << (c.augment ? "true" : "false") << "\n";
  return os.str();
}

TrainConfig parse_config(const std::string& text) {
  TrainConfig c;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: expected key = value, got: " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "variant") c.variant = loss_variant_from_string(value);
    else if (key == "d_cs") c.d_cs = std::stoi(value);
    else if (key == "lambda_p") c.lambda_p = std::stod(value);
    else if (key == "lambda_f") c.lambda_f = std::stod(value);
    else if (key == "epsilon") c.epsilon = std::stod(value);
    else if (key == "learning_rate") c.learning_rate = std::stod(value);
    else if (key == "batch_size") c.batch_size = std::stoi(value);
    else if (key == "max_epochs") c.max_epochs = std::stoi(value);
    else if (key == "patience") c.patience = std::stoi(value);
    else if (key == "lr_factor") c.lr_factor = std::stod(value);
    else if (key == "min_lr") c.min_lr = std::stod(value);
    else if (key == "seed") c.seed = std::stoull(value);
    else if (key == "image_size") c.image_size = std::stoi(value);
    else if (key == "ablation") c.ablation = ablation_from_string(value);
    else if (key == "depth") c.depth = std::stoi(value);
    else if (key == "base_width") c.base_width = std::stoi(value);
    else if (key == "focal_gamma") c.focal_gamma = std::stod(value);
    else if (key == "focal_alpha") c.focal_alpha = std::stod(value);
    else if (key == "augment") c.augment = value == "true";
    else throw std::invalid_argument("config: unknown key: " + key);
  }
  return c;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config: cannot open " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_config(buf.str());
}

void save_config(const std::string& path, const TrainConfig& config) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("config: cannot write " + path);
  os << serialize_config(config);
}

}  // namespace csda
