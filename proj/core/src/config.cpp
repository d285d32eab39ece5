#include "cgsplat/config.hpp"

#include <fstream>
#include <sstream>

#include "cgsplat/errors.hpp"

namespace cgsplat {

namespace {

std::string trim(const std::string& s) {
  const size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad number for " + key + ": " + v);
  }
}

int to_int(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const int x = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad integer for " + key + ": " + v);
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on") return true;
  if (v == "0" || v == "false" || v == "off") return false;
  throw std::invalid_argument("config: bad boolean for " + key + ": " + v);
}

}  // namespace

ConfigMap load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  ConfigMap map;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config parse error at " + path + ":" +
                                  std::to_string(line_no));
    }
    map[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return map;
}

void apply_overrides(ConfigMap& map, const std::vector<std::string>& kvs) {
  for (const std::string& kv : kvs) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("override must be key=value: " + kv);
    }
    map[trim(kv.substr(0, eq))] = trim(kv.substr(eq + 1));
  }
}

PipelineConfig make_pipeline_config(const ConfigMap& map) {
  PipelineConfig cfg;
  for (const auto& [key, value] : map) {
    if (key == "seed") {
      cfg.seed = static_cast<uint64_t>(std::stoull(value));
    } else if (key == "lambda1") {
      cfg.weights.lambda1 = to_double(key, value);
    } else if (key == "lambda2") {
      cfg.weights.lambda2 = to_double(key, value);
    } else if (key == "lambda3") {
      cfg.weights.lambda3 = to_double(key, value);
    } else if (key == "pix_gain") {
      cfg.pix_gain = to_double(key, value);
    } else if (key == "ssim_weight") {
      cfg.ssim_weight = to_double(key, value);
    } else if (key == "lr_init") {
      cfg.lr_init = to_double(key, value);
    } else if (key == "lr_final") {
      cfg.lr_final = to_double(key, value);
    } else if (key == "lr_position") {
      cfg.rates.position = to_double(key, value);
    } else if (key == "lr_log_scale") {
      cfg.rates.log_scale = to_double(key, value);
    } else if (key == "lr_rotation") {
      cfg.rates.rotation = to_double(key, value);
    } else if (key == "lr_color") {
      cfg.rates.color = to_double(key, value);
    } else if (key == "lr_opacity") {
      cfg.rates.opacity = to_double(key, value);
    } else if (key == "lr_twist") {
      cfg.rates.twist = to_double(key, value);
    } else if (key == "iters_fit") {
      cfg.iters_fit = to_int(key, value);
    } else if (key == "iters_pose") {
      cfg.iters_pose = to_int(key, value);
    } else if (key == "iters_scene") {
      cfg.iters_scene = to_int(key, value);
    } else if (key == "cache_H") {
      cfg.cache_interval = to_int(key, value);
    } else if (key == "match_samples") {
      cfg.match_samples = to_int(key, value);
    } else if (key == "match_noise") {
      cfg.match_noise = to_double(key, value);
    } else if (key == "min_pairs") {
      cfg.min_pairs = to_int(key, value);
    } else if (key == "match_mode") {
      if (value == "oracle") {
        cfg.match_mode = MatchMode::Oracle;
      } else if (value == "ncc") {
        cfg.match_mode = MatchMode::GridNcc;
      } else {
        throw std::invalid_argument("config: match_mode must be oracle|ncc");
      }
    } else if (key == "ncc_patch") {
      cfg.ncc_patch = to_int(key, value);
    } else if (key == "ncc_stride") {
      cfg.ncc_stride = to_int(key, value);
    } else if (key == "ncc_radius") {
      cfg.ncc_radius = to_int(key, value);
    } else if (key == "init_stride") {
      cfg.init_stride = to_int(key, value);
    } else if (key == "init_opacity") {
      cfg.init_opacity = to_double(key, value);
    } else if (key == "densify_interval") {
      cfg.densify_interval = to_int(key, value);
    } else if (key == "densify_start") {
      cfg.densify_start = to_int(key, value);
    } else if (key == "densify_end") {
      cfg.densify_end = to_int(key, value);
    } else if (key == "densify_grad_threshold") {
      cfg.densify.grad_threshold = to_double(key, value);
    } else if (key == "prune_opacity") {
      cfg.densify.prune_opacity = to_double(key, value);
    } else if (key == "split_scale_fraction") {
      cfg.densify.split_scale_fraction = to_double(key, value);
    } else if (key == "opacity_reset_interval") {
      cfg.opacity_reset_interval = to_int(key, value);
    } else if (key == "opacity_ceiling") {
      cfg.opacity_ceiling = to_double(key, value);
    } else if (key == "background") {
      const double v = to_double(key, value);
      cfg.background = Eigen::Vector3d::Constant(v);
    } else if (key == "workers") {
      cfg.workers = to_int(key, value);
    } else if (key == "sh_degree") {
      cfg.sh_degree = to_int(key, value);
    } else if (key == "divergence_factor") {
      cfg.divergence_factor = to_double(key, value);
    } else if (key == "divergence_window") {
      cfg.divergence_window = to_int(key, value);
    } else if (key == "optimize_positions_in_fit") {
      cfg.optimize_positions_in_fit = to_bool(key, value);
    } else if (key == "depth_noise") {
      cfg.depth_noise = to_double(key, value);
    } else {
      throw std::invalid_argument("config: unknown key: " + key);
    }
  }
  if (cfg.lr_init <= 0.0 || cfg.lr_final <= 0.0 ||
      cfg.lr_final > cfg.lr_init) {
    throw std::invalid_argument(
        "config: learning-rate schedule must be positive, non-increasing");
  }
  if (cfg.cache_interval < 1) {
    throw std::invalid_argument("config: cache_H must be >= 1");
  }
  return cfg;
}

std::string config_snapshot(const PipelineConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  os << "background=" << cfg.background.x() << "\n"
     << "cache_H=" << cfg.cache_interval << "\n"
     << "densify_end=" << cfg.densify_end << "\n"
     << "densify_grad_threshold=" << cfg.densify.grad_threshold << "\n"
     << "densify_interval=" << cfg.densify_interval << "\n"
     << "densify_start=" << cfg.densify_start << "\n"
     << "depth_noise=" << cfg.depth_noise << "\n"
     << "divergence_factor=" << cfg.divergence_factor << "\n"
     << "divergence_window=" << cfg.divergence_window << "\n"
     << "init_opacity=" << cfg.init_opacity << "\n"
     << "init_stride=" << cfg.init_stride << "\n"
     << "iters_fit=" << cfg.iters_fit << "\n"
     << "iters_pose=" << cfg.iters_pose << "\n"
     << "iters_scene=" << cfg.iters_scene << "\n"
     << "lambda1=" << cfg.weights.lambda1 << "\n"
     << "lambda2=" << cfg.weights.lambda2 << "\n"
     << "lambda3=" << cfg.weights.lambda3 << "\n"
     << "lr_color=" << cfg.rates.color << "\n"
     << "lr_final=" << cfg.lr_final << "\n"
     << "lr_init=" << cfg.lr_init << "\n"
     << "lr_log_scale=" << cfg.rates.log_scale << "\n"
     << "lr_opacity=" << cfg.rates.opacity << "\n"
     << "lr_position=" << cfg.rates.position << "\n"
     << "lr_rotation=" << cfg.rates.rotation << "\n"
     << "lr_twist=" << cfg.rates.twist << "\n"
     << "match_mode=" << (cfg.match_mode == MatchMode::Oracle ? "oracle"
                                                              : "ncc")
     << "\n"
     << "match_noise=" << cfg.match_noise << "\n"
     << "match_samples=" << cfg.match_samples << "\n"
     << "min_pairs=" << cfg.min_pairs << "\n"
     << "ncc_patch=" << cfg.ncc_patch << "\n"
     << "ncc_radius=" << cfg.ncc_radius << "\n"
     << "ncc_stride=" << cfg.ncc_stride << "\n"
     << "opacity_ceiling=" << cfg.opacity_ceiling << "\n"
     << "opacity_reset_interval=" << cfg.opacity_reset_interval << "\n"
     << "pix_gain=" << cfg.pix_gain << "\n"
     << "optimize_positions_in_fit="
     << (cfg.optimize_positions_in_fit ? 1 : 0) << "\n"
     << "prune_opacity=" << cfg.densify.prune_opacity << "\n"
     << "seed=" << cfg.seed << "\n"
     << "sh_degree=" << cfg.sh_degree << "\n"
     << "split_scale_fraction=" << cfg.densify.split_scale_fraction << "\n"
     << "ssim_weight=" << cfg.ssim_weight << "\n"
     << "workers=" << cfg.workers << "\n";
  return os.str();
}

}  // namespace cgsplat
