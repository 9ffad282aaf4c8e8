#include "stdb/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

namespace stdb {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

[[noreturn]] void fail(std::size_t line, const std::string& msg) {
  throw ConfigError("line " + std::to_string(line) + ": " + msg);
}

double parse_double(const std::string& value, std::size_t line) {
  try {
    std::size_t consumed = 0;
    const double v = std::stod(value, &consumed);
    if (consumed != value.size()) fail(line, "trailing characters in '" + value + "'");
    return v;
  } catch (const ConfigError&) {
    throw;
  } catch (...) {
    fail(line, "expected a number, got '" + value + "'");
  }
}

std::uint64_t parse_u64(const std::string& value, std::size_t line) {
  try {
    std::size_t consumed = 0;
    const std::uint64_t v = std::stoull(value, &consumed);
    if (consumed != value.size()) fail(line, "trailing characters in '" + value + "'");
    if (!value.empty() && value[0] == '-') fail(line, "expected a non-negative integer");
    return v;
  } catch (const ConfigError&) {
    throw;
  } catch (...) {
    fail(line, "expected a non-negative integer, got '" + value + "'");
  }
}

std::size_t parse_size(const std::string& value, std::size_t line) {
  return static_cast<std::size_t>(parse_u64(value, line));
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

const char* to_string(DropMode mode) {
  return mode == DropMode::Threshold ? "threshold" : "quantile";
}

const char* to_string(DropPool pool) {
  return pool == DropPool::Gmp ? "gmp" : "gap";
}

const char* to_string(AttnMapPool pool) {
  return pool == AttnMapPool::Mean ? "mean" : "max";
}

const char* to_string(BranchSet branches) {
  switch (branches) {
    case BranchSet::Full: return "full";
    case BranchSet::GlobalOnly: return "global";
    case BranchSet::GlobalDrop: return "global_drop";
    case BranchSet::GlobalAttention: return "global_attention";
  }
  return "full";
}

Config parse_config(const std::string& text) {
  Config config;
  std::set<std::string> seen;
  std::istringstream stream(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(stream, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;

    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(line_no, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail(line_no, "empty key");
    if (value.empty()) fail(line_no, "empty value for '" + key + "'");
    if (!seen.insert(key).second) fail(line_no, "duplicate key '" + key + "'");

    if (key == "alpha") {
      config.alpha = parse_double(value, line_no);
      if (config.alpha <= 0.0) fail(line_no, "alpha must be > 0");
    } else if (key == "rho") {
      config.rho = parse_double(value, line_no);
      if (config.rho < 0.0 || config.rho > 1.0) fail(line_no, "rho must be in [0, 1]");
    } else if (key == "reduction") {
      config.reduction = parse_size(value, line_no);
      if (config.reduction == 0) fail(line_no, "reduction must be >= 1");
    } else if (key == "p") {
      config.p = parse_size(value, line_no);
      if (config.p < 2) fail(line_no, "p must be >= 2");
    } else if (key == "n_per") {
      config.n_per = parse_size(value, line_no);
      if (config.n_per < 2) fail(line_no, "n_per must be >= 2");
    } else if (key == "image_h") {
      config.image_h = parse_size(value, line_no);
      if (config.image_h < 8) fail(line_no, "image_h must be >= 8");
    } else if (key == "image_w") {
      config.image_w = parse_size(value, line_no);
      if (config.image_w < 8) fail(line_no, "image_w must be >= 8");
    } else if (key == "dim_hidden") {
      config.dim_hidden = parse_size(value, line_no);
      if (config.dim_hidden == 0) fail(line_no, "dim_hidden must be >= 1");
    } else if (key == "dim_embed") {
      config.dim_embed = parse_size(value, line_no);
      if (config.dim_embed == 0) fail(line_no, "dim_embed must be >= 1");
    } else if (key == "epochs") {
      config.epochs = parse_size(value, line_no);
      if (config.epochs == 0) fail(line_no, "epochs must be >= 1");
    } else if (key == "iters_per_epoch") {
      config.iters_per_epoch = parse_size(value, line_no);
    } else if (key == "seed") {
      config.seed = parse_u64(value, line_no);
    } else if (key == "drop_mode") {
      if (value == "threshold") config.drop_mode = DropMode::Threshold;
      else if (value == "quantile") config.drop_mode = DropMode::Quantile;
      else fail(line_no, "drop_mode must be threshold or quantile");
    } else if (key == "drop_quantile") {
      config.drop_quantile = parse_double(value, line_no);
      if (config.drop_quantile < 0.0 || config.drop_quantile > 1.0) {
        fail(line_no, "drop_quantile must be in [0, 1]");
      }
    } else if (key == "base_lr") {
      config.base_lr = parse_double(value, line_no);
      if (config.base_lr <= 0.0) fail(line_no, "base_lr must be > 0");
    } else if (key == "spatial_kernel") {
      config.spatial_kernel = parse_size(value, line_no);
      if (config.spatial_kernel == 0 || config.spatial_kernel % 2 == 0) {
        fail(line_no, "spatial_kernel must be odd");
      }
    } else if (key == "checkpoint_interval") {
      config.checkpoint_interval = parse_size(value, line_no);
    } else if (key == "drop_pool") {
      if (value == "gmp") config.drop_pool = DropPool::Gmp;
      else if (value == "gap") config.drop_pool = DropPool::Gap;
      else fail(line_no, "drop_pool must be gmp or gap");
    } else if (key == "attn_map_pool") {
      if (value == "mean") config.attn_map_pool = AttnMapPool::Mean;
      else if (value == "max") config.attn_map_pool = AttnMapPool::Max;
      else fail(line_no, "attn_map_pool must be mean or max");
    } else if (key == "branches") {
      if (value == "full") config.branches = BranchSet::Full;
      else if (value == "global") config.branches = BranchSet::GlobalOnly;
      else if (value == "global_drop") config.branches = BranchSet::GlobalDrop;
      else if (value == "global_attention") config.branches = BranchSet::GlobalAttention;
      else fail(line_no, "branches must be full, global, global_drop or global_attention");
    } else {
      fail(line_no, "unknown key '" + key + "'");
    }
  }
  return config;
}

Config load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string config_to_text(const Config& config) {
  std::ostringstream out;
  out << "alpha = " << format_double(config.alpha) << "\n";
  out << "rho = " << format_double(config.rho) << "\n";
  out << "reduction = " << config.reduction << "\n";
  out << "p = " << config.p << "\n";
  out << "n_per = " << config.n_per << "\n";
  out << "image_h = " << config.image_h << "\n";
  out << "image_w = " << config.image_w << "\n";
  out << "dim_hidden = " << config.dim_hidden << "\n";
  out << "dim_embed = " << config.dim_embed << "\n";
  out << "epochs = " << config.epochs << "\n";
  out << "iters_per_epoch = " << config.iters_per_epoch << "\n";
  out << "seed = " << config.seed << "\n";
  out << "drop_mode = " << to_string(config.drop_mode) << "\n";
  out << "drop_quantile = " << format_double(config.drop_quantile) << "\n";
  out << "base_lr = " << format_double(config.base_lr) << "\n";
  out << "spatial_kernel = " << config.spatial_kernel << "\n";
  out << "checkpoint_interval = " << config.checkpoint_interval << "\n";
  out << "drop_pool = " << to_string(config.drop_pool) << "\n";
  out << "attn_map_pool = " << to_string(config.attn_map_pool) << "\n";
  out << "branches = " << to_string(config.branches) << "\n";
  return out.str();
}

}  // namespace stdb
