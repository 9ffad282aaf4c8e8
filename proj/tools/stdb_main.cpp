// Command-line driver: train / eval / visualize / gradcheck / synth.
//
// Exit codes: 0 success, 1 usage or internal failure, 2 configuration,
// 3 ingestion/persistence, 4 gradient check above tolerance.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "stdb/adadrop.hpp"
#include "stdb/checkpoint.hpp"
#include "stdb/config.hpp"
#include "stdb/dataset.hpp"
#include "stdb/gradsuite.hpp"
#include "stdb/heatmap.hpp"
#include "stdb/net.hpp"
#include "stdb/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void print_error(const std::string& category, const std::string& message) {
  std::cerr << json{{"error", category}, {"message", message}}.dump() << "\n";
}

// `dir` may hold the images directly or in a train/ subdirectory.
std::string training_dir(const std::string& dir) {
  if (fs::is_directory(fs::path(dir) / "train")) {
    return (fs::path(dir) / "train").string();
  }
  return dir;
}

stdb::Config config_for(const std::string& config_path) {
  if (config_path.empty()) return stdb::Config{};
  return stdb::load_config(config_path);
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir) {
  const stdb::Config config = config_for(config_path);
  const stdb::DatasetIndex train_set =
      stdb::load_dataset(training_dir(data_dir), config.image_h, config.image_w);
  fs::create_directories(out_dir);
  std::ofstream log((fs::path(out_dir) / "log.jsonl").string(),
                    std::ios::trunc);
  if (!log) {
    print_error("io", "cannot open log file in " + out_dir);
    return 1;
  }
  stdb::run_training(config, train_set, out_dir, &log);
  std::cout << "trained " << config.epochs << " epochs on " << train_set.size()
            << " images; checkpoints in " << out_dir << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& query_dir,
             const std::string& gallery_dir) {
  const stdb::CheckpointData data = stdb::checkpoint_load(checkpoint_path);
  const stdb::Config config = stdb::parse_config(data.config_text);
  const stdb::ModelParams params = stdb::ModelParams::from_named(data.tensors);

  const stdb::DatasetIndex query_set =
      stdb::load_dataset(query_dir, config.image_h, config.image_w);
  const stdb::DatasetIndex gallery_set =
      stdb::load_dataset(gallery_dir, config.image_h, config.image_w);

  const auto queries = stdb::embed_dataset(query_set, params, config);
  const auto gallery = stdb::embed_dataset(gallery_set, params, config);
  const stdb::EvalReport report = stdb::evaluate(queries, gallery, 10);

  json out{{"mAP", report.map},
           {"rank1", report.cmc[0]},
           {"rank5", report.cmc[4]},
           {"rank10", report.cmc[9]},
           {"valid_queries", report.valid_queries},
           {"skipped_queries", report.skipped_queries}};
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_visualize(const std::string& checkpoint_path, const std::string& data_dir,
                  const std::string& out_dir, std::size_t count) {
  const stdb::CheckpointData data = stdb::checkpoint_load(checkpoint_path);
  const stdb::Config config = stdb::parse_config(data.config_text);
  const stdb::ModelParams params = stdb::ModelParams::from_named(data.tensors);

  const stdb::DatasetIndex items =
      stdb::load_dataset(data_dir, config.image_h, config.image_w);
  count = std::min(count, items.size());
  fs::create_directories(out_dir);

  std::vector<std::size_t> indices(count);
  for (std::size_t i = 0; i < count; ++i) indices[i] = i;

  stdb::NoGradGuard guard;
  stdb::Tensor featmap =
      stdb::backbone_forward(stdb::images_tensor(items, indices), params);
  const stdb::MapPool map_pool = config.attn_map_pool == stdb::AttnMapPool::Mean
                                     ? stdb::MapPool::Mean
                                     : stdb::MapPool::Max;
  stdb::Tensor saliency = stdb::attention_map(featmap, map_pool);
  stdb::DropMask mask =
      config.drop_mode == stdb::DropMode::Threshold
          ? stdb::drop_mask(saliency, config.alpha)
          : stdb::drop_mask_quantile(saliency, config.drop_quantile);

  char name[48];
  for (std::size_t i = 0; i < count; ++i) {
    std::snprintf(name, sizeof(name), "attention_%03zu.ppm", i);
    stdb::export_heatmap(saliency, i, (fs::path(out_dir) / name).string(),
                         config.image_h, config.image_w);
    std::snprintf(name, sizeof(name), "dropmask_%03zu.ppm", i);
    stdb::export_heatmap(mask.values, i, (fs::path(out_dir) / name).string(),
                         config.image_h, config.image_w);
    std::snprintf(name, sizeof(name), "input_%03zu.ppm", i);
    stdb::write_ppm((fs::path(out_dir) / name).string(), items.items[i].image);
  }
  std::cout << "wrote " << 3 * count << " images to " << out_dir << "\n";
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, double tolerance) {
  const stdb::GradSuiteResult result = stdb::run_gradient_suite(seed, tolerance);
  for (const stdb::GradCheckEntry& entry : result.entries) {
    std::printf("%-32s %3zu instances   max rel err %.3e\n", entry.name.c_str(),
                entry.instances, entry.max_error);
  }
  std::printf("max over suite: %.3e (tolerance %.1e)\n", result.max_error,
              result.tolerance);
  if (!result.passed()) {
    print_error("gradcheck", "max relative error above tolerance");
    return 4;
  }
  return 0;
}

int cmd_synth(const std::string& out_dir, std::size_t ids, std::size_t per_id,
              std::size_t cams, std::uint64_t seed, std::size_t height,
              std::size_t width) {
  const stdb::DatasetIndex full =
      stdb::generate_synthetic_dataset(ids, per_id, cams, seed, height, width);
  stdb::write_dataset(stdb::split_of(full, stdb::Split::Train),
                      (fs::path(out_dir) / "train").string());
  stdb::write_dataset(stdb::split_of(full, stdb::Split::Query),
                      (fs::path(out_dir) / "query").string());
  stdb::write_dataset(stdb::split_of(full, stdb::Split::Gallery),
                      (fs::path(out_dir) / "gallery").string());
  std::cout << "wrote " << full.size() << " images under " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"self-thresholding adaptive feature-drop re-id trainer"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_dir, checkpoint_path;
  std::string query_dir, gallery_dir;
  std::size_t count = 4;
  std::uint64_t seed = 1234;
  double tolerance = 1e-4;
  std::size_t ids = 20, per_id = 8, cams = 2, height = 64, width = 32;

  CLI::App* train = app.add_subcommand("train", "train on a dataset directory");
  train->add_option("--config", config_path, "key = value config file");
  train->add_option("--data", data_dir, "dataset directory")->required();
  train->add_option("--out", out_dir, "run directory for log + checkpoints")
      ->required();

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint_path)->required();
  eval->add_option("--query", query_dir)->required();
  eval->add_option("--gallery", gallery_dir)->required();

  CLI::App* visualize =
      app.add_subcommand("visualize", "export attention and drop-mask heatmaps");
  visualize->add_option("--checkpoint", checkpoint_path)->required();
  visualize->add_option("--data", data_dir)->required();
  visualize->add_option("--out", out_dir)->required();
  visualize->add_option("--count", count, "images to visualize");

  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "finite-difference gradient suite");
  gradcheck->add_option("--seed", seed);
  gradcheck->add_option("--tolerance", tolerance);

  CLI::App* synth = app.add_subcommand("synth", "write a synthetic dataset");
  synth->add_option("--out", out_dir)->required();
  synth->add_option("--ids", ids);
  synth->add_option("--per-id", per_id);
  synth->add_option("--cams", cams);
  synth->add_option("--seed", seed);
  synth->add_option("--height", height);
  synth->add_option("--width", width);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 1;
  }

  try {
    if (app.got_subcommand(train)) return cmd_train(config_path, data_dir, out_dir);
    if (app.got_subcommand(eval)) return cmd_eval(checkpoint_path, query_dir, gallery_dir);
    if (app.got_subcommand(visualize))
      return cmd_visualize(checkpoint_path, data_dir, out_dir, count);
    if (app.got_subcommand(gradcheck)) return cmd_gradcheck(seed, tolerance);
    if (app.got_subcommand(synth))
      return cmd_synth(out_dir, ids, per_id, cams, seed, height, width);
  } catch (const stdb::ConfigError& e) {
    print_error("config", e.what());
    return 2;
  } catch (const stdb::IngestError& e) {
    print_error("ingestion", e.what());
    return 3;
  } catch (const stdb::PersistError& e) {
    print_error("persistence", e.what());
    return 3;
  } catch (const stdb::IoError& e) {
    print_error("io", e.what());
    return 1;
  } catch (const stdb::Error& e) {
    print_error("internal", e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 1;
  }
  return 1;
}
