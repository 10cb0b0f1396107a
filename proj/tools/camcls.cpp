// camcls command line: training, evaluation, heatmap export, SnapMix
// preview, TTA inference, and parameter sweeps. stdout carries only
// machine-readable payload; diagnostics go to stderr.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <json.hpp>

#include "camcls/config.hpp"
#include "camcls/data.hpp"
#include "camcls/image.hpp"
#include "camcls/image_io.hpp"
#include "camcls/model_io.hpp"
#include "camcls/training.hpp"

namespace fs = std::filesystem;
using namespace camcls;

namespace {

void require_file(const std::string& path) {
  if (!fs::exists(path)) throw FileError("missing file: '" + path + "'");
}

// Evaluation data: either a pos/neg directory or the test split of a run
// config (which reproduces the split used during training).
Dataset resolve_eval_data(const std::string& data_dir, const std::string& config_path,
                          size_t input_size) {
  if (!data_dir.empty() && !config_path.empty())
    throw ConfigError("pass either --data or --config, not both");
  if (!data_dir.empty()) {
    if (!fs::exists(data_dir)) throw FileError("missing data directory: '" + data_dir + "'");
    return load_dataset(data_dir, input_size);
  }
  if (config_path.empty()) throw ConfigError("one of --data or --config is required");
  require_file(config_path);
  const RunConfig run = parse_run_config(config_path);
  if (run.model.input_size != input_size)
    throw ConfigError("config input_size does not match the checkpoint");
  return realize_split(run.data, input_size).second;
}

// Normalized image plane ready for the model.
Tensor<float> load_model_input(const std::string& path, size_t input_size) {
  require_file(path);
  Tensor<float> plane = read_image(path);
  plane = resize_bilinear(plane, input_size, input_size);
  plane = normalize_plane(plane);
  return plane.reshaped({1, input_size, input_size});
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

nlohmann::ordered_json metrics_json(const Metrics& m) {
  return nlohmann::ordered_json{{"accuracy", m.accuracy}, {"precision", m.precision},
                                {"recall", m.recall},     {"f1", m.f1},
                                {"tp", m.tp},             {"fp", m.fp},
                                {"tn", m.tn},             {"fn", m.fn}};
}

int cmd_train(const std::string& config_path, const std::string& out_dir) {
  require_file(config_path);
  const RunConfig run = parse_run_config(config_path);
  const auto [train_ds, test_ds] = realize_split(run.data, run.model.input_size);
  fs::create_directories(out_dir);
  const TrainRunResult result = train_model(run.model, run.train, train_ds, &test_ds);

  const fs::path ckpt = fs::path(out_dir) / "checkpoint.bin";
  save_checkpoint(ckpt.string(), result.model);

  const fs::path log_path = fs::path(out_dir) / "metrics.jsonl";
  std::ofstream log(log_path);
  if (!log) throw Error("train: cannot write '" + log_path.string() + "'");
  for (const EpochLog& e : result.logs) log << epoch_log_json(e) << "\n";
  std::cout << ckpt.string() << "\n" << log_path.string() << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir, const std::string& config_path,
             bool use_tta, size_t k, double theta, size_t mask_patch_px) {
  require_file(ckpt);
  const Model model = load_checkpoint(ckpt);
  const Dataset ds = resolve_eval_data(data_dir, config_path, model.config.input_size);
  std::optional<TtaConfig> tta;
  if (use_tta) {
    TtaConfig cfg;
    cfg.k = k;
    cfg.theta = theta;
    cfg.mask_patch_px = mask_patch_px;
    cfg.validate(model.config.input_size);
    tta = cfg;
  }
  const Metrics m = evaluate(model, ds, tta);
  std::cout << metrics_json(m).dump() << "\n";
  return 0;
}

int cmd_cam(const std::string& ckpt, const std::string& image_path, const std::string& out_dir,
            const std::string& sign_flag, bool bilinear) {
  require_file(ckpt);
  const Model model = load_checkpoint(ckpt);
  const Tensor<float> image = load_model_input(image_path, model.config.input_size);
  int sign;
  if (sign_flag == "pos")
    sign = 1;
  else if (sign_flag == "neg")
    sign = -1;
  else
    sign = forward(model, image).prob > 0.5f ? 1 : -1;
  const Heatmap<float> heat =
      compute_cam(model, image, sign, bilinear ? Upsample::bilinear : Upsample::nearest);
  fs::create_directories(out_dir);
  const fs::path out = fs::path(out_dir) / (stem_of(image_path) + "_cam_" +
                                            (sign > 0 ? "pos" : "neg") + std::string(".pgm"));
  write_pgm_minmax(out.string(), heat.full_res);
  std::cout << out.string() << "\n";
  return 0;
}

int cmd_preview_snapmix(const std::string& ckpt, const std::string& image_a,
                        const std::string& image_b, uint64_t seed, const std::string& out_dir,
                        int label_a, int label_b, double alpha) {
  require_file(ckpt);
  const Model model = load_checkpoint(ckpt);
  const size_t n = model.config.input_size;
  const Tensor<float> img_a = load_model_input(image_a, n);
  const Tensor<float> img_b = load_model_input(image_b, n);
  const Heatmap<float> heat_a = compute_cam(model, img_a, label_sign(label_a));
  const Heatmap<float> heat_b = compute_cam(model, img_b, label_sign(label_b));
  Rng rng(seed);
  const VirtualSample<float> vs =
      snapmix(img_a, label_a, img_b, label_b, heat_a, heat_b, rng, alpha);

  fs::create_directories(out_dir);
  write_pgm_minmax((fs::path(out_dir) / "composite.pgm").string(), vs.image.reshaped({n, n}));
  write_pgm_minmax((fs::path(out_dir) / (stem_of(image_a) + "_cam_" +
                                         (heat_a.class_sign > 0 ? "pos" : "neg") + ".pgm"))
                       .string(),
                   heat_a.full_res);
  write_pgm_minmax((fs::path(out_dir) / (stem_of(image_b) + "_cam_" +
                                         (heat_b.class_sign > 0 ? "pos" : "neg") + ".pgm"))
                       .string(),
                   heat_b.full_res);
  std::printf("rho_a=%.6f rho_b=%.6f w_a=%.6f w_b=%.6f\n", vs.rho_a, vs.rho_b, vs.weight_a,
              vs.weight_b);
  return 0;
}

int cmd_tta(const std::string& ckpt, const std::string& data_dir, const std::string& config_path,
            size_t k, double theta, size_t mask_patch_px, const std::string& dump_dir) {
  require_file(ckpt);
  const Model model = load_checkpoint(ckpt);
  const Dataset ds = resolve_eval_data(data_dir, config_path, model.config.input_size);
  TtaConfig cfg;
  cfg.k = k;
  cfg.theta = theta;
  cfg.mask_patch_px = mask_patch_px;
  cfg.validate(model.config.input_size);
  if (!dump_dir.empty()) fs::create_directories(dump_dir);
  for (const Sample& s : ds.samples) {
    const VoteRecord rec = tta_classify(model, s.image, cfg);
    size_t nonsupport = 0;
    for (bool sup : rec.supporting)
      if (!sup) ++nonsupport;
    std::printf("%s orig=%.6f flips=%d final=%d nonsupport=%zu/%zu\n", s.path.c_str(),
                rec.original_prob, rec.flipped ? 1 : 0, rec.final_label, nonsupport, cfg.k);
    if (!dump_dir.empty()) {
      const int sign = rec.original_prob > 0.5 ? 1 : -1;
      const Heatmap<float> heat = compute_cam(model, s.image, sign);
      const auto ranked = rank_patches(heat, cfg.mask_patch_px);
      const auto masked =
          make_masked_images(s.image, ranked, cfg.k, cfg.mask_fill, cfg.mask_patch_px);
      const size_t n = model.config.input_size;
      for (size_t m = 0; m < masked.size(); ++m) {
        char name[64];
        std::snprintf(name, sizeof name, "%s_mask_%03zu.pgm", stem_of(s.path).c_str(), m + 1);
        write_pgm_minmax((fs::path(dump_dir) / name).string(), masked[m].reshaped({n, n}));
      }
    }
  }
  return 0;
}

int cmd_sweep(const std::string& ckpt, const std::string& data_dir, const std::string& config_path,
              const std::string& param, const std::string& values_csv, size_t k, double theta,
              size_t mask_patch_px) {
  require_file(ckpt);
  const Model model = load_checkpoint(ckpt);
  const Dataset ds = resolve_eval_data(data_dir, config_path, model.config.input_size);
  TtaConfig base;
  base.k = k;
  base.theta = theta;
  base.mask_patch_px = mask_patch_px;

  std::vector<std::string> tokens;
  std::string tok;
  for (char c : values_csv + ",") {
    if (c == ',') {
      if (!tok.empty()) tokens.push_back(tok);
      tok.clear();
    } else {
      tok += c;
    }
  }
  if (tokens.empty()) throw ConfigError("sweep: empty --values list");

  SweepResult result;
  if (param == "k") {
    std::vector<size_t> ks;
    for (const auto& t : tokens) ks.push_back(static_cast<size_t>(std::stoul(t)));
    result = sweep_k(model, ds, ks, base);
  } else if (param == "theta") {
    std::vector<double> thetas;
    for (const auto& t : tokens) thetas.push_back(std::stod(t));
    result = sweep_theta(model, ds, thetas, base);
  } else {
    throw ConfigError("sweep: --param must be 'k' or 'theta'");
  }
  std::cout << sweep_csv(result);
  return 0;
}

int cmd_export_data(const std::string& config_path, const std::string& out_dir) {
  require_file(config_path);
  const RunConfig run = parse_run_config(config_path);
  const Dataset ds = realize_dataset(run.data, run.model.input_size);
  export_dataset(ds, out_dir);
  std::cout << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CAM-guided image classification"};
  app.require_subcommand(1);

  std::string config_path, out_dir, ckpt, data_dir, image_path, image_a, image_b;
  std::string sign_flag = "auto", dump_dir, param, values_csv;
  bool use_tta = false, bilinear = false;
  size_t k = 31, mask_patch_px = 8;
  double theta = 0.2, alpha = 1.0;
  uint64_t seed = 0;
  int label_a = 1, label_b = 0;

  auto* train = app.add_subcommand("train", "train a model from a run config");
  train->add_option("--config", config_path)->required();
  train->add_option("--out", out_dir)->required();

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint, metrics JSON to stdout");
  eval->add_option("--checkpoint", ckpt)->required();
  eval->add_option("--data", data_dir);
  eval->add_option("--config", config_path);
  eval->add_flag("--tta", use_tta);
  eval->add_option("--k", k);
  eval->add_option("--theta", theta);
  eval->add_option("--mask-patch", mask_patch_px);

  auto* cam = app.add_subcommand("cam", "export a CAM heatmap as PGM");
  cam->add_option("--checkpoint", ckpt)->required();
  cam->add_option("--image", image_path)->required();
  cam->add_option("--out", out_dir)->required();
  cam->add_option("--sign", sign_flag)->check(CLI::IsMember({"auto", "pos", "neg"}));
  cam->add_flag("--bilinear", bilinear);

  auto* preview = app.add_subcommand("preview-snapmix", "compose one SnapMix virtual sample");
  preview->add_option("--checkpoint", ckpt)->required();
  preview->add_option("--image-a", image_a)->required();
  preview->add_option("--image-b", image_b)->required();
  preview->add_option("--seed", seed)->required();
  preview->add_option("--out", out_dir)->required();
  preview->add_option("--label-a", label_a);
  preview->add_option("--label-b", label_b);
  preview->add_option("--alpha", alpha);

  auto* tta = app.add_subcommand("tta-infer", "per-image TTA vote lines");
  tta->add_option("--checkpoint", ckpt)->required();
  tta->add_option("--data", data_dir);
  tta->add_option("--config", config_path);
  tta->add_option("--k", k);
  tta->add_option("--theta", theta);
  tta->add_option("--mask-patch", mask_patch_px);
  tta->add_option("--dump-masks", dump_dir);

  auto* sweep = app.add_subcommand("sweep", "k or theta sensitivity sweep, CSV to stdout");
  sweep->add_option("--checkpoint", ckpt)->required();
  sweep->add_option("--data", data_dir);
  sweep->add_option("--config", config_path);
  sweep->add_option("--param", param)->required()->check(CLI::IsMember({"k", "theta"}));
  sweep->add_option("--values", values_csv)->required();
  sweep->add_option("--k", k);
  sweep->add_option("--theta", theta);
  sweep->add_option("--mask-patch", mask_patch_px);

  auto* exporter = app.add_subcommand("export-data", "write the config's dataset as pos/neg PGMs");
  exporter->add_option("--config", config_path)->required();
  exporter->add_option("--out", out_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*train) return cmd_train(config_path, out_dir);
    if (*eval) return cmd_eval(ckpt, data_dir, config_path, use_tta, k, theta, mask_patch_px);
    if (*cam) return cmd_cam(ckpt, image_path, out_dir, sign_flag, bilinear);
    if (*preview)
      return cmd_preview_snapmix(ckpt, image_a, image_b, seed, out_dir, label_a, label_b, alpha);
    if (*tta) return cmd_tta(ckpt, data_dir, config_path, k, theta, mask_patch_px, dump_dir);
    if (*sweep)
      return cmd_sweep(ckpt, data_dir, config_path, param, values_csv, k, theta, mask_patch_px);
    if (*exporter) return cmd_export_data(config_path, out_dir);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const FileError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const IngestError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
