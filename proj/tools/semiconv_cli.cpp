#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "semiconv/backbone.hpp"
#include "semiconv/dilemma.hpp"
#include "semiconv/errors.hpp"
#include "semiconv/gradsuite.hpp"
#include "semiconv/io.hpp"
#include "semiconv/losses.hpp"
#include "semiconv/render.hpp"
#include "semiconv/seedcut.hpp"
#include "semiconv/synth.hpp"

#ifndef SEMICONV_VERSION
#define SEMICONV_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace semiconv;

namespace {

// Input problems (missing files, bad JSON, bad values) map to exit code 1.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr double kGradTolerance = 1e-4;

struct Common {
  std::uint64_t seed = 0;
  std::string out;
  std::string config;
};

struct DilemmaArgs {
  double half_extent = 4.0;
  double step = 0.25;
  std::size_t stacks = 5;
};

struct SceneArgs {
  std::size_t height = 128, width = 128, rows = 4, cols = 4, radius = 3, spacing = 32;
  double noise = 0.0;
  std::string render;
};

struct TrainArgs {
  std::string scene;
  std::string mode = "semiconv";
  std::size_t epochs = 2000;
  double lr = 3e-4;
  std::size_t dims = 8;
  std::string optimizer = "sgd";
  double momentum = 0.9;
  double eps = 1e-8;
};

struct ClusterArgs {
  std::string scene;
  std::string model;
  std::string mode = "semiconv";
  std::size_t k = 0;
  std::string render;
};

struct SeedcutArgs {
  TrainArgs train;
  std::string boxes;
  double sigma_init = 1.0;
  double threshold = 0.5;
  double bce_weight = 1.0;
  std::string seed_mode = "hard";
  std::string render;
};

struct GradArgs {
  std::size_t instances = 20;
};

struct ArrowArgs {
  std::string scene;
  std::string model;
  std::size_t stride = 1;
};

void add_common(CLI::App* sub, Common& c, const std::string& default_out) {
  sub->add_option("--seed", c.seed, "Seed for every random draw")->capture_default_str();
  sub->add_option("--out", c.out, "Primary output path")->default_str(default_out);
  sub->add_option("--config", c.config, "JSON file whose keys override the flags of the same name");
}

void add_train_options(CLI::App* sub, TrainArgs& t) {
  sub->add_option("--scene", t.scene, "Scene JSON (default: the standard dot grid)");
  sub->add_option("--mode", t.mode, "conv or semiconv")->capture_default_str()->check(
      CLI::IsMember({"conv", "semiconv"}));
  sub->add_option("--epochs", t.epochs, "SGD steps")->capture_default_str();
  sub->add_option("--lr", t.lr, "Learning rate")->capture_default_str();
  sub->add_option("--dims", t.dims, "Embedding dimension D")->capture_default_str();
  sub->add_option("--optimizer", t.optimizer, "sgd or sgd+momentum")->capture_default_str()->check(
      CLI::IsMember({"sgd", "sgd+momentum"}));
  sub->add_option("--momentum", t.momentum, "Momentum coefficient")->capture_default_str();
  sub->add_option("--eps", t.eps, "Smoothing inside the loss norm")->capture_default_str();
}

std::string json_to_flag(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number()) return v.dump();
  throw InputError("config: values must be strings, numbers or booleans");
}

/// Reapplies every key of the config file as if it had been passed as --key.
/// A manifest file works too: its "config" object is used.
void apply_config(CLI::App* sub, const std::string& path) {
  json j;
  try {
    j = read_json(path);
  } catch (const json::exception& e) {
    throw InputError("config: malformed JSON in " + path + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw InputError(e.what());
  }
  if (j.is_object() && j.contains("config") && j["config"].is_object()) j = j["config"];
  if (!j.is_object()) throw InputError("config: expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "config") continue;
    CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (!opt) throw InputError("config: unknown key '" + key + "'");
    opt->clear();
    opt->add_result(json_to_flag(value));
    opt->run_callback();
  }
}

json config_echo(const CLI::App* sub) {
  json echo = json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "config") continue;
    echo[name] = opt->count() ? opt->as<std::string>() : opt->get_default_str();
  }
  return echo;
}

Scene load_scene(const std::string& path, std::uint64_t seed) {
  if (path.empty()) {
    SceneSpec spec;
    spec.seed = seed;
    return generate_scene(spec);
  }
  try {
    return scene_from_json(read_json(path));
  } catch (const json::exception& e) {
    throw InputError("scene: malformed JSON in " + path + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw InputError(e.what());
  }
}

TrainConfig make_train_config(const TrainArgs& a, std::uint64_t seed) {
  TrainConfig c;
  c.mode = parse_mode(a.mode);
  c.dims = a.dims;
  c.epochs = a.epochs;
  c.lr = a.lr;
  c.optimizer = a.optimizer == "sgd+momentum" ? Optimizer::momentum : Optimizer::sgd;
  c.momentum = a.momentum;
  c.eps = a.eps;
  c.seed = seed;
  return c;
}

Backbone load_model(const std::string& path) {
  if (!fs::exists(path)) throw InputError("model: no such file " + path);
  try {
    return Backbone::load(fs::path(path));
  } catch (const std::runtime_error& e) {
    throw InputError(std::string("model: ") + e.what());
  }
}

std::string sibling(const std::string& out, const std::string& suffix) { return out + suffix; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-convolutional pixel embeddings: experiments and tools", "semiconv"};
  app.set_version_flag("--version", SEMICONV_VERSION);
  app.require_subcommand(1);

  Common common;
  DilemmaArgs dil;
  SceneArgs scn;
  TrainArgs trn;
  ClusterArgs clu;
  SeedcutArgs sc;
  GradArgs grd;
  ArrowArgs arw;

  auto* dilemma = app.add_subcommand("dilemma", "Periodic 1-D signal: conv collisions vs semi-conv colors");
  add_common(dilemma, common, "dilemma.json");
  dilemma->add_option("--half-extent", dil.half_extent, "Signal covers [-L, L]")->capture_default_str();
  dilemma->add_option("--step", dil.step, "Sample spacing")->capture_default_str();
  dilemma->add_option("--stacks", dil.stacks, "Random conv stacks to test")->capture_default_str();

  auto* synth = app.add_subcommand("synth-gen", "Generate a dot-grid scene");
  add_common(synth, common, "scene.json");
  synth->add_option("--height", scn.height)->capture_default_str();
  synth->add_option("--width", scn.width)->capture_default_str();
  synth->add_option("--rows", scn.rows)->capture_default_str();
  synth->add_option("--cols", scn.cols)->capture_default_str();
  synth->add_option("--radius", scn.radius, "Dot radius")->capture_default_str();
  synth->add_option("--spacing", scn.spacing, "Center-to-center distance")->capture_default_str();
  synth->add_option("--noise", scn.noise, "Additive Gaussian noise std")->capture_default_str();
  synth->add_option("--render", scn.render, "Also write the image as PPM");

  auto* train = app.add_subcommand("train", "Fit an embedding network to a scene");
  add_common(train, common, "model.scnv");
  add_train_options(train, trn);

  auto* cluster = app.add_subcommand("cluster", "k-means decode a trained model and score it");
  add_common(cluster, common, "metrics.json");
  cluster->add_option("--scene", clu.scene, "Scene JSON (default: the standard dot grid)");
  cluster->add_option("--model", clu.model, "Model file written by train")->required();
  cluster->add_option("--mode", clu.mode, "conv or semiconv, as trained")->capture_default_str()->check(
      CLI::IsMember({"conv", "semiconv"}));
  cluster->add_option("--k", clu.k, "Cluster count (0: ground-truth instance count)")->capture_default_str();
  cluster->add_option("--render", clu.render, "Also write the clusters as PPM");

  auto* seedcut = app.add_subcommand("seedcut", "Train embedding + kernel and cut masks from boxes");
  add_common(seedcut, common, "masks.json");
  add_train_options(seedcut, sc.train);
  seedcut->add_option("--boxes", sc.boxes, "Boxes JSON (default: ground-truth boxes)");
  seedcut->add_option("--sigma-init", sc.sigma_init, "Initial kernel scale")->capture_default_str();
  seedcut->add_option("--threshold", sc.threshold, "Mask probability threshold")->capture_default_str();
  seedcut->add_option("--bce-weight", sc.bce_weight, "Weight of the kernel BCE term")->capture_default_str();
  seedcut->add_option("--seed-mode", sc.seed_mode, "hard or soft")->capture_default_str()->check(
      CLI::IsMember({"hard", "soft"}));
  seedcut->add_option("--render", sc.render, "Also write a mask overlay as PPM");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
  add_common(gradcheck, common, "gradcheck.json");
  gradcheck->add_option("--instances", grd.instances, "Random problems per op")->capture_default_str();

  auto* arrows = app.add_subcommand("render-arrows", "Draw the learned displacement field");
  add_common(arrows, common, "arrows.ppm");
  arrows->add_option("--scene", arw.scene, "Scene JSON (default: the standard dot grid)");
  arrows->add_option("--model", arw.model, "Semi-convolutional model file")->required();
  arrows->add_option("--stride", arw.stride, "Draw every n-th pixel")->capture_default_str();

  if (argc < 2) {
    std::cerr << app.help();
    return 1;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  CLI::App* sub = app.get_subcommands().front();
  const auto start = std::chrono::steady_clock::now();
  json outputs = json::array();
  int code = 0;
  std::string error;
  const std::string default_out = sub->get_option("--out")->get_default_str();
  if (common.out.empty()) common.out = default_out;
  try {
    if (!common.config.empty()) apply_config(sub, common.config);
    if (common.out.empty()) common.out = default_out;

    if (sub == dilemma) {
      const DilemmaReport r = run_dilemma(dil.half_extent, dil.step, common.seed, dil.stacks);
      write_json(common.out, {{"half_extent", dil.half_extent},
                              {"step", dil.step},
                              {"stacks", dil.stacks},
                              {"max_conv_spread", r.max_conv_spread},
                              {"max_semiconv_error", r.max_semiconv_error},
                              {"centers", r.centers},
                              {"n_regions", r.n_regions}});
      outputs.push_back(common.out);
    } else if (sub == synth) {
      const SceneSpec spec{scn.height, scn.width, scn.rows, scn.cols, scn.radius, scn.spacing, scn.noise, common.seed};
      const Scene scene = generate_scene(spec);
      write_json(common.out, scene_to_json(scene));
      outputs.push_back(common.out);
      if (!scn.render.empty()) {
        write_ppm(scn.render, render_grayscale(scene.image));
        outputs.push_back(scn.render);
      }
    } else if (sub == train) {
      const Scene scene = load_scene(trn.scene, common.seed);
      const TrainResult r = semiconv::train(scene, make_train_config(trn, common.seed));
      r.model.save(fs::path(common.out));
      const std::string log = sibling(common.out, ".log.json");
      write_json(log, {{"mode", trn.mode},
                       {"initial_loss", r.losses.front()},
                       {"final_loss", r.final_loss()},
                       {"losses", r.losses}});
      outputs.push_back(common.out);
      outputs.push_back(log);
    } else if (sub == cluster) {
      const Scene scene = load_scene(clu.scene, common.seed);
      const Backbone model = load_model(clu.model);
      const EmbeddingMode mode = parse_mode(clu.mode);
      const EmbeddingField field = embed(model, scene, mode);
      const std::size_t k = clu.k ? clu.k : static_cast<std::size_t>(scene.gt.count);
      const InstanceLabeling pred = decode_kmeans(field, scene.gt.foreground_mask(), k, common.seed);
      const SegmentationScore s = score(pred, scene.gt);
      // Loss of the loaded model on this scene.
      double final_loss = 0.0;
      {
        NoGradGuard no_grad;
        final_loss = pull_to_mean_loss(field, SegmentSet::from_labeling(scene.gt)).item();
      }
      write_json(common.out,
                 {{"mode", clu.mode}, {"mean_iou", s.mean_iou}, {"purity", s.purity}, {"final_loss", final_loss}});
      outputs.push_back(common.out);
      if (!clu.render.empty()) {
        write_ppm(clu.render, render_labels(pred));
        outputs.push_back(clu.render);
      }
    } else if (sub == seedcut) {
      const Scene scene = load_scene(sc.train.scene, common.seed);
      std::vector<Box> boxes;
      if (sc.boxes.empty()) {
        boxes = gt_boxes(scene.gt);
      } else {
        try {
          boxes = boxes_from_json(read_json(sc.boxes));
        } catch (const json::exception& e) {
          throw InputError("boxes: malformed JSON in " + sc.boxes + ": " + e.what());
        } catch (const std::runtime_error& e) {
          throw InputError(e.what());
        }
      }
      SeedcutConfig cfg;
      cfg.train = make_train_config(sc.train, common.seed);
      cfg.sigma_init = sc.sigma_init;
      cfg.bce_weight = sc.bce_weight;
      cfg.seed_mode = sc.seed_mode == "soft" ? SeedMode::soft : SeedMode::hard;
      const SeedcutModel m = train_seedcut(scene, boxes, cfg);
      const EmbeddingField field = embed(m.model, scene, cfg.train.mode);
      const auto cuts = cut_boxes(field, synthetic_score_map(scene, cfg.scores), boxes, m.kernel, cfg.seed_mode,
                                  sc.threshold, scene.gt);
      write_json(common.out, {{"sigma", m.kernel.sigma()},
                              {"final_loss", m.losses.back()},
                              {"mean_iou", mean_iou(cuts)},
                              {"width", scene.gt.width},
                              {"height", scene.gt.height},
                              {"masks", cuts_to_json(cuts, scene.gt.width)}});
      outputs.push_back(common.out);
      if (!sc.render.empty()) {
        write_ppm(sc.render, render_cuts(scene.image, cuts));
        outputs.push_back(sc.render);
      }
    } else if (sub == gradcheck) {
      const auto entries = run_gradient_suite(common.seed, grd.instances);
      json list = json::array();
      bool ok = true;
      for (const auto& e : entries) {
        const bool pass = e.max_error < kGradTolerance;
        ok = ok && pass;
        list.push_back({{"op", e.op}, {"instances", e.instances}, {"max_rel_error", e.max_error}, {"pass", pass}});
      }
      write_json(common.out, {{"tolerance", kGradTolerance}, {"checks", list}});
      outputs.push_back(common.out);
      if (!ok) throw NumericError("gradient check exceeded tolerance");
    } else if (sub == arrows) {
      const Scene scene = load_scene(arw.scene, common.seed);
      const Backbone model = load_model(arw.model);
      const EmbeddingField field = embed(model, scene, EmbeddingMode::semiconv);
      write_ppm(common.out, render_arrows(field, scene.gt, scene.image, arw.stride));
      outputs.push_back(common.out);
    }
  } catch (const NumericError& e) {
    error = e.what();
    code = 2;
  } catch (const std::exception& e) {
    error = e.what();
    code = 1;
  }
  if (code != 0) std::cerr << "error: " << error << '\n';

  json echo = config_echo(sub);
  echo["out"] = common.out;
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  json manifest{{"subcommand", sub->get_name()},
                {"config", echo},
                {"seeds", {{"seed", common.seed}}},
                {"version", SEMICONV_VERSION},
                {"duration_s", seconds},
                {"outputs", outputs},
                {"status", code == 0 ? "ok" : "error"}};
  if (code != 0) manifest["error"] = error;
  try {
    write_json(common.out + ".manifest.json", manifest);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    if (code == 0) code = 1;
  }
  return code;
}
