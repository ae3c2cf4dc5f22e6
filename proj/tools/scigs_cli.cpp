// Command-line front end: masks, synth, encode, train, render, eval.
//
// Frame sequences are directories holding frame_000.scif, frame_001.scif, ...
// plus 8-bit PNG previews. Exit codes: 0 success, 1 validation error, 2 I/O error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "scigs/scigs.hpp"

namespace fs = std::filesystem;
using namespace scigs;

namespace {

struct GlobalOptions {
  std::uint64_t seed = 0;
  bool deterministic = true;
  std::string config_path;
  std::string out_dir = ".";
};

std::string frame_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%03d", i);
  return buf;
}

void save_frames(const fs::path& dir, std::span<const Image> frames) {
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const std::string stem = frame_name(static_cast<int>(i));
    io::save_image(dir / (stem + ".scif"), frames[i]);
    io::save_png(dir / (stem + ".png"), frames[i]);
  }
}

std::vector<Image> load_frames(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError(dir.string() + ": not a directory of frame_NNN.scif files");
  std::vector<Image> frames;
  for (int i = 0;; ++i) {
    const fs::path p = dir / (frame_name(i) + ".scif");
    if (!fs::exists(p)) break;
    frames.push_back(io::load_image(p));
  }
  if (frames.empty()) throw IoError(dir.string() + ": no frame_000.scif found");
  for (const auto& f : frames)
    if (!f.same_shape(frames.front()) || f.channels != 3)
      throw InvalidParameter(dir.string() + ": frames must all be H x W x 3 with the same size");
  return frames;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError(p.string() + ": cannot open for reading");
  return std::string(std::istreambuf_iterator<char>(in), {});
}

/// Config from --config (if any) with --seed/--deterministic applied on top.
/// Image size and compression ratio come from the data; a config that pins
/// them to different values is rejected.
TrainConfig resolve_config(const GlobalOptions& g, const CLI::App& app, int height, int width, int count) {
  nlohmann::json doc = nlohmann::json::object();
  if (!g.config_path.empty()) {
    try {
      doc = nlohmann::json::parse(read_text(g.config_path));
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError({g.config_path + ": " + e.what()});
    }
  }
  std::vector<std::string> issues;
  auto pin = [&](const char* key, int value) {
    if (doc.is_object() && doc.contains(key) && doc[key] != value)
      issues.push_back(std::string(key) + ": config says " + doc[key].dump() + " but the input data has " +
                       std::to_string(value));
    if (doc.is_object()) doc[key] = value;
  };
  pin("image.width", width);
  pin("image.height", height);
  pin("sci.compression_ratio", count);
  if (!issues.empty()) throw ConfigError(std::move(issues));
  if (app.count("--seed")) doc["train.seed"] = g.seed;
  if (app.count("--deterministic")) doc["train.deterministic"] = g.deterministic;
  return config_from_json(doc);
}

void write_metrics_csv(const fs::path& path, const FrameMetrics& m) {
  std::string csv = "frame,psnr,ssim\n";
  for (std::size_t i = 0; i < m.psnr.size(); ++i)
    csv += std::to_string(i) + "," + format_fixed4(m.psnr[i]) + "," + format_fixed4(m.ssim[i]) + "\n";
  csv += "mean," + format_fixed4(m.psnr_mean()) + "," + format_fixed4(m.ssim_mean()) + "\n";
  io::write_file(path, std::vector<char>(csv.begin(), csv.end()));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Snapshot-compressive Gaussian splatting toolkit"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--seed", g.seed, "Random seed (overrides train.seed)");
  app.add_option("--deterministic", g.deterministic, "Deterministic mode (true/false)");
  app.add_option("--config", g.config_path, "JSON config with dotted keys")->check(CLI::ExistingFile);
  app.add_option("--out", g.out_dir, "Output directory");

  // masks
  auto* masks_cmd = app.add_subcommand("masks", "Generate a binary mask set (SCIM)");
  int m_height = 64, m_width = 64, m_count = 8;
  double m_or = 0.25;
  masks_cmd->add_option("--height", m_height);
  masks_cmd->add_option("--width", m_width);
  masks_cmd->add_option("--count", m_count, "Compression ratio B");
  masks_cmd->add_option("--overlap-ratio", m_or);

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Render a procedural ground-truth sequence");
  std::string s_preset = "static-blobs";
  int s_count = 8, s_width = 64, s_height = 64;
  synth_cmd->add_option("--preset", s_preset)->check(CLI::IsMember(dataset_presets()));
  synth_cmd->add_option("--count", s_count);
  synth_cmd->add_option("--width", s_width);
  synth_cmd->add_option("--height", s_height);

  // encode
  auto* encode_cmd = app.add_subcommand("encode", "Modulate and sum frames into one compressed image (SCIF)");
  std::string e_frames, e_masks;
  double e_or = 0.25, e_noise = 0.0;
  encode_cmd->add_option("--frames", e_frames, "Frame directory")->required();
  encode_cmd->add_option("--masks", e_masks, "Mask file; generated from --overlap-ratio and --seed when omitted");
  encode_cmd->add_option("--overlap-ratio", e_or);
  encode_cmd->add_option("--noise-sigma", e_noise);

  // train
  auto* train_cmd = app.add_subcommand("train", "Recover frames from a compressed image");
  std::string t_compressed, t_masks, t_truth;
  train_cmd->add_option("--compressed", t_compressed)->required();
  train_cmd->add_option("--masks", t_masks)->required();
  train_cmd->add_option("--truth", t_truth, "Ground-truth frame directory (logs PSNR)");

  // render
  auto* render_cmd = app.add_subcommand("render", "Render one pose stamp from a checkpoint");
  std::string r_ckpt;
  int r_stamp = 0;
  render_cmd->add_option("--checkpoint", r_ckpt)->required();
  render_cmd->add_option("--stamp", r_stamp)->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Per-frame PSNR/SSIM of recovered frames");
  std::string v_recovered, v_truth;
  eval_cmd->add_option("--recovered", v_recovered)->required();
  eval_cmd->add_option("--truth", v_truth)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const fs::path out = g.out_dir;
  try {
    if (*masks_cmd) {
      const auto m = generate_masks(m_height, m_width, m_count, m_or, g.seed);
      io::save_masks(out / "masks.scim", m);
      std::cout << "wrote " << (out / "masks.scim").string() << " (global overlap "
                << measure_overlap_ratio(m).global << ")\n";
    } else if (*synth_cmd) {
      const auto ds = synthesize_dataset(s_preset, g.seed, s_count, s_width, s_height);
      save_frames(out / "frames", ds.frames);
      if (ds.motion) {
        nlohmann::ordered_json j;
        j["start_px"] = {ds.motion->start_px.x(), ds.motion->start_px.y()};
        j["step_px"] = {ds.motion->step_px.x(), ds.motion->step_px.y()};
        const std::string text = j.dump(2) + "\n";
        io::write_file(out / "motion.json", std::vector<char>(text.begin(), text.end()));
      }
      std::cout << "wrote " << ds.frames.size() << " frames to " << (out / "frames").string() << "\n";
    } else if (*encode_cmd) {
      const auto frames = load_frames(e_frames);
      const MaskSet m = e_masks.empty() ? generate_masks(frames[0].height, frames[0].width,
                                                         static_cast<int>(frames.size()), e_or, g.seed)
                                        : io::load_masks(e_masks);
      const Image y = modulate(frames, m, e_noise, g.seed + 1);
      io::save_image(out / "compressed.scif", y);
      io::save_png(out / "compressed.png", y, 1.0 / m.count);
      if (e_masks.empty()) io::save_masks(out / "masks.scim", m);
      std::cout << "wrote " << (out / "compressed.scif").string() << "\n";
    } else if (*train_cmd) {
      const Image y = io::load_image(t_compressed);
      const MaskSet m = io::load_masks(t_masks);
      require(y.height == m.height && y.width == m.width && y.channels == 3,
              "compressed image and masks disagree on size");
      const TrainConfig cfg = resolve_config(g, app, y.height, y.width, m.count);
      std::vector<Image> truth;
      if (!t_truth.empty()) truth = load_frames(t_truth);

      std::string log = "iteration,loss,psnr\n";
      TrainHooks hooks;
      hooks.on_log = [&](const LogEntry& e) {
        log += std::to_string(e.iteration) + "," + std::to_string(e.loss) + "," +
               (e.psnr ? format_fixed4(*e.psnr) : std::string()) + "\n";
        std::cout << "iter " << e.iteration << " loss " << e.loss;
        if (e.psnr) std::cout << " psnr " << *e.psnr;
        std::cout << std::endl;
      };
      hooks.on_checkpoint = [&](const Model& model, const TrainState& st) {
        io::save_checkpoint(out / "checkpoint.scig",
                            io::Checkpoint{model, st.gaussian_opt, st.field_opt,
                                           static_cast<std::uint64_t>(st.iteration), cfg});
      };
      const auto r = train(y, m, cfg, truth, hooks);
      save_frames(out / "recovered", r.frames);
      io::write_file(out / "train_log.csv", std::vector<char>(log.begin(), log.end()));
      if (!truth.empty()) write_metrics_csv(out / "metrics.csv", evaluate_frames(r.frames, truth));
      std::cout << "wrote " << (out / "checkpoint.scig").string() << "\n";
    } else if (*render_cmd) {
      const auto ck = io::load_checkpoint(r_ckpt);
      require(r_stamp >= 0 && r_stamp < ck.config.compression_ratio,
              "--stamp must lie in [0, " + std::to_string(ck.config.compression_ratio) + ")");
      const Camera cam = make_training_camera(ck.config);
      TrainState tmp;
      refresh_sampling_rates(ck.config, ck.model, cam, tmp);
      const auto img = stamp_forward(ck.model.scene, cam, PoseStamp(r_stamp, ck.config.compression_ratio),
                                     stamp_options(ck.config, ck.model, &tmp))
                           .image.pixels;
      const std::string stem = "render_" + frame_name(r_stamp);
      io::save_image(out / (stem + ".scif"), img);
      io::save_png(out / (stem + ".png"), img);
      std::cout << "wrote " << (out / (stem + ".scif")).string() << "\n";
    } else if (*eval_cmd) {
      const auto rec = load_frames(v_recovered);
      const auto truth = load_frames(v_truth);
      const auto metrics = evaluate_frames(rec, truth);
      write_metrics_csv(out / "metrics.csv", metrics);
      std::cout << "mean psnr " << metrics.psnr_mean() << " ssim " << metrics.ssim_mean() << "\n";
    }
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
