// Command-line front end: batch experiments, synthetic data, single-image
// propagation and HIL runs, evaluation, and the session service.

#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "pointprop/harness.hpp"
#include "pointprop/session_service.hpp"

namespace pp = pointprop;
namespace fs = std::filesystem;

namespace {

void print_metrics_line(const std::string& label, const std::optional<double>& pa, const std::optional<double>& mpa,
                        const std::optional<double>& miou) {
  auto f = [](const std::optional<double>& v) { return v ? std::to_string(*v * 100.0).substr(0, 6) : std::string("-"); };
  std::printf("%-28s PA %7s  mPA %7s  mIoU %7s\n", label.c_str(), f(pa).c_str(), f(mpa).c_str(), f(miou).c_str());
}

pp::FeatureField load_field(const fs::path& features, std::size_t height, std::size_t width,
                            const std::optional<fs::path>& image, pp::NormalizeOrder order) {
  const pp::Tensor tensor = pp::read_tensor(features);
  if (tensor.rank() != 3) throw pp::Error(pp::Errc::InvalidShape, "features must be [height, width, dim]");
  if (height == 0 || width == 0) {
    if (image) {
      const pp::PngInfo info = pp::probe_png(pp::detail::read_file(*image));
      height = info.height;
      width = info.width;
    } else {
      height = tensor.shape[0];
      width = tensor.shape[1];
    }
  }
  return pp::build_embedding_field(tensor, height, width, order);
}

const std::map<std::string, pp::NormalizeOrder> kNormalize = {{"after", pp::NormalizeOrder::AfterUpsampling},
                                                             {"before", pp::NormalizeOrder::BeforeUpsampling}};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse point-label propagation with human-in-the-loop point proposals"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Run an experiment spec (JSON) and write report.json / report.csv");
  std::string spec_path;
  std::string run_out;
  run->add_option("--spec", spec_path, "Experiment spec file")->required()->check(CLI::ExistingFile);
  run->add_option("--out", run_out, "Report directory (overrides the output set in the spec file)");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  std::string synth_out;
  std::size_t scenes = 20;
  std::uint64_t synth_seed = 0;
  pp::SyntheticParams params;
  synth->add_option("--out", synth_out, "Output root")->required();
  synth->add_option("--scenes", scenes, "Number of scenes")->capture_default_str();
  synth->add_option("--seed", synth_seed, "Seed")->capture_default_str();
  synth->add_option("--width", params.width)->capture_default_str();
  synth->add_option("--height", params.height)->capture_default_str();
  synth->add_option("--classes", params.classes)->capture_default_str();
  synth->add_option("--blobs", params.blobs)->capture_default_str();
  synth->add_option("--dim", params.dim)->capture_default_str();
  synth->add_option("--noise", params.noise, "Per-component gaussian std")->capture_default_str();
  synth->add_option("--instance-share", params.instance_share)->capture_default_str();

  // propagate
  auto* prop = app.add_subcommand("propagate", "Propagate point labels to a dense mask");
  std::string prop_features, prop_labels, prop_out, prop_normalize = "after";
  std::optional<std::string> prop_image;
  std::size_t prop_k = 1, prop_h = 0, prop_w = 0;
  prop->add_option("--features", prop_features, "Feature tensor (.ftns)")->required()->check(CLI::ExistingFile);
  prop->add_option("--labels", prop_labels, "Point labels CSV (x,y,class_id)")->required()->check(CLI::ExistingFile);
  prop->add_option("--out", prop_out, "Output mask PNG")->required();
  prop->add_option("--k", prop_k, "Neighbors")->capture_default_str();
  prop->add_option("--height", prop_h, "Image height (default: --image or tensor height)");
  prop->add_option("--width", prop_w, "Image width (default: --image or tensor width)");
  prop->add_option("--image", prop_image, "Companion image; sets the output size");
  prop->add_option("--normalize", prop_normalize)->check(CLI::IsMember({"after", "before"}))->capture_default_str();

  // hil
  auto* hil = app.add_subcommand("hil", "Simulated HIL labeling of one image against its ground truth");
  std::string hil_features, hil_gt, hil_unknown = "reserved", hil_normalize = "after";
  std::optional<std::string> hil_out, hil_mask_out;
  pp::HilConfig hil_cfg;
  std::size_t hil_k = 1;
  hil->add_option("--features", hil_features)->required()->check(CLI::ExistingFile);
  hil->add_option("--gt", hil_gt, "Ground-truth mask PNG")->required()->check(CLI::ExistingFile);
  hil->add_option("--budget", hil_cfg.budget, "Total labels")->required();
  hil->add_option("--lambda", hil_cfg.lambda)->capture_default_str();
  hil->add_option("--sigma", hil_cfg.sigma)->capture_default_str();
  hil->add_option("--initial", hil_cfg.initial_points, "Seed labels")->capture_default_str();
  hil->add_option("--k", hil_k)->capture_default_str();
  hil->add_option("--unknown", hil_unknown)->check(CLI::IsMember({"reserved", "repropose"}))->capture_default_str();
  hil->add_option("--normalize", hil_normalize)->check(CLI::IsMember({"after", "before"}))->capture_default_str();
  hil->add_option("--out", hil_out, "Write the chosen labels as CSV");
  hil->add_option("--mask-out", hil_mask_out, "Write the propagated mask PNG");

  // eval
  auto* eval = app.add_subcommand("eval", "Score predicted masks against ground truth");
  std::string eval_pred, eval_gt, eval_ignore = "unidentified";
  int unidentified = pp::kDefaultUnidentifiedClass;
  std::size_t eval_classes = 255;
  eval->add_option("--pred", eval_pred, "Directory of predicted masks")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--gt", eval_gt, "Directory of ground-truth masks")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--ignore", eval_ignore)->check(CLI::IsMember({"none", "unidentified"}))->capture_default_str();
  eval->add_option("--unidentified-class", unidentified)->check(CLI::Range(0, 254))->capture_default_str();
  eval->add_option("--classes", eval_classes)->check(CLI::Range(1, 255))->capture_default_str();

  // serve
  auto* serve = app.add_subcommand("serve", "Start the labeling session service");
  pp::ServiceOptions options;
  std::optional<std::string> data_root, log_dir, static_dir;
  bool relaxed = false;
  serve->add_option("--host", options.host)->envname("POINTPROP_HOST")->capture_default_str();
  serve->add_option("--port", options.port)->envname("POINTPROP_PORT")->capture_default_str();
  serve->add_option("--data-root", data_root, "Dataset root for sessions created by image_id")
      ->envname("POINTPROP_DATA_ROOT");
  serve->add_option("--max-sessions", options.max_sessions)->envname("POINTPROP_MAX_SESSIONS")->capture_default_str();
  serve->add_flag("--relaxed", relaxed, "Allow labeling near (not only at) the proposed pixel by default")
      ->envname("POINTPROP_RELAXED");
  serve->add_option("--log-dir", log_dir, "Per-session event logs; existing sessions are recovered on start")
      ->envname("POINTPROP_LOG_DIR");
  serve->add_option("--payload-limit", options.payload_limit, "Maximum request size in bytes")
      ->envname("POINTPROP_PAYLOAD_LIMIT")
      ->capture_default_str();
  serve->add_option("--static-dir", static_dir, "Serve a browser client from this directory under /ui")
      ->envname("POINTPROP_STATIC_DIR");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      pp::ExperimentSpec spec = pp::read_spec(spec_path);
      if (!run_out.empty()) spec.output = run_out;
      const pp::Report report = pp::run_experiment(spec);
      std::printf("images: %zu found, %zu evaluated, %zu excluded\n", report.found, report.evaluated,
                  report.excluded.size());
      for (const auto& r : report.runs) {
        std::string label = "budget " + std::to_string(r.budget);
        if (r.sweep_value) {
          std::ostringstream os;
          os << " " << pp::to_json(spec)["sweep"]["axis"].get<std::string>() << "=" << *r.sweep_value;
          label += os.str();
        }
        print_metrics_line(label, r.dataset ? std::optional(r.dataset->pa) : std::nullopt,
                           r.dataset ? std::optional(r.dataset->mpa) : std::nullopt,
                           r.dataset ? std::optional(r.dataset->miou) : std::nullopt);
      }
      if (spec.output) {
        pp::write_report(report, *spec.output);
        std::printf("report written to %s\n", spec.output->string().c_str());
      }
      return 0;
    }
    if (*synth) {
      const auto stems = pp::generate_synthetic(synth_out, params, scenes, synth_seed);
      std::printf("wrote %zu scenes to %s\n", stems.size(), synth_out.c_str());
      return 0;
    }
    if (*prop) {
      std::optional<fs::path> image;
      if (prop_image) image = *prop_image;
      const pp::FeatureField field = load_field(prop_features, prop_h, prop_w, image, kNormalize.at(prop_normalize));
      const auto labels = pp::read_labels(prop_labels, pp::ImageExtent{field.width(), field.height()});
      const pp::ClassMask mask = pp::propagate(field, pp::make_label_set(field, labels), {prop_k});
      pp::write_mask(mask, prop_out);
      return 0;
    }
    if (*hil) {
      const pp::ClassMask gt = pp::read_mask(hil_gt);
      hil_cfg.initial_points = std::min(hil_cfg.initial_points, hil_cfg.budget);
      const auto field = std::make_shared<const pp::FeatureField>(
          load_field(hil_features, gt.height(), gt.width(), std::nullopt, kNormalize.at(hil_normalize)));
      pp::SimulatedExpert expert(gt);
      const auto policy = hil_unknown == "repropose" ? pp::UnknownPolicy::Repropose : pp::UnknownPolicy::LabelAsReserved;
      const pp::LabeledPointSet labels = pp::run_hil_session(field, expert, hil_cfg, policy);
      const pp::ClassMask mask = pp::propagate(*field, labels, {std::min(hil_k, labels.size())});
      if (hil_out) pp::write_labels(labels.labels(), *hil_out);
      if (hil_mask_out) pp::write_mask(mask, *hil_mask_out);
      const pp::ConfusionMatrix cm = pp::confusion_matrix(gt, mask, pp::make_class_set({pp::kUnlabeled}), 255);
      std::printf("%zu labels\n", labels.size());
      if (cm.empty()) {
        std::printf("no evaluable pixels\n");
      } else {
        print_metrics_line("propagated mask", pp::pixel_accuracy(cm), pp::mean_pixel_accuracy(cm), pp::mean_iou(cm));
      }
      return 0;
    }
    if (*eval) {
      pp::ClassSet ignore = pp::make_class_set({pp::kUnlabeled});
      if (eval_ignore == "unidentified") ignore.set(static_cast<std::size_t>(unidentified));
      const pp::EvaluationResult result = pp::evaluate_directories(eval_pred, eval_gt, ignore, eval_classes);
      nlohmann::json out;
      out["images"] = nlohmann::json::array();
      for (const auto& [stem, m] : result.images) {
        out["images"].push_back({{"image", stem}, {"metrics", m ? pp::to_json(*m) : nlohmann::json(nullptr)}});
      }
      out["dataset"] = result.dataset ? pp::to_json(*result.dataset) : nlohmann::json(nullptr);
      std::cout << out.dump(2) << "\n";
      return 0;
    }
    if (*serve) {
      if (data_root) options.data_root = *data_root;
      if (log_dir) options.log_dir = *log_dir;
      if (static_dir) options.static_dir = *static_dir;
      options.strict = !relaxed;
      pp::SessionStore store(options);
      const std::size_t recovered = store.recover();
      if (recovered > 0) std::fprintf(stderr, "recovered %zu sessions\n", recovered);
      std::fprintf(stderr, "listening on %s:%d\n", options.host.c_str(), options.port);
      if (!pp::serve(store)) {
        std::fprintf(stderr, "cannot listen on %s:%d\n", options.host.c_str(), options.port);
        return 1;
      }
      return 0;
    }
  } catch (const pp::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
