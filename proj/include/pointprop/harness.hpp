#pragma once

// Batch experiments: placement strategy x label budget x one swept parameter
// over a dataset on disk or a generated synthetic suite, with JSON/CSV reports.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "pointprop/embedding_field.hpp"
#include "pointprop/error.hpp"
#include "pointprop/hil_proposal.hpp"
#include "pointprop/knn_propagation.hpp"
#include "pointprop/parallel.hpp"
#include "pointprop/point_placement.hpp"
#include "pointprop/segmentation_metrics.hpp"
#include "pointprop/simulated_expert.hpp"
#include "pointprop/synthetic.hpp"
#include "pointprop/tensor_io.hpp"

namespace pointprop {

enum class Placement { Random, Grid, Hil };
enum class SweepAxis { None, Lambda, Sigma, K, InitialPoints };
enum class IgnoreChoice { None, Unidentified };

inline constexpr std::uint8_t kDefaultUnidentifiedClass = 33;

struct ExperimentSpec {
  std::optional<std::filesystem::path> dataset;
  std::optional<SyntheticParams> synthetic;
  std::size_t scenes = 20;  // synthetic only
  Placement placement = Placement::Hil;
  std::vector<std::size_t> budgets{5, 10, 25};
  HilConfig hil;  // budget is taken from `budgets`
  std::size_t k = 1;
  SweepAxis sweep_axis = SweepAxis::None;
  std::vector<double> sweep_values;
  std::uint64_t seed = 0;
  IgnoreChoice ignore = IgnoreChoice::Unidentified;
  std::uint8_t unidentified_class = kDefaultUnidentifiedClass;
  std::optional<std::size_t> classes;  // defaults to the synthetic class count, else 255
  std::optional<std::filesystem::path> exclusions;
  std::optional<std::filesystem::path> output;
  NormalizeOrder normalize = NormalizeOrder::AfterUpsampling;
  UnknownPolicy unknown_policy = UnknownPolicy::LabelAsReserved;
  std::size_t workers = 0;  // 0 = hardware concurrency

  std::size_t class_count() const { return classes.value_or(synthetic ? synthetic->classes : 255); }

  ClassSet ignore_set() const {
    ClassSet set = make_class_set({kUnlabeled});
    if (ignore == IgnoreChoice::Unidentified) set.set(unidentified_class);
    return set;
  }

  void validate() const {
    if (dataset.has_value() == synthetic.has_value()) {
      throw Error(Errc::InvalidConfig, "exactly one of 'dataset' and 'synthetic' is required");
    }
    if (synthetic) {
      synthetic->validate();
      if (scenes == 0) throw Error(Errc::InvalidConfig, "scenes must be >= 1");
    }
    if (budgets.empty()) throw Error(Errc::InvalidConfig, "budgets must not be empty");
    for (std::size_t b : budgets) {
      if (b < 1) throw Error(Errc::InvalidConfig, "budgets must be >= 1");
    }
    if (classes && (*classes < 1 || *classes > 255)) throw Error(Errc::InvalidConfig, "classes must be in [1, 255]");
    HilConfig probe = hil;
    probe.budget = std::max(probe.budget, probe.initial_points);
    probe.validate();
    const std::size_t min_budget = *std::min_element(budgets.begin(), budgets.end());
    if (sweep_axis == SweepAxis::None && !sweep_values.empty()) {
      throw Error(Errc::InvalidConfig, "sweep values given without a sweep axis");
    }
    if (sweep_axis != SweepAxis::None && sweep_values.empty()) {
      throw Error(Errc::InvalidConfig, "sweep axis needs at least one value");
    }
    auto check_k = [&](double v) {
      if (!(v >= 1.0) || v != std::floor(v)) throw Error(Errc::InvalidConfig, "k must be a positive integer");
      if (static_cast<std::size_t>(v) > min_budget) throw Error(Errc::InvalidConfig, "k exceeds the smallest budget");
    };
    if (sweep_axis != SweepAxis::K) check_k(static_cast<double>(k));
    for (double v : sweep_values) {
      switch (sweep_axis) {
        case SweepAxis::Lambda:
          if (!(v >= 0.0) || !std::isfinite(v)) throw Error(Errc::InvalidConfig, "lambda must be finite and >= 0");
          break;
        case SweepAxis::Sigma:
          if (!(v > 0.0) || !std::isfinite(v)) throw Error(Errc::InvalidConfig, "sigma must be finite and > 0");
          break;
        case SweepAxis::K:
          check_k(v);
          break;
        case SweepAxis::InitialPoints:
          if (!(v >= 1.0) || v != std::floor(v)) {
            throw Error(Errc::InvalidConfig, "initial_points must be a positive integer");
          }
          break;
        case SweepAxis::None:
          break;
      }
    }
  }
};

namespace detail {

template <class E>
struct EnumName {
  E value;
  const char* name;
};

inline constexpr EnumName<Placement> kPlacementNames[] = {
    {Placement::Random, "random"}, {Placement::Grid, "grid"}, {Placement::Hil, "hil"}};
inline constexpr EnumName<SweepAxis> kSweepNames[] = {{SweepAxis::None, "none"},
                                                      {SweepAxis::Lambda, "lambda"},
                                                      {SweepAxis::Sigma, "sigma"},
                                                      {SweepAxis::K, "k"},
                                                      {SweepAxis::InitialPoints, "initial_points"}};
inline constexpr EnumName<IgnoreChoice> kIgnoreNames[] = {{IgnoreChoice::None, "none"},
                                                          {IgnoreChoice::Unidentified, "unidentified"}};
inline constexpr EnumName<NormalizeOrder> kNormalizeNames[] = {{NormalizeOrder::AfterUpsampling, "after"},
                                                               {NormalizeOrder::BeforeUpsampling, "before"}};
inline constexpr EnumName<UnknownPolicy> kPolicyNames[] = {{UnknownPolicy::LabelAsReserved, "reserved"},
                                                           {UnknownPolicy::Repropose, "repropose"}};

template <class E, std::size_t N>
E enum_from(const EnumName<E> (&table)[N], const std::string& text, const char* field) {
  for (const auto& entry : table) {
    if (text == entry.name) return entry.value;
  }
  throw Error(Errc::InvalidConfig, std::string("unknown value '") + text + "' for " + field);
}

template <class E, std::size_t N>
const char* enum_name(const EnumName<E> (&table)[N], E value) {
  for (const auto& entry : table) {
    if (entry.value == value) return entry.name;
  }
  return "?";
}

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> known, const char* where) {
  for (const auto& item : j.items()) {
    if (std::find_if(known.begin(), known.end(), [&](const char* k) { return item.key() == k; }) == known.end()) {
      throw Error(Errc::InvalidConfig, std::string("unknown key '") + item.key() + "' in " + where);
    }
  }
}

template <class T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace detail

inline SyntheticParams synthetic_params_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(Errc::InvalidConfig, "'synthetic' must be an object");
  detail::reject_unknown_keys(j, {"width", "height", "classes", "blobs", "dim", "noise", "instance_share", "scenes"},
                              "synthetic");
  SyntheticParams p;
  detail::read_field(j, "width", p.width);
  detail::read_field(j, "height", p.height);
  detail::read_field(j, "classes", p.classes);
  detail::read_field(j, "blobs", p.blobs);
  detail::read_field(j, "dim", p.dim);
  detail::read_field(j, "noise", p.noise);
  detail::read_field(j, "instance_share", p.instance_share);
  return p;
}

inline nlohmann::json to_json(const SyntheticParams& p) {
  return {{"width", p.width}, {"height", p.height}, {"classes", p.classes}, {"blobs", p.blobs},
          {"dim", p.dim},     {"noise", p.noise},   {"instance_share", p.instance_share}};
}

inline HilConfig hil_config_from_json(const nlohmann::json& j, HilConfig cfg = {}) {
  if (!j.is_object()) throw Error(Errc::InvalidConfig, "'hil' must be an object");
  detail::reject_unknown_keys(j, {"lambda", "sigma", "initial_points", "budget"}, "hil");
  detail::read_field(j, "lambda", cfg.lambda);
  detail::read_field(j, "sigma", cfg.sigma);
  detail::read_field(j, "initial_points", cfg.initial_points);
  detail::read_field(j, "budget", cfg.budget);
  return cfg;
}

inline ExperimentSpec spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(Errc::InvalidConfig, "experiment spec must be a JSON object");
  detail::reject_unknown_keys(j,
                              {"dataset", "synthetic", "placement", "budgets", "hil", "k", "sweep", "seed", "ignore",
                               "unidentified_class", "classes", "exclusions", "output", "normalize",
                               "unknown_policy", "workers"},
                              "experiment spec");
  ExperimentSpec s;
  if (j.contains("dataset")) s.dataset = j.at("dataset").get<std::string>();
  if (j.contains("synthetic")) {
    s.synthetic = synthetic_params_from_json(j.at("synthetic"));
    detail::read_field(j.at("synthetic"), "scenes", s.scenes);
  }
  std::string text;
  if (j.contains("placement")) {
    detail::read_field(j, "placement", text);
    s.placement = detail::enum_from(detail::kPlacementNames, text, "placement");
  }
  detail::read_field(j, "budgets", s.budgets);
  if (j.contains("hil")) s.hil = hil_config_from_json(j.at("hil"));
  detail::read_field(j, "k", s.k);
  if (j.contains("sweep")) {
    const auto& sw = j.at("sweep");
    if (!sw.is_object()) throw Error(Errc::InvalidConfig, "'sweep' must be an object");
    detail::reject_unknown_keys(sw, {"axis", "values"}, "sweep");
    text = "none";
    detail::read_field(sw, "axis", text);
    s.sweep_axis = detail::enum_from(detail::kSweepNames, text, "sweep.axis");
    detail::read_field(sw, "values", s.sweep_values);
  }
  detail::read_field(j, "seed", s.seed);
  if (j.contains("ignore")) {
    detail::read_field(j, "ignore", text);
    s.ignore = detail::enum_from(detail::kIgnoreNames, text, "ignore");
  }
  if (j.contains("unidentified_class")) {
    int id = -1;
    detail::read_field(j, "unidentified_class", id);
    if (id < 0 || id > 254) throw Error(Errc::InvalidConfig, "unidentified_class must be in [0, 254]");
    s.unidentified_class = static_cast<std::uint8_t>(id);
  }
  if (j.contains("classes")) s.classes = j.at("classes").get<std::size_t>();
  if (j.contains("exclusions")) s.exclusions = j.at("exclusions").get<std::string>();
  if (j.contains("output")) s.output = j.at("output").get<std::string>();
  if (j.contains("normalize")) {
    detail::read_field(j, "normalize", text);
    s.normalize = detail::enum_from(detail::kNormalizeNames, text, "normalize");
  }
  if (j.contains("unknown_policy")) {
    detail::read_field(j, "unknown_policy", text);
    s.unknown_policy = detail::enum_from(detail::kPolicyNames, text, "unknown_policy");
  }
  detail::read_field(j, "workers", s.workers);
  s.validate();
  return s;
}

inline nlohmann::json to_json(const ExperimentSpec& s) {
  nlohmann::json j;
  if (s.dataset) j["dataset"] = s.dataset->string();
  if (s.synthetic) {
    j["synthetic"] = to_json(*s.synthetic);
    j["synthetic"]["scenes"] = s.scenes;
  }
  j["placement"] = detail::enum_name(detail::kPlacementNames, s.placement);
  j["budgets"] = s.budgets;
  j["hil"] = {{"lambda", s.hil.lambda}, {"sigma", s.hil.sigma}, {"initial_points", s.hil.initial_points}};
  j["k"] = s.k;
  j["sweep"] = {{"axis", detail::enum_name(detail::kSweepNames, s.sweep_axis)}, {"values", s.sweep_values}};
  j["seed"] = s.seed;
  j["ignore"] = detail::enum_name(detail::kIgnoreNames, s.ignore);
  j["unidentified_class"] = s.unidentified_class;
  j["classes"] = s.class_count();
  if (s.exclusions) j["exclusions"] = s.exclusions->string();
  if (s.output) j["output"] = s.output->string();
  j["normalize"] = detail::enum_name(detail::kNormalizeNames, s.normalize);
  j["unknown_policy"] = detail::enum_name(detail::kPolicyNames, s.unknown_policy);
  j["workers"] = s.workers;
  return j;
}

inline ExperimentSpec read_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoFailure, "cannot open spec " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("spec is not valid JSON: ") + e.what());
  }
  return spec_from_json(j);
}

/// Stems listed one per line; blank lines and '#' comments are skipped and a
/// trailing file extension is ignored.
inline std::set<std::string> read_exclusions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoFailure, "cannot open exclusion list " + path.string());
  std::set<std::string> stems;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto last = line.find_last_not_of(" \t\r");
    const std::string entry = line.substr(first, last - first + 1);
    stems.insert(std::filesystem::path(entry).stem().string());
  }
  return stems;
}

/// One evaluable image: files on disk, or a synthetic scene index.
struct DatasetEntry {
  std::string stem;
  std::size_t index = 0;
  std::filesystem::path features;
  std::filesystem::path mask;
};

struct DatasetListing {
  std::vector<DatasetEntry> entries;
  std::vector<std::string> excluded;
  std::size_t found = 0;
};

/// Pairs <root>/masks/*.png with <root>/features/<stem>.ftns. Throws
/// MissingFeatureFile for an unpaired mask and MaskShapeMismatch when an
/// <root>/images/<stem>.png companion disagrees with the mask size.
inline DatasetListing list_dataset(const std::filesystem::path& root, const std::set<std::string>& excluded = {}) {
  namespace fs = std::filesystem;
  const fs::path masks = root / "masks";
  if (!fs::is_directory(masks)) throw Error(Errc::IoFailure, "no masks directory under " + root.string());
  std::vector<fs::path> mask_files;
  for (const auto& e : fs::directory_iterator(masks)) {
    if (e.is_regular_file() && e.path().extension() == ".png") mask_files.push_back(e.path());
  }
  std::sort(mask_files.begin(), mask_files.end());
  DatasetListing listing;
  listing.found = mask_files.size();
  for (const fs::path& mask : mask_files) {
    const std::string stem = mask.stem().string();
    if (excluded.count(stem)) {
      listing.excluded.push_back(stem);
      continue;
    }
    const fs::path features = root / "features" / (stem + ".ftns");
    if (!fs::is_regular_file(features)) throw Error(Errc::MissingFeatureFile, "no feature file for " + stem);
    const fs::path image = root / "images" / (stem + ".png");
    if (fs::is_regular_file(image)) {
      const PngInfo a = probe_png(detail::read_file(image));
      const PngInfo b = probe_png(detail::read_file(mask));
      if (a.width != b.width || a.height != b.height) {
        throw Error(Errc::MaskShapeMismatch, "image and mask sizes differ for " + stem);
      }
    }
    listing.entries.push_back({stem, listing.entries.size(), features, mask});
  }
  return listing;
}

struct ImageResult {
  std::string stem;
  std::size_t labels = 0;
  std::optional<double> pa, mpa, miou;  // empty when every gt pixel is ignored
  double seconds = 0.0;
};

struct RunResult {
  std::size_t budget = 0;
  std::optional<double> sweep_value;
  std::vector<ImageResult> images;
  ConfusionMatrix total{1};
  std::optional<Metrics> dataset;  // from the summed confusion matrix
  std::optional<double> mean_pa, mean_mpa, mean_miou;  // means of per-image values
  double mean_seconds = 0.0;
};

struct Report {
  ExperimentSpec spec;
  std::size_t found = 0;
  std::size_t evaluated = 0;
  std::vector<std::string> excluded;
  std::vector<RunResult> runs;
  double total_seconds = 0.0;
};

/// Seed for random placement on one image at one budget.
inline std::uint64_t placement_seed(std::uint64_t seed, std::size_t image, std::size_t budget) {
  return mix_seed(scene_seed(seed, image) ^ mix_seed(0x9e3779b9ULL + budget));
}

/// Labels chosen by the configured strategy, answered from ground truth.
inline LabeledPointSet place_labels(const ExperimentSpec& spec, const std::shared_ptr<const FeatureField>& field,
                                    const ClassMask& gt, std::size_t image, std::size_t budget, const HilConfig& hil) {
  if (spec.placement == Placement::Hil) {
    HilConfig cfg = hil;
    cfg.budget = budget;
    cfg.initial_points = std::min(cfg.initial_points, budget);
    SimulatedExpert expert(gt);
    return run_hil_session(field, expert, cfg, spec.unknown_policy);
  }
  const std::vector<Pixel> points = spec.placement == Placement::Grid
                                        ? grid_points(gt.height(), gt.width(), budget)
                                        : random_points(gt.height(), gt.width(), budget, placement_seed(spec.seed, image, budget));
  LabeledPointSet labels(field->dim());
  for (const Pixel& p : points) labels.add(*field, {p.x, p.y, gt(p.x, p.y)});
  return labels;
}

namespace detail {

struct RunPlan {
  std::size_t budget;
  std::optional<double> sweep_value;
  HilConfig hil;
  std::size_t k;
};

inline std::vector<RunPlan> plan_runs(const ExperimentSpec& spec) {
  std::vector<RunPlan> plans;
  std::vector<std::optional<double>> values;
  if (spec.sweep_axis == SweepAxis::None) {
    values.push_back(std::nullopt);
  } else {
    values.assign(spec.sweep_values.begin(), spec.sweep_values.end());
  }
  for (const auto& value : values) {
    for (std::size_t budget : spec.budgets) {
      RunPlan plan{budget, value, spec.hil, spec.k};
      if (value) {
        switch (spec.sweep_axis) {
          case SweepAxis::Lambda: plan.hil.lambda = *value; break;
          case SweepAxis::Sigma: plan.hil.sigma = *value; break;
          case SweepAxis::K: plan.k = static_cast<std::size_t>(*value); break;
          case SweepAxis::InitialPoints: plan.hil.initial_points = static_cast<std::size_t>(*value); break;
          case SweepAxis::None: break;
        }
      }
      plans.push_back(plan);
    }
  }
  return plans;
}

template <class T>
std::optional<double> mean_defined(const std::vector<ImageResult>& images, T ImageResult::*field) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : images) {
    if (r.*field) {
      sum += *(r.*field);
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

}  // namespace detail

inline Report run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  using clock = std::chrono::steady_clock;
  const auto started = clock::now();

  std::set<std::string> excluded;
  if (spec.exclusions) excluded = read_exclusions(*spec.exclusions);

  DatasetListing listing;
  if (spec.dataset) {
    listing = list_dataset(*spec.dataset, excluded);
  } else {
    listing.found = spec.scenes;
    for (std::size_t i = 0; i < spec.scenes; ++i) {
      const std::string stem = scene_stem(i);
      if (excluded.count(stem)) {
        listing.excluded.push_back(stem);
      } else {
        listing.entries.push_back({stem, i, {}, {}});
      }
    }
  }

  const std::vector<detail::RunPlan> plans = detail::plan_runs(spec);
  const std::size_t classes = spec.class_count();
  const ClassSet ignore = spec.ignore_set();
  const std::size_t n = listing.entries.size();
  std::vector<std::vector<ImageResult>> results(plans.size(), std::vector<ImageResult>(n));
  std::vector<std::vector<ConfusionMatrix>> matrices(plans.size(), std::vector<ConfusionMatrix>(n, ConfusionMatrix(classes)));

  const std::size_t workers = spec.workers == 0 ? default_worker_count() : spec.workers;
  parallel_for(
      0, n, 1,
      [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
          const DatasetEntry& entry = listing.entries[i];
          ClassMask gt;
          std::shared_ptr<const FeatureField> field;
          if (spec.synthetic) {
            SyntheticScene scene = generate_scene(*spec.synthetic, scene_seed(spec.seed, entry.index));
            gt = std::move(scene.mask);
            field = std::make_shared<const FeatureField>(
                build_embedding_field(scene.features, gt.height(), gt.width(), spec.normalize));
          } else {
            gt = read_mask(entry.mask);
            const Tensor features = read_tensor(entry.features);
            field = std::make_shared<const FeatureField>(
                build_embedding_field(features, gt.height(), gt.width(), spec.normalize));
          }
          validate_mask(gt, classes);
          for (std::size_t r = 0; r < plans.size(); ++r) {
            const auto t0 = clock::now();
            const LabeledPointSet labels = place_labels(spec, field, gt, entry.index, plans[r].budget, plans[r].hil);
            const ClassMask pred = propagate(*field, labels, {std::min(plans[r].k, labels.size())});
            const double seconds = std::chrono::duration<double>(clock::now() - t0).count();
            ConfusionMatrix cm = confusion_matrix(gt, pred, ignore, classes);
            ImageResult& out = results[r][i];
            out.stem = entry.stem;
            out.labels = labels.size();
            out.seconds = seconds;
            if (!cm.empty()) {
              out.pa = pixel_accuracy(cm);
              out.mpa = mean_pixel_accuracy(cm);
              out.miou = mean_iou(cm);
            }
            matrices[r][i] = std::move(cm);
          }
        }
      },
      workers);

  Report report;
  report.spec = spec;
  report.found = listing.found;
  report.evaluated = n;
  report.excluded = listing.excluded;
  for (std::size_t r = 0; r < plans.size(); ++r) {
    RunResult run;
    run.budget = plans[r].budget;
    run.sweep_value = plans[r].sweep_value;
    run.images = std::move(results[r]);
    run.total = ConfusionMatrix(classes);
    for (const ConfusionMatrix& cm : matrices[r]) run.total.merge(cm);
    if (!run.total.empty()) run.dataset = compute_metrics(run.total);
    run.mean_pa = detail::mean_defined(run.images, &ImageResult::pa);
    run.mean_mpa = detail::mean_defined(run.images, &ImageResult::mpa);
    run.mean_miou = detail::mean_defined(run.images, &ImageResult::miou);
    double seconds = 0.0;
    for (const auto& img : run.images) seconds += img.seconds;
    run.mean_seconds = n == 0 ? 0.0 : seconds / static_cast<double>(n);
    report.runs.push_back(std::move(run));
  }
  report.total_seconds = std::chrono::duration<double>(clock::now() - started).count();
  return report;
}

namespace detail {

inline nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline std::string csv_number(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream os;
  os.precision(17);
  os << *v;
  return os.str();
}

}  // namespace detail

inline nlohmann::json to_json(const Report& report) {
  nlohmann::json j;
  j["config"] = to_json(report.spec);
  j["seed"] = report.spec.seed;
  j["images_found"] = report.found;
  j["images_evaluated"] = report.evaluated;
  j["images_excluded"] = report.excluded.size();
  j["excluded"] = report.excluded;
  j["total_seconds"] = report.total_seconds;
  j["runs"] = nlohmann::json::array();
  for (const RunResult& run : report.runs) {
    nlohmann::json r;
    r["placement"] = detail::enum_name(detail::kPlacementNames, report.spec.placement);
    r["budget"] = run.budget;
    r["sweep_axis"] = detail::enum_name(detail::kSweepNames, report.spec.sweep_axis);
    r["sweep_value"] = detail::optional_json(run.sweep_value);
    nlohmann::json agg;
    if (run.dataset) {
      agg["pa"] = run.dataset->pa;
      agg["mpa"] = run.dataset->mpa;
      agg["miou"] = run.dataset->miou;
      agg["per_class"] = nlohmann::json::array();
      for (const ClassScore& c : run.dataset->per_class) {
        agg["per_class"].push_back(
            {{"class_id", c.class_id}, {"accuracy", detail::optional_json(c.accuracy)}, {"iou", detail::optional_json(c.iou)}});
      }
    } else {
      agg["pa"] = agg["mpa"] = agg["miou"] = nullptr;
    }
    agg["mean_image_pa"] = detail::optional_json(run.mean_pa);
    agg["mean_image_mpa"] = detail::optional_json(run.mean_mpa);
    agg["mean_image_miou"] = detail::optional_json(run.mean_miou);
    agg["seconds_per_image"] = run.mean_seconds;
    r["aggregate"] = agg;
    r["images"] = nlohmann::json::array();
    for (const ImageResult& img : run.images) {
      r["images"].push_back({{"image", img.stem},
                             {"labels", img.labels},
                             {"pa", detail::optional_json(img.pa)},
                             {"mpa", detail::optional_json(img.mpa)},
                             {"miou", detail::optional_json(img.miou)},
                             {"seconds", img.seconds}});
    }
    j["runs"].push_back(std::move(r));
  }
  return j;
}

/// One row per (run, image) plus "@dataset" (summed matrix) and "@mean"
/// (per-image mean) rows per run.
inline std::string to_csv(const Report& report) {
  std::ostringstream os;
  os << "placement,budget,sweep_axis,sweep_value,image,labels,pa,mpa,miou,seconds\n";
  const char* placement = detail::enum_name(detail::kPlacementNames, report.spec.placement);
  const char* axis = detail::enum_name(detail::kSweepNames, report.spec.sweep_axis);
  for (const RunResult& run : report.runs) {
    const std::string prefix = std::string(placement) + "," + std::to_string(run.budget) + "," + axis + "," +
                               detail::csv_number(run.sweep_value) + ",";
    for (const ImageResult& img : run.images) {
      os << prefix << img.stem << "," << img.labels << "," << detail::csv_number(img.pa) << ","
         << detail::csv_number(img.mpa) << "," << detail::csv_number(img.miou) << ","
         << detail::csv_number(img.seconds) << "\n";
    }
    std::optional<double> pa, mpa, miou;
    if (run.dataset) {
      pa = run.dataset->pa;
      mpa = run.dataset->mpa;
      miou = run.dataset->miou;
    }
    os << prefix << "@dataset,," << detail::csv_number(pa) << "," << detail::csv_number(mpa) << ","
       << detail::csv_number(miou) << "," << detail::csv_number(run.mean_seconds) << "\n";
    os << prefix << "@mean,," << detail::csv_number(run.mean_pa) << "," << detail::csv_number(run.mean_mpa) << ","
       << detail::csv_number(run.mean_miou) << "," << detail::csv_number(run.mean_seconds) << "\n";
  }
  return os.str();
}

/// Writes report.json and report.csv into `dir`.
inline void write_report(const Report& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(Errc::IoFailure, "cannot create " + dir.string());
  const std::string json = to_json(report).dump(2) + "\n";
  const std::string csv = to_csv(report);
  detail::write_file(dir / "report.json", std::span(reinterpret_cast<const std::uint8_t*>(json.data()), json.size()));
  detail::write_file(dir / "report.csv", std::span(reinterpret_cast<const std::uint8_t*>(csv.data()), csv.size()));
}

/// Scores every <gt_dir>/*.png against the same-named file in pred_dir.
struct EvaluationResult {
  std::vector<std::pair<std::string, std::optional<Metrics>>> images;
  ConfusionMatrix total{1};
  std::optional<Metrics> dataset;
};

inline EvaluationResult evaluate_directories(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                                             const ClassSet& ignore, std::size_t classes) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(gt_dir)) throw Error(Errc::IoFailure, "not a directory: " + gt_dir.string());
  std::vector<fs::path> gts;
  for (const auto& e : fs::directory_iterator(gt_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") gts.push_back(e.path());
  }
  std::sort(gts.begin(), gts.end());
  EvaluationResult result;
  result.total = ConfusionMatrix(classes);
  for (const fs::path& gt_path : gts) {
    const fs::path pred_path = pred_dir / gt_path.filename();
    if (!fs::is_regular_file(pred_path)) throw Error(Errc::IoFailure, "no prediction for " + gt_path.filename().string());
    const ClassMask gt = read_mask(gt_path);
    const ClassMask pred = read_mask(pred_path);
    if (!gt.same_shape(pred)) {
      throw Error(Errc::MaskShapeMismatch, "prediction and ground truth differ in size for " + gt_path.stem().string());
    }
    const ConfusionMatrix cm = confusion_matrix(gt, pred, ignore, classes);
    result.total.merge(cm);
    result.images.emplace_back(gt_path.stem().string(), cm.empty() ? std::nullopt : std::optional(compute_metrics(cm)));
  }
  if (!result.total.empty()) result.dataset = compute_metrics(result.total);
  return result;
}

}  // namespace pointprop
