#pragma once

// Live labeling sessions over HTTP. A session wraps one HilEngine; the human
// (or a script) clicks seeds, then labels each proposed pixel until the budget
// is spent. Optional per-session JSON-lines logs allow recovery by replay.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "pointprop/embedding_field.hpp"
#include "pointprop/error.hpp"
#include "pointprop/hil_proposal.hpp"
#include "pointprop/knn_propagation.hpp"
#include "pointprop/segmentation_metrics.hpp"
#include "pointprop/simulated_expert.hpp"
#include "pointprop/tensor_io.hpp"

namespace pointprop {

enum class Phase { Seeding, Proposing, Complete };

inline const char* to_string(Phase p) {
  switch (p) {
    case Phase::Seeding: return "seeding";
    case Phase::Proposing: return "proposing";
    case Phase::Complete: return "complete";
  }
  return "?";
}

/// Carries the HTTP status a failure maps to.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, const std::string& message) : std::runtime_error(message), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

struct SessionConfig {
  HilConfig hil;
  std::size_t k = 1;
  /// Strict: during proposing only the proposed pixel may be labeled. Otherwise
  /// any unlabeled pixel within relabel_radius (Chebyshev) is accepted and
  /// recorded as a deviation.
  bool strict = true;
  std::size_t relabel_radius = 3;
  UnknownPolicy unknown_policy = UnknownPolicy::LabelAsReserved;
  NormalizeOrder normalize = NormalizeOrder::AfterUpsampling;
  std::size_t classes = 255;
  bool ignore_unidentified = true;
  std::uint8_t unidentified_class = 33;

  void validate() const {
    hil.validate();
    if (k < 1) throw Error(Errc::InvalidConfig, "k must be >= 1");
    if (classes < 1 || classes > 255) throw Error(Errc::InvalidConfig, "classes must be in [1, 255]");
  }

  ClassSet ignore_set() const {
    ClassSet set = make_class_set({kUnlabeled});
    if (ignore_unidentified) set.set(unidentified_class);
    return set;
  }
};

inline SessionConfig session_config_from_json(const nlohmann::json& j, SessionConfig cfg = {}) {
  if (j.is_null()) return cfg;
  if (!j.is_object()) throw Error(Errc::InvalidConfig, "config must be a JSON object");
  try {
    for (const auto& item : j.items()) {
      const std::string& key = item.key();
      const auto& v = item.value();
      if (key == "lambda") cfg.hil.lambda = v.get<double>();
      else if (key == "sigma") cfg.hil.sigma = v.get<double>();
      else if (key == "initial_points") cfg.hil.initial_points = v.get<std::size_t>();
      else if (key == "budget") cfg.hil.budget = v.get<std::size_t>();
      else if (key == "k") cfg.k = v.get<std::size_t>();
      else if (key == "strict") cfg.strict = v.get<bool>();
      else if (key == "relabel_radius") cfg.relabel_radius = v.get<std::size_t>();
      else if (key == "unknown_policy") {
        const auto s = v.get<std::string>();
        if (s == "reserved") cfg.unknown_policy = UnknownPolicy::LabelAsReserved;
        else if (s == "repropose") cfg.unknown_policy = UnknownPolicy::Repropose;
        else throw Error(Errc::InvalidConfig, "unknown_policy must be 'reserved' or 'repropose'");
      } else if (key == "normalize") {
        const auto s = v.get<std::string>();
        if (s == "after") cfg.normalize = NormalizeOrder::AfterUpsampling;
        else if (s == "before") cfg.normalize = NormalizeOrder::BeforeUpsampling;
        else throw Error(Errc::InvalidConfig, "normalize must be 'after' or 'before'");
      } else if (key == "classes") cfg.classes = v.get<std::size_t>();
      else if (key == "ignore") {
        const auto s = v.get<std::string>();
        if (s != "none" && s != "unidentified") throw Error(Errc::InvalidConfig, "ignore must be 'none' or 'unidentified'");
        cfg.ignore_unidentified = s == "unidentified";
      } else if (key == "unidentified_class") {
        const int id = v.get<int>();
        if (id < 0 || id > 254) throw Error(Errc::InvalidConfig, "unidentified_class must be in [0, 254]");
        cfg.unidentified_class = static_cast<std::uint8_t>(id);
      } else {
        throw Error(Errc::InvalidConfig, "unknown config key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("bad config value: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

inline nlohmann::json to_json(const SessionConfig& c) {
  return {{"lambda", c.hil.lambda},
          {"sigma", c.hil.sigma},
          {"initial_points", c.hil.initial_points},
          {"budget", c.hil.budget},
          {"k", c.k},
          {"strict", c.strict},
          {"relabel_radius", c.relabel_radius},
          {"unknown_policy", c.unknown_policy == UnknownPolicy::Repropose ? "repropose" : "reserved"},
          {"normalize", c.normalize == NormalizeOrder::BeforeUpsampling ? "before" : "after"},
          {"classes", c.classes},
          {"ignore", c.ignore_unidentified ? "unidentified" : "none"},
          {"unidentified_class", c.unidentified_class}};
}

inline nlohmann::json to_json(const PointLabel& l) { return {{"x", l.x}, {"y", l.y}, {"class_id", l.class_id}}; }

inline nlohmann::json to_json(const Metrics& m) {
  nlohmann::json per_class = nlohmann::json::array();
  for (const ClassScore& c : m.per_class) {
    per_class.push_back({{"class_id", c.class_id},
                         {"accuracy", c.accuracy ? nlohmann::json(*c.accuracy) : nlohmann::json(nullptr)},
                         {"iou", c.iou ? nlohmann::json(*c.iou) : nlohmann::json(nullptr)}});
  }
  return {{"pa", m.pa}, {"mpa", m.mpa}, {"miou", m.miou}, {"per_class", per_class}};
}

struct LabelOutcome {
  bool accepted = false;
  bool excluded = false;   // kUnlabeled answer under the repropose policy
  bool deviation = false;  // non-strict relabel away from the proposal
  std::size_t labels_count = 0;
  Phase phase = Phase::Seeding;
};

class Session {
 public:
  Session(std::string id, std::string image_id, std::shared_ptr<const FeatureField> field,
          std::optional<ClassMask> gt, std::optional<std::vector<std::uint8_t>> image_png, SessionConfig cfg)
      : id_(std::move(id)),
        image_id_(std::move(image_id)),
        gt_(std::move(gt)),
        image_png_(std::move(image_png)),
        cfg_(cfg),
        engine_(std::move(field), cfg.hil) {
    if (gt_ && (gt_->width() != engine_.field().width() || gt_->height() != engine_.field().height())) {
      throw Error(Errc::MaskShapeMismatch, "ground truth and feature field differ in size");
    }
    update_phase();
  }

  const std::string& id() const noexcept { return id_; }
  const std::string& image_id() const noexcept { return image_id_; }
  const SessionConfig& config() const noexcept { return cfg_; }
  bool evaluation() const noexcept { return gt_.has_value(); }
  std::size_t width() const noexcept { return engine_.field().width(); }
  std::size_t height() const noexcept { return engine_.field().height(); }
  const std::optional<std::vector<std::uint8_t>>& image_png() const noexcept { return image_png_; }

  std::size_t seed_target() const noexcept { return std::min(cfg_.hil.initial_points, cfg_.hil.budget); }

  /// Seeds the simulated expert would pick; only in evaluation mode.
  std::vector<PointLabel> suggested_seeds() const {
    if (!gt_) return {};
    return seed_points(*gt_, seed_target());
  }

  Phase phase() const {
    std::lock_guard lock(mutex_);
    return phase_;
  }

  std::vector<PointLabel> labels() const {
    std::lock_guard lock(mutex_);
    return engine_.labels().labels();
  }

  nlohmann::json describe() const {
    std::lock_guard lock(mutex_);
    nlohmann::json labels = nlohmann::json::array();
    for (const PointLabel& l : engine_.labels().labels()) labels.push_back(to_json(l));
    return {{"session_id", id_},
            {"image_id", image_id_},
            {"phase", to_string(phase_)},
            {"width", width()},
            {"height", height()},
            {"labels", labels},
            {"labels_count", engine_.labels().size()},
            {"budget", cfg_.hil.budget},
            {"initial_points", seed_target()},
            {"evaluation", evaluation()},
            {"has_image", image_png_.has_value()},
            {"exhausted", exhausted_},
            {"config", to_json(cfg_)}};
  }

  /// The outstanding proposal; stable until the next accepted submission.
  Proposal proposal() const {
    std::lock_guard lock(mutex_);
    if (phase_ != Phase::Proposing) {
      throw ServiceError(409, std::string("no proposal in phase ") + to_string(phase_));
    }
    return *outstanding_;
  }

  LabelOutcome submit(const PointLabel& label) {
    std::lock_guard lock(mutex_);
    if (label.x >= width() || label.y >= height()) throw ServiceError(400, "label outside the image");
    if (phase_ == Phase::Complete) throw ServiceError(409, "session is complete");
    if (engine_.labels().contains(label.x, label.y)) throw ServiceError(409, "pixel already labeled");
    LabelOutcome out;
    if (phase_ == Phase::Seeding) {
      if (label.class_id == kUnlabeled) throw ServiceError(400, "seed labels need a class id below 255");
    } else {
      const Proposal& p = *outstanding_;
      if (label.x != p.x || label.y != p.y) {
        const std::size_t dx = label.x > p.x ? label.x - p.x : p.x - label.x;
        const std::size_t dy = label.y > p.y ? label.y - p.y : p.y - label.y;
        if (cfg_.strict || std::max(dx, dy) > cfg_.relabel_radius) {
          throw ServiceError(409, "label must be placed at the proposed pixel (" + std::to_string(p.x) + ", " +
                                      std::to_string(p.y) + ")");
        }
        out.deviation = true;
      }
      if (label.class_id == kUnlabeled && cfg_.unknown_policy == UnknownPolicy::Repropose) {
        engine_.exclude(label.pixel());
        out.excluded = true;
      }
    }
    if (!out.excluded) engine_.add_label(label);
    out.accepted = !out.excluded;
    log_event({{"event", "label"}, {"x", label.x}, {"y", label.y}, {"class_id", label.class_id}});
    update_phase();
    out.labels_count = engine_.labels().size();
    out.phase = phase_;
    return out;
  }

  ClassMask mask() const {
    std::lock_guard lock(mutex_);
    return mask_locked();
  }

  nlohmann::json metrics() const {
    std::lock_guard lock(mutex_);
    if (!gt_) throw ServiceError(409, "metrics need a ground-truth mask (evaluation mode)");
    const ConfusionMatrix cm = confusion_matrix(*gt_, mask_locked(), cfg_.ignore_set(), cfg_.classes);
    if (cm.empty()) throw ServiceError(409, "every ground-truth pixel is ignored");
    nlohmann::json j = to_json(compute_metrics(cm));
    j["labels_count"] = engine_.labels().size();
    return j;
  }

  /// Appends events to `path` from now on, after writing `header`.
  void attach_log(const std::filesystem::path& path, const nlohmann::json& header) {
    std::lock_guard lock(mutex_);
    log_.emplace(path, std::ios::app);
    if (!*log_) throw Error(Errc::IoFailure, "cannot open session log " + path.string());
    *log_ << header.dump() << "\n" << std::flush;
  }

  void resume_log(const std::filesystem::path& path) {
    std::lock_guard lock(mutex_);
    log_.emplace(path, std::ios::app);
    if (!*log_) throw Error(Errc::IoFailure, "cannot open session log " + path.string());
  }

 private:
  ClassMask mask_locked() const {
    const std::size_t n = engine_.labels().size();
    if (n == 0) throw ServiceError(409, "mask needs at least one label");
    return propagate(engine_.field(), engine_.labels(), {std::min(cfg_.k, n)});
  }

  void update_phase() {
    const std::size_t n = engine_.labels().size();
    outstanding_.reset();
    if (n < seed_target()) {
      phase_ = Phase::Seeding;
      return;
    }
    if (n >= cfg_.hil.budget || exhausted_) {
      phase_ = Phase::Complete;
      return;
    }
    try {
      outstanding_ = engine_.propose_next();
      phase_ = Phase::Proposing;
    } catch (const Error& e) {
      if (e.code() != Errc::AllPixelsLabeled) throw;
      exhausted_ = true;
      phase_ = Phase::Complete;
    }
  }

  void log_event(const nlohmann::json& event) {
    if (log_) *log_ << event.dump() << "\n" << std::flush;
  }

  std::string id_;
  std::string image_id_;
  std::optional<ClassMask> gt_;
  std::optional<std::vector<std::uint8_t>> image_png_;
  SessionConfig cfg_;
  mutable std::mutex mutex_;
  HilEngine engine_;
  Phase phase_ = Phase::Seeding;
  std::optional<Proposal> outstanding_;
  bool exhausted_ = false;
  std::optional<std::ofstream> log_;
};

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::optional<std::filesystem::path> data_root;  // <root>/{features,masks,images}/<image_id>.*
  std::size_t max_sessions = 16;
  bool strict = true;  // default for sessions that do not set it
  std::optional<std::filesystem::path> log_dir;
  std::size_t payload_limit = 1'200'000'000;
  std::optional<std::filesystem::path> static_dir;
};

/// Everything needed to open a session.
struct SessionInput {
  std::string image_id;
  Tensor features;
  std::optional<ClassMask> gt;
  std::optional<std::vector<std::uint8_t>> image_png;
  nlohmann::json config;  // raw, validated on create
  bool uploaded = false;  // false: features come from the data root by image_id
};

class SessionStore {
 public:
  explicit SessionStore(ServiceOptions options = {}) : options_(std::move(options)), rng_(std::random_device{}()) {
    if (options_.log_dir) std::filesystem::create_directories(*options_.log_dir);
  }

  const ServiceOptions& options() const noexcept { return options_; }

  std::shared_ptr<Session> create(SessionInput input) {
    std::string id;
    {
      std::lock_guard lock(id_mutex_);
      id = new_id();
    }
    auto session = build(id, input);
    {
      std::unique_lock lock(mutex_);
      if (sessions_.size() >= options_.max_sessions) throw ServiceError(503, "session limit reached");
      sessions_.emplace(id, session);
    }
    if (options_.log_dir) persist(*session, input);
    return session;
  }

  /// Loads features (and, for evaluation, the mask) from the data root.
  SessionInput load_from_dataset(const std::string& image_id, const nlohmann::json& config, bool evaluation) const {
    if (!options_.data_root) throw ServiceError(400, "service has no data root; upload the features instead");
    if (image_id.empty() || image_id.find_first_of("/\\") != std::string::npos || image_id.front() == '.') {
      throw ServiceError(400, "invalid image_id");
    }
    namespace fs = std::filesystem;
    const fs::path root = *options_.data_root;
    const fs::path features = root / "features" / (image_id + ".ftns");
    if (!fs::is_regular_file(features)) throw ServiceError(404, "no features for image " + image_id);
    SessionInput input;
    input.image_id = image_id;
    input.features = read_tensor(features);
    input.config = config;
    if (evaluation) {
      const fs::path mask = root / "masks" / (image_id + ".png");
      if (!fs::is_regular_file(mask)) throw ServiceError(404, "no ground-truth mask for image " + image_id);
      input.gt = read_mask(mask);
    }
    const fs::path image = root / "images" / (image_id + ".png");
    if (fs::is_regular_file(image)) input.image_png = detail::read_file(image);
    return input;
  }

  std::shared_ptr<Session> get(const std::string& id) const {
    std::shared_lock lock(mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw ServiceError(404, "unknown session " + id);
    return it->second;
  }

  bool remove(const std::string& id) {
    std::unique_lock lock(mutex_);
    return sessions_.erase(id) > 0;
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return sessions_.size();
  }

  /// Rebuilds every logged session by replaying its events. Returns the count.
  std::size_t recover() {
    if (!options_.log_dir) return 0;
    namespace fs = std::filesystem;
    std::vector<fs::path> logs;
    for (const auto& e : fs::directory_iterator(*options_.log_dir)) {
      if (e.path().extension() == ".jsonl") logs.push_back(e.path());
    }
    std::sort(logs.begin(), logs.end());
    std::size_t recovered = 0;
    for (const fs::path& log : logs) {
      std::ifstream in(log);
      std::string line;
      if (!std::getline(in, line)) continue;
      const nlohmann::json header = nlohmann::json::parse(line);
      const std::string id = header.at("session_id").get<std::string>();
      SessionInput input;
      const fs::path dir = log.parent_path();
      if (header.at("source") == "dataset") {
        input = load_from_dataset(header.at("image_id").get<std::string>(), header.at("config"),
                                  header.at("evaluation").get<bool>());
      } else {
        input.image_id = header.at("image_id").get<std::string>();
        input.uploaded = true;
        input.features = read_tensor(dir / (id + ".features.ftns"));
        input.config = header.at("config");
        if (fs::exists(dir / (id + ".gt.png"))) input.gt = read_mask(dir / (id + ".gt.png"));
        if (fs::exists(dir / (id + ".image.png"))) input.image_png = detail::read_file(dir / (id + ".image.png"));
      }
      auto session = build(id, input);
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        const nlohmann::json event = nlohmann::json::parse(line);
        if (event.at("event") == "label") {
          session->submit({event.at("x").get<std::size_t>(), event.at("y").get<std::size_t>(),
                           event.at("class_id").get<std::uint8_t>()});
        }
      }
      session->resume_log(log);
      std::unique_lock lock(mutex_);
      sessions_[id] = session;
      ++recovered;
    }
    return recovered;
  }

 private:
  std::string new_id() {
    std::ostringstream os;
    os << std::hex;
    for (int i = 0; i < 2; ++i) {
      os.width(16);
      os.fill('0');
      os << rng_();
    }
    return os.str();
  }

  std::shared_ptr<Session> build(const std::string& id, const SessionInput& input) const {
    SessionConfig defaults;
    defaults.strict = options_.strict;
    const SessionConfig cfg = session_config_from_json(input.config, defaults);
    if (input.features.rank() != 3) throw Error(Errc::InvalidShape, "features must be [height, width, dim]");
    std::size_t h = input.features.shape[0];
    std::size_t w = input.features.shape[1];
    if (input.image_png) {
      const PngInfo info = probe_png(*input.image_png);
      h = info.height;
      w = info.width;
    } else if (input.gt) {
      h = input.gt->height();
      w = input.gt->width();
    }
    if (input.gt) {
      if (input.gt->height() != h || input.gt->width() != w) {
        throw Error(Errc::MaskShapeMismatch, "ground truth and image differ in size");
      }
      validate_mask(*input.gt, cfg.classes);
    }
    auto field = std::make_shared<const FeatureField>(build_embedding_field(input.features, h, w, cfg.normalize));
    return std::make_shared<Session>(id, input.image_id, std::move(field), input.gt, input.image_png, cfg);
  }

  void persist(Session& session, const SessionInput& input) const {
    namespace fs = std::filesystem;
    const fs::path dir = *options_.log_dir;
    const std::string& id = session.id();
    nlohmann::json header = {{"event", "create"},
                             {"session_id", id},
                             {"image_id", input.image_id},
                             {"config", input.config},
                             {"evaluation", input.gt.has_value()}};
    header["source"] = input.uploaded ? "upload" : "dataset";
    if (input.uploaded) {
      write_tensor(input.features, dir / (id + ".features.ftns"));
      if (input.gt) write_mask(*input.gt, dir / (id + ".gt.png"));
      if (input.image_png) detail::write_file(dir / (id + ".image.png"), *input.image_png);
    }
    session.attach_log(dir / (id + ".jsonl"), header);
  }

  ServiceOptions options_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::mutex id_mutex_;
  std::mt19937_64 rng_;
};

namespace detail {

inline void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", message}});
}

inline int status_for(Errc code) {
  switch (code) {
    case Errc::DuplicatePoint:
    case Errc::AllPixelsLabeled:
    case Errc::EmptyLabelSet:
      return 409;
    default:
      return 400;
  }
}

/// Runs a handler, mapping failures to JSON error responses.
template <class F>
void guarded(httplib::Response& res, F&& handler) {
  try {
    handler();
  } catch (const ServiceError& e) {
    send_error(res, e.status(), e.what());
  } catch (const Error& e) {
    send_error(res, status_for(e.code()), e.what());
  } catch (const nlohmann::json::exception& e) {
    send_error(res, 400, std::string("malformed JSON: ") + e.what());
  }
}

inline nlohmann::json parse_body(const std::string& body) {
  try {
    return nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw ServiceError(400, std::string("malformed JSON: ") + e.what());
  }
}

inline std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

inline SessionInput input_from_request(const SessionStore& store, const httplib::Request& req) {
  if (req.is_multipart_form_data()) {
    if (!req.has_file("features")) throw ServiceError(400, "multipart upload needs a 'features' part");
    SessionInput input;
    input.uploaded = true;
    input.features = decode_tensor(bytes_of(req.get_file_value("features").content));
    if (req.has_file("config")) input.config = parse_body(req.get_file_value("config").content);
    if (req.has_file("image_id")) input.image_id = req.get_file_value("image_id").content;
    if (req.has_file("gt")) input.gt = decode_mask_png(bytes_of(req.get_file_value("gt").content));
    if (req.has_file("image")) {
      input.image_png = bytes_of(req.get_file_value("image").content);
      probe_png(*input.image_png);
    }
    return input;
  }
  const nlohmann::json body = parse_body(req.body);
  if (!body.is_object() || !body.contains("image_id")) throw ServiceError(400, "body needs 'image_id'");
  const nlohmann::json config = body.value("config", nlohmann::json::object());
  const bool evaluation = body.value("evaluation", false);
  return store.load_from_dataset(body.at("image_id").get<std::string>(), config, evaluation);
}

}  // namespace detail

/// Registers the session API on `server`.
inline void install_routes(httplib::Server& server, SessionStore& store) {
  using httplib::Request;
  using httplib::Response;
  server.set_payload_max_length(store.options().payload_limit);
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  server.Options(R"(/.*)", [](const Request&, Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });

  server.Get("/health", [&store](const Request&, Response& res) {
    detail::send_json(res, 200, {{"status", "ok"}, {"sessions", store.size()}});
  });

  server.Post("/sessions", [&store](const Request& req, Response& res) {
    detail::guarded(res, [&] {
      SessionInput input = detail::input_from_request(store, req);
      const auto session = store.create(std::move(input));
      nlohmann::json body = {{"session_id", session->id()},
                             {"phase", to_string(session->phase())},
                             {"width", session->width()},
                             {"height", session->height()},
                             {"budget", session->config().hil.budget},
                             {"initial_points", session->seed_target()}};
      if (session->evaluation()) {
        nlohmann::json seeds = nlohmann::json::array();
        for (const PointLabel& l : session->suggested_seeds()) seeds.push_back(to_json(l));
        body["suggested_seed_points"] = seeds;
      }
      detail::send_json(res, 201, body);
    });
  });

  server.Get(R"(/sessions/([0-9a-f]+))", [&store](const Request& req, Response& res) {
    detail::guarded(res, [&] { detail::send_json(res, 200, store.get(req.matches[1])->describe()); });
  });

  server.Delete(R"(/sessions/([0-9a-f]+))", [&store](const Request& req, Response& res) {
    detail::guarded(res, [&] {
      if (!store.remove(req.matches[1])) throw ServiceError(404, "unknown session");
      res.status = 204;
    });
  });

  server.Get(R"(/sessions/([0-9a-f]+)/proposal)", [&store](const Request& req, Response& res) {
    detail::guarded(res, [&] {
      const auto session = store.get(req.matches[1]);
      const Proposal p = session->proposal();
      detail::send_json(res, 200, {{"x", p.x}, {"y", p.y}, {"M_value", p.value}, {"phase", "proposing"}});
    });
  });

  server.Post(R"(/sessions/([0-9a-f]+)/labels)", [&store](const Request& req, Response& res) {
    detail::guarded(res, [&] {
      const auto session = store.get(req.matches[1]);
      const nlohmann::json body = detail::parse_body(req.body);
      if (!body.is_object() || !body.contains("x") || !body.contains("y") || !body.contains("class_id")) {
        throw ServiceError(400, "label needs x, y and class_id");
      }
      const long long x = body.at("x").get<long long>();
      const long long y = body.at("y").get<long long>();
      const int cls = body.at("class_id").get<int>();
      if (x < 0 || y < 0) throw ServiceError(400, "label outside the image");
      if (cls < 0 || cls > 255) throw ServiceError(400, "class_id must be in [0, 255]");
      const LabelOutcome out = session->submit(
          {static_cast<std::size_t>(x), static_cast<std::size_t>(y), static_cast<std::uint8_t>(cls)});
      detail::send_json(res, 200,
                        {{"accepted", out.accepted},
                         {"excluded", out.excluded},
                         {"deviation", out.deviation},
                         {"labels_count", out.labels_count},
                         {"phase", to_string(out.phase)}});
    });
  });

  server.Get(R"(/sessions/([0-9a-f]+)/labels\.csv)", [&store](const Request& req, Response& res) {
    detail::guarded(res, [&] {
      res.set_content(format_labels_csv(store.get(req.matches[1])->labels()), "text/csv");
    });
  });

  server.Get(R"(/sessions/([0-9a-f]+)/mask)", [&store](const Request& req, Response& res) {
    detail::guarded(res, [&] {
      const std::vector<std::uint8_t> png = encode_mask_png(store.get(req.matches[1])->mask());
      res.set_content(std::string(png.begin(), png.end()), "image/png");
    });
  });

  server.Get(R"(/sessions/([0-9a-f]+)/image)", [&store](const Request& req, Response& res) {
    detail::guarded(res, [&] {
      const auto& png = store.get(req.matches[1])->image_png();
      if (!png) throw ServiceError(404, "session has no image");
      res.set_content(std::string(png->begin(), png->end()), "image/png");
    });
  });

  server.Get(R"(/sessions/([0-9a-f]+)/metrics)", [&store](const Request& req, Response& res) {
    detail::guarded(res, [&] { detail::send_json(res, 200, store.get(req.matches[1])->metrics()); });
  });

  if (store.options().static_dir) server.set_mount_point("/ui", store.options().static_dir->string());
}

/// Blocks serving the API until the server is stopped.
inline bool serve(SessionStore& store) {
  httplib::Server server;
  install_routes(server, store);
  return server.listen(store.options().host, store.options().port);
}


}  // namespace pointprop
