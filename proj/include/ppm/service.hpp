#pragma once

// HTTP session service over the pipeline stages. Sessions live on disk as
// directories: uploaded files are stored under content-addressed names and
// a manifest.json records artifacts and stage states.

#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>

#include "ppm/io.hpp"
#include "ppm/pipeline.hpp"

// Must follow Eigen: httplib brings in the `_res` macro from <resolv.h>.
#include <httplib.h>

namespace ppm::service {

namespace fs = std::filesystem;
using io::json;

inline constexpr std::array<std::string_view, 4> kImageRoles{"s_o", "s_poi", "h_o", "h_a"};

inline std::string fnv1a_hex(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::span<const std::uint8_t> as_bytes(const std::string& s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

struct StageState {
  std::string state = "pending";  // pending | running | done | failed
  std::string reason;
};

struct Session {
  std::string id;
  fs::path dir;
  PipelineConfig config;
  std::optional<double> poi_radius;       // from PUT /pois
  std::map<std::string, std::string> files;  // artifact key -> path relative to dir
  std::map<std::string, StageState> stages{{"register", {}}, {"labels", {}}};
  int generation = 0;

  std::mutex writer;              // serializes mutating requests
  mutable std::mutex state_lock;  // guards everything above

  [[nodiscard]] bool has(const std::string& key) const { return files.count(key) != 0; }
  [[nodiscard]] fs::path path_of(const std::string& key) const { return dir / files.at(key); }
  [[nodiscard]] bool done(const std::string& stage) const { return stages.at(stage).state == "done"; }

  [[nodiscard]] json manifest() const {
    json st = json::object();
    for (const auto& [name, s] : stages) {
      st[name] = {{"state", s.state}};
      if (!s.reason.empty()) st[name]["reason"] = s.reason;
    }
    json j = {{"schema_version", io::kSchemaVersion}, {"id", id},     {"config", to_json(config, dir)},
              {"files", files},                       {"stages", st}, {"generation", generation}};
    if (poi_radius) j["poi_radius"] = *poi_radius;
    return j;
  }

  void save() const { io::write_json(dir / "manifest.json", manifest()); }

  void load() {
    const json j = io::read_json(dir / "manifest.json");
    config = pipeline_config_from_json(j.at("config"), dir);
    files = j.at("files").get<std::map<std::string, std::string>>();
    for (const auto& [name, s] : j.at("stages").items()) {
      stages[name] = {s.at("state").get<std::string>(), s.value("reason", std::string())};
      // A stage interrupted by a restart did not finish.
      if (stages[name].state == "running") stages[name] = {"failed", "interrupted"};
    }
    generation = j.value("generation", 0);
    if (j.contains("poi_radius")) poi_radius = j.at("poi_radius").get<double>();
  }

  void invalidate(std::initializer_list<const char*> names) {
    for (const char* n : names) stages[n] = {};
  }
};

class Service {
 public:
  explicit Service(fs::path data_dir) : root_(std::move(data_dir)), rng_(std::random_device{}()) {
    fs::create_directories(root_ / "sessions");
  }

  void attach(httplib::Server& svr) {
    svr.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                             {"Access-Control-Allow-Methods", "GET, POST, PUT, OPTIONS"},
                             {"Access-Control-Allow-Headers", "Content-Type"}});
    svr.set_payload_max_length(64u << 20);
    svr.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    svr.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) { create(req, res); });
    svr.Put(R"(/sessions/([0-9a-f]+)/images/([a-z_]+))",
            [this](const httplib::Request& req, httplib::Response& res) { put_image(req, res); });
    svr.Get(R"(/sessions/([0-9a-f]+)/images/([a-z_]+))",
            [this](const httplib::Request& req, httplib::Response& res) { get_image(req, res); });
    svr.Put(R"(/sessions/([0-9a-f]+)/pois)",
            [this](const httplib::Request& req, httplib::Response& res) { put_pois(req, res); });
    svr.Post(R"(/sessions/([0-9a-f]+)/register)",
             [this](const httplib::Request& req, httplib::Response& res) { do_register(req, res); });
    svr.Post(R"(/sessions/([0-9a-f]+)/labels)",
             [this](const httplib::Request& req, httplib::Response& res) { do_labels(req, res); });
    svr.Get(R"(/sessions/([0-9a-f]+)/overlay)",
            [this](const httplib::Request& req, httplib::Response& res) { overlay(req, res); });
    svr.Get(R"(/sessions/([0-9a-f]+)/report)",
            [this](const httplib::Request& req, httplib::Response& res) { report(req, res); });
    svr.Get(R"(/sessions/([0-9a-f]+)/status)",
            [this](const httplib::Request& req, httplib::Response& res) { status(req, res); });
  }

  // Snapshot-free lookup; sessions written by an earlier process load lazily.
  std::shared_ptr<Session> find(const std::string& id) {
    std::lock_guard lock(sessions_lock_);
    if (auto it = sessions_.find(id); it != sessions_.end()) return it->second;
    const fs::path dir = root_ / "sessions" / id;
    if (!fs::exists(dir / "manifest.json")) return nullptr;
    auto s = std::make_shared<Session>();
    s->id = id;
    s->dir = dir;
    try {
      s->load();
    } catch (const std::exception&) {
      return nullptr;
    }
    sessions_[id] = s;
    return s;
  }

 private:
  static void send_json(httplib::Response& res, int code, const json& j) {
    res.status = code;
    res.set_content(io::dump(j), "application/json");
  }

  static void send_error(httplib::Response& res, int code, const std::string& msg) {
    send_json(res, code, {{"error", msg}});
  }

  static void send_missing(httplib::Response& res, const std::string& what) {
    send_json(res, 409, {{"missing", what}});
  }

  std::shared_ptr<Session> session_or_404(const httplib::Request& req, httplib::Response& res) {
    auto s = find(req.matches[1]);
    if (!s) send_error(res, 404, "unknown session " + std::string(req.matches[1]));
    return s;
  }

  void create(const httplib::Request& req, httplib::Response& res) {
    json body = json::object();
    if (!req.body.empty()) {
      try {
        body = json::parse(req.body);
      } catch (const json::parse_error&) {
        return send_error(res, 422, "session settings must be JSON");
      }
    }
    auto s = std::make_shared<Session>();
    {
      std::lock_guard lock(sessions_lock_);
      do {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng_()));
        s->id = buf;
      } while (sessions_.count(s->id) != 0 || fs::exists(root_ / "sessions" / s->id));
    }
    s->dir = root_ / "sessions" / s->id;
    try {
      s->config = pipeline_config_from_json(body, s->dir);
    } catch (const io::FormatError& e) {
      return send_error(res, 422, e.what());
    }
    s->config.output_dir = s->dir;
    s->save();
    {
      std::lock_guard lock(sessions_lock_);
      sessions_[s->id] = s;
    }
    send_json(res, 201, {{"id", s->id}});
  }

  // Stores `bytes` under a content-addressed name and records it as `key`.
  static void store(Session& s, const std::string& key, const std::string& ext, const std::string& bytes) {
    const std::string name = "uploads/" + key + "-" + fnv1a_hex(as_bytes(bytes)) + ext;
    if (!fs::exists(s.dir / name)) io::write_text(s.dir / name, bytes);
    s.files[key] = name;
  }

  void put_image(const httplib::Request& req, httplib::Response& res) {
    auto s = session_or_404(req, res);
    if (!s) return;
    const std::string role = req.matches[2];
    if (std::find(kImageRoles.begin(), kImageRoles.end(), role) == kImageRoles.end()) {
      return send_error(res, 404, "unknown image role '" + role + "'");
    }
    std::lock_guard w(s->writer);
    Dims dims;
    try {
      if (role == "h_a") {
        dims = io::decode_annotation(as_bytes(req.body)).dims();
      } else {
        dims = io::decode_rgb(as_bytes(req.body)).dims();
      }
    } catch (const std::exception& e) {
      return send_error(res, 422, "malformed " + role + " upload: " + e.what());
    }
    std::lock_guard lock(s->state_lock);
    store(*s, role, ".png", req.body);
    if (role == "s_o" || role == "h_o") s->invalidate({"register", "labels"});
    if (role == "s_poi" || role == "h_a") s->invalidate({"labels"});
    if (role == "s_poi") {
      s->files.erase("pois");
      s->poi_radius.reset();
    }
    s->save();
    send_json(res, 200, {{"role", role}, {"width", dims.width}, {"height", dims.height}});
  }

  void get_image(const httplib::Request& req, httplib::Response& res) {
    auto s = session_or_404(req, res);
    if (!s) return;
    const std::string role = req.matches[2];
    fs::path path;
    {
      std::lock_guard lock(s->state_lock);
      if (!s->has(role) || role == "pois") return send_error(res, 404, "no image '" + role + "'");
      path = s->path_of(role);
    }
    const std::string bytes = io::read_text(path);
    res.set_content(bytes, "image/png");
  }

  void put_pois(const httplib::Request& req, httplib::Response& res) {
    auto s = session_or_404(req, res);
    if (!s) return;
    std::lock_guard w(s->writer);
    io::PoiList pois;
    try {
      pois = io::pois_from_json(json::parse(req.body));
      const Dims d = s->config.registration.working_dims;
      for (const auto& p : pois.points) {
        if (!(p.center.x >= 0 && p.center.y >= 0 && p.center.x <= d.width - 1 && p.center.y <= d.height - 1)) {
          throw io::FormatError("POI " + std::to_string(p.id) + " lies outside the " + to_string(d) +
                                " working image");
        }
      }
      if (pois.points.empty()) throw io::FormatError("field 'pois.centers' must not be empty");
    } catch (const std::exception& e) {
      return send_error(res, 422, std::string("malformed POI list: ") + e.what());
    }
    const double radius = pois.radius.value_or(s->config.poi_radius_px);
    std::lock_guard lock(s->state_lock);
    store(*s, "pois", ".json", io::dump(io::pois_to_json(pois.points, radius)));
    s->poi_radius = pois.radius;
    s->files.erase("s_poi");
    s->invalidate({"labels"});
    s->save();
    send_json(res, 200, {{"count", pois.points.size()}, {"radius", radius}});
  }

  static std::string stage_dir(Session& s, const std::string& stage) {
    return stage + "-" + std::to_string(++s.generation);
  }

  void do_register(const httplib::Request& req, httplib::Response& res) {
    auto s = session_or_404(req, res);
    if (!s) return;
    std::lock_guard w(s->writer);
    fs::path spec, hist, out;
    PipelineConfig cfg;
    {
      std::lock_guard lock(s->state_lock);
      for (const char* need : {"s_o", "h_o"}) {
        if (!s->has(need)) return send_missing(res, need);
      }
      spec = s->path_of("s_o");
      hist = s->path_of("h_o");
      cfg = s->config;
      const std::string rel = stage_dir(*s, "register");
      out = s->dir / rel;
      s->files["register"] = rel;
      s->stages["register"] = {"running", ""};
      s->invalidate({"labels"});
      s->save();
    }
    try {
      auto images = registration_images(io::load_rgb(spec), io::load_gray(hist), cfg.fixed_role,
                                        cfg.registration.working_dims);
      auto result = estimate_ddf(images.fixed, images.moving, cfg.registration);
      const json doc = registration_document(result, cfg.registration, cfg.fixed_role, true);
      write_registration_artifacts(out, images, result, doc);
      std::lock_guard lock(s->state_lock);
      s->stages["register"] = {"done", ""};
      s->save();
      send_json(res, 200, doc);
    } catch (const std::exception& e) {
      std::lock_guard lock(s->state_lock);
      s->stages["register"] = {"failed", e.what()};
      s->save();
      send_json(res, 422, {{"error", e.what()}, {"stage", "register"}});
    }
  }

  void do_labels(const httplib::Request& req, httplib::Response& res) {
    auto s = session_or_404(req, res);
    if (!s) return;
    std::lock_guard w(s->writer);
    fs::path reg_dir, annotation, pois_json, spec, spec_poi, out;
    PipelineConfig cfg;
    double radius = 0;
    {
      std::lock_guard lock(s->state_lock);
      if (!s->done("register")) return send_missing(res, "register");
      if (!s->has("pois") && !s->has("s_poi")) return send_missing(res, "pois");
      if (!s->has("h_a")) return send_missing(res, "h_a");
      reg_dir = s->path_of("register");
      annotation = s->path_of("h_a");
      if (s->has("pois")) {
        pois_json = s->path_of("pois");
      } else {
        spec = s->path_of("s_o");
        spec_poi = s->path_of("s_poi");
      }
      cfg = s->config;
      radius = s->poi_radius.value_or(cfg.poi_radius_px);
      const std::string rel = stage_dir(*s, "labels");
      out = s->dir / rel;
      s->files["labels"] = rel;
      s->stages["labels"] = {"running", ""};
      s->save();
    }
    try {
      const auto ddf = io::load_ddf(reg_dir / "ddf.json");
      const auto points = pois_json.empty()
                              ? working_pois(io::load_rgb(spec), io::load_rgb(spec_poi), ddf.dims(), cfg.poi_threshold)
                              : io::pois_from_json(io::read_json(pois_json)).points;
      const auto stage = extract_labels(ddf, points, io::decode_annotation(png::read_file(annotation)), radius,
                                        cfg.fixed_role);
      write_label_artifacts(out, stage, radius);
      std::lock_guard lock(s->state_lock);
      s->stages["labels"] = {"done", ""};
      s->save();
      res.status = 200;
      res.set_content(report_text(stage.report), "application/json");
    } catch (const std::exception& e) {
      std::lock_guard lock(s->state_lock);
      s->stages["labels"] = {"failed", e.what()};
      s->save();
      send_json(res, 422, {{"error", e.what()}, {"stage", "labels"}});
    }
  }

  void overlay(const httplib::Request& req, httplib::Response& res) {
    auto s = session_or_404(req, res);
    if (!s) return;
    double alpha = 0.5;
    if (req.has_param("alpha")) {
      try {
        std::size_t used = 0;
        const std::string a = req.get_param_value("alpha");
        alpha = std::stod(a, &used);
        if (used != a.size()) throw std::invalid_argument(a);
      } catch (const std::exception&) {
        return send_error(res, 400, "alpha must be a number in [0, 1]");
      }
      if (!(alpha >= 0.0 && alpha <= 1.0)) return send_error(res, 400, "alpha must be a number in [0, 1]");
    }
    const bool registered = req.get_param_value("registered") != "false";
    fs::path spec, hist, reg_dir;
    PipelineConfig cfg;
    {
      std::lock_guard lock(s->state_lock);
      for (const char* need : {"s_o", "h_o"}) {
        if (!s->has(need)) return send_missing(res, need);
      }
      if (registered && !s->done("register")) return send_missing(res, "register");
      spec = s->path_of("s_o");
      hist = s->path_of("h_o");
      if (registered) reg_dir = s->path_of("register");
      cfg = s->config;
    }
    try {
      const Dims d = cfg.registration.working_dims;
      RgbImage specimen = resize(io::load_rgb(spec), d);
      RgbImage histology = gray_to_rgb(resize(io::load_gray(hist), d));
      if (registered) {
        const auto ddf = io::load_ddf(reg_dir / "ddf.json");
        if (cfg.fixed_role == FixedRole::histology) {
          specimen = warp_image(specimen, ddf);
        } else {
          histology = warp_image(histology, ddf);
        }
      }
      RgbImage blend(d);
      for (std::size_t i = 0; i < blend.size(); ++i) {
        const Rgb& a = specimen.storage()[i];
        const Rgb& b = histology.storage()[i];
        blend.storage()[i] = {alpha * a.r + (1 - alpha) * b.r, alpha * a.g + (1 - alpha) * b.g,
                              alpha * a.b + (1 - alpha) * b.b};
      }
      const auto png = io::encode_rgb(blend);
      res.set_content(std::string(png.begin(), png.end()), "image/png");
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    }
  }

  void report(const httplib::Request& req, httplib::Response& res) {
    auto s = session_or_404(req, res);
    if (!s) return;
    fs::path path;
    {
      std::lock_guard lock(s->state_lock);
      if (!s->done("labels")) return send_missing(res, "labels");
      path = s->path_of("labels") / "labels.json";
    }
    res.set_content(io::read_text(path), "application/json");
  }

  void status(const httplib::Request& req, httplib::Response& res) {
    auto s = session_or_404(req, res);
    if (!s) return;
    std::lock_guard lock(s->state_lock);
    json images = json::object();
    for (auto role : kImageRoles) images[std::string(role)] = s->has(std::string(role));
    json stages = json::object();
    for (const auto& [name, st] : s->stages) {
      stages[name] = {{"state", st.state}};
      if (!st.reason.empty()) stages[name]["reason"] = st.reason;
    }
    send_json(res, 200,
              {{"id", s->id},
               {"images", images},
               {"pois", s->has("pois")},
               {"working_dims", {s->config.registration.working_dims.width, s->config.registration.working_dims.height}},
               {"stages", stages}});
  }

  fs::path root_;
  std::mutex sessions_lock_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::mt19937_64 rng_;
};

// Blocks serving on `port` until stopped.
inline bool serve(int port, const fs::path& data_dir, const fs::path& ui_dir, const std::string& host = "0.0.0.0") {
  httplib::Server svr;
  Service service(data_dir);
  service.attach(svr);
  if (!ui_dir.empty() && !svr.set_mount_point("/", ui_dir.string())) {
    throw IoError("UI directory not found: " + ui_dir.string());
  }
  return svr.listen(host, port);
}

}  // namespace ppm::service
