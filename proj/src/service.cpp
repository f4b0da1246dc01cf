#include "layoutforge/service.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>

#include <httplib.h>

#include "layoutforge/data.hpp"
#include "layoutforge/metrics.hpp"
#include "layoutforge/pipeline.hpp"
#include "layoutforge/render.hpp"

namespace layoutforge {

std::string_view to_string(JobKind kind) {
  switch (kind) {
    case JobKind::generate: return "generate";
    case JobKind::retarget: return "retarget";
    case JobKind::evaluate: return "evaluate";
  }
  return "generate";
}

std::string_view to_string(JobStatus status) {
  switch (status) {
    case JobStatus::queued: return "queued";
    case JobStatus::running: return "running";
    case JobStatus::done: return "done";
    case JobStatus::failed: return "failed";
  }
  return "queued";
}

JobKind job_kind_from_string(std::string_view text) {
  if (text == "generate") return JobKind::generate;
  if (text == "retarget") return JobKind::retarget;
  if (text == "evaluate") return JobKind::evaluate;
  throw ValidationError("unknown job kind '" + std::string(text) + "'");
}

JobStatus job_status_from_string(std::string_view text) {
  if (text == "queued") return JobStatus::queued;
  if (text == "running") return JobStatus::running;
  if (text == "done") return JobStatus::done;
  if (text == "failed") return JobStatus::failed;
  throw ValidationError("unknown job status '" + std::string(text) + "'");
}

nlohmann::json job_to_json(const Job& job) {
  nlohmann::json j{{"id", job.id},
                   {"kind", std::string(to_string(job.kind))},
                   {"status", std::string(to_string(job.status))},
                   {"request", job.request}};
  if (!job.error.empty()) j["error"] = job.error;
  if (job.status == JobStatus::done) j["result"] = {{"layouts", "/api/results/" + job.id + "/layouts"}};
  if (job.request.is_object() && job.request.contains("seed")) j["seed"] = job.request["seed"];
  return j;
}

// ---------------------------------------------------------------------------
// JobStore

namespace {

int rank(JobStatus s) { return static_cast<int>(s); }

bool safe_name(const std::string& name) {
  if (name.empty() || name.size() > 128) return false;
  for (char c : name) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) return false;
  }
  return name.find("..") == std::string::npos;
}

}  // namespace

JobStore::JobStore(std::filesystem::path root) : root_(std::move(root)) {
  std::filesystem::create_directories(root_ / "results");
  std::ifstream in(root_ / "jobs.jsonl");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      apply(nlohmann::json::parse(line));
    } catch (const std::exception&) {
      // A torn final line from an interrupted write; later lines cannot exist.
    }
  }
}

void JobStore::append(const nlohmann::json& event) {
  std::ofstream out(root_ / "jobs.jsonl", std::ios::app);
  out << event.dump() << '\n';
  out.flush();
  if (!out) throw std::runtime_error("cannot append to job log in " + root_.string());
}

void JobStore::apply(const nlohmann::json& event) {
  const auto type = event.at("event").get<std::string>();
  const auto id = event.at("id").get<std::string>();
  if (type == "create") {
    Job job;
    job.id = id;
    job.kind = job_kind_from_string(event.at("kind").get<std::string>());
    job.request = event.value("request", nlohmann::json::object());
    job.idempotency_key = event.value("key", "");
    if (!jobs_.count(id)) order_.push_back(id);
    jobs_[id] = job;
    if (!job.idempotency_key.empty()) keys_[job.idempotency_key] = id;
    unsigned long long n = 0;
    if (std::sscanf(id.c_str(), "job-%llu", &n) == 1) next_id_ = std::max<std::uint64_t>(next_id_, n + 1);
  } else if (type == "status") {
    auto it = jobs_.find(id);
    if (it == jobs_.end()) return;
    it->second.status = job_status_from_string(event.at("status").get<std::string>());
    it->second.result = event.value("result", "");
    it->second.error = event.value("error", "");
  }
}

std::pair<Job, bool> JobStore::create(JobKind kind, const nlohmann::json& request, const std::string& key) {
  std::lock_guard lock(mutex_);
  if (!key.empty()) {
    auto it = keys_.find(key);
    if (it != keys_.end()) return {jobs_.at(it->second), false};
  }
  char id[32];
  std::snprintf(id, sizeof id, "job-%06llu", static_cast<unsigned long long>(next_id_));
  nlohmann::json event{{"event", "create"}, {"id", id}, {"kind", std::string(to_string(kind))}, {"request", request}};
  if (!key.empty()) event["key"] = key;
  append(event);
  apply(event);
  return {jobs_.at(id), true};
}

Job JobStore::transition(const std::string& id, JobStatus status, const std::string& result,
                         const std::string& error) {
  std::lock_guard lock(mutex_);
  auto it = jobs_.find(id);
  if (it == jobs_.end()) throw ValidationError("unknown job " + id);
  const auto current = it->second.status;
  if (rank(status) < rank(current) || current == JobStatus::done || current == JobStatus::failed)
    throw ValidationError("job " + id + " cannot move from " + std::string(to_string(current)) + " to " +
                          std::string(to_string(status)));
  if (status == JobStatus::done && result.empty()) throw ValidationError("done jobs need a result");
  if (status == JobStatus::failed && error.empty()) throw ValidationError("failed jobs need a message");
  nlohmann::json event{{"event", "status"}, {"id", id}, {"status", std::string(to_string(status))}};
  if (!result.empty()) event["result"] = result;
  if (!error.empty()) event["error"] = error;
  append(event);
  apply(event);
  return it->second;
}

std::optional<Job> JobStore::get(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = jobs_.find(id);
  if (it == jobs_.end()) return std::nullopt;
  return it->second;
}

std::vector<Job> JobStore::unfinished() const {
  std::lock_guard lock(mutex_);
  std::vector<Job> out;
  for (const auto& id : order_) {
    const auto& job = jobs_.at(id);
    if (job.status == JobStatus::queued || job.status == JobStatus::running) out.push_back(job);
  }
  return out;
}

std::vector<Job> JobStore::all() const {
  std::lock_guard lock(mutex_);
  std::vector<Job> out;
  for (const auto& id : order_) out.push_back(jobs_.at(id));
  return out;
}

void JobStore::write_result(const std::string& id, const std::string& name, const std::string& content) {
  if (!safe_name(id) || !safe_name(name)) throw ValidationError("invalid result name");
  const auto dir = root_ / "results" / id;
  std::filesystem::create_directories(dir);
  const auto tmp = dir / (name + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << content;
    if (!out) throw std::runtime_error("cannot write result " + tmp.string());
  }
  std::filesystem::rename(tmp, dir / name);
}

std::optional<std::string> JobStore::read_result(const std::string& id, const std::string& name) const {
  if (!safe_name(id) || !safe_name(name)) return std::nullopt;
  std::ifstream in(root_ / "results" / id / name, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// ---------------------------------------------------------------------------
// Service

std::filesystem::path ServiceConfig::default_home() {
  if (const char* env = std::getenv("LAYOUTFORGE_HOME"); env && *env) return env;
  return "layoutforge-data";
}

Service::Service(ServiceConfig config) : config_(std::move(config)) {
  if (config_.home.empty()) config_.home = ServiceConfig::default_home();
  if (config_.workers < 1) throw ValidationError("service needs at least one worker");
  store_ = std::make_unique<JobStore>(config_.home);
  for (const auto& job : store_->unfinished()) queue_.push_back(job.id);
  for (int i = 0; i < config_.workers; ++i) workers_.emplace_back([this] { worker_loop(); });
}

Service::~Service() {
  stop();
  {
    std::lock_guard lock(queue_mutex_);
    stopping_ = true;
  }
  queue_cv_.notify_all();
  for (auto& t : workers_) t.join();
}

namespace {

HttpResponse json_response(int status, const nlohmann::json& body) {
  return {status, "application/json", body.dump()};
}

HttpResponse error_response(int status, const std::string& message, const std::string& path = "") {
  nlohmann::json body{{"error", message}};
  if (!path.empty()) body["path"] = path;
  return json_response(status, body);
}

}  // namespace

HttpResponse Service::submit(JobKind kind, const std::string& body, const std::string& idempotency_key) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    return error_response(400, std::string("malformed JSON: ") + e.what());
  }
  std::string key = idempotency_key;
  if (key.empty() && doc.is_object() && doc.contains("idempotency_key") && doc["idempotency_key"].is_string())
    key = doc["idempotency_key"].get<std::string>();

  nlohmann::json request;
  std::string missing_model;
  try {
    if (kind == JobKind::generate) {
      auto parsed = design_request_from_json(doc);
      request = design_request_to_json(parsed);
      if (!config_.checkpoints.count(parsed.canvas.aspect_class))
        missing_model = "no checkpoint loaded for " + std::string(to_string(parsed.canvas.aspect_class)) + " canvases";
    } else if (kind == JobKind::retarget) {
      if (!doc.is_object()) throw ParseError("", "request must be an object");
      if (!doc.contains("layout")) throw ParseError("/layout", "missing required field 'layout'");
      if (!doc.contains("target_canvas")) throw ParseError("/target_canvas", "missing required field 'target_canvas'");
      auto layout = layout_from_json(doc["layout"]);
      auto target = canvas_from_json(doc["target_canvas"], "/target_canvas");
      std::uint64_t seed = 0;
      if (doc.contains("seed")) {
        if (!doc["seed"].is_number_unsigned()) throw ParseError("/seed", "expected a non-negative integer");
        seed = doc["seed"].get<std::uint64_t>();
      }
      request = {{"layout", layout_to_json(layout)}, {"target_canvas", canvas_to_json(target)}, {"seed", seed}};
      if (!config_.adjust_checkpoint) missing_model = "no adjustment checkpoint loaded";
    } else {
      if (!doc.is_object() || !doc.contains("layouts") || !doc["layouts"].is_array())
        throw ParseError("/layouts", "expected an array of layouts");
      auto layouts = nlohmann::json::array();
      for (size_t i = 0; i < doc["layouts"].size(); ++i) layouts.push_back(layout_to_json(layout_from_json(doc["layouts"][i])));
      request = {{"layouts", layouts}};
    }
  } catch (const ParseError& e) {
    return error_response(400, e.message(), e.path());
  } catch (const ValidationError& e) {
    return error_response(400, e.what());
  }

  auto [job, created] = store_->create(kind, request, key);
  if (created) {
    if (!missing_model.empty()) {
      job = store_->transition(job.id, JobStatus::failed, "", missing_model);
    } else {
      enqueue(job.id);
    }
  }
  return json_response(created ? 202 : 200, job_to_json(job));
}

void Service::enqueue(const std::string& id) {
  {
    std::lock_guard lock(queue_mutex_);
    queue_.push_back(id);
  }
  queue_cv_.notify_one();
}

void Service::wait_idle() {
  std::unique_lock lock(queue_mutex_);
  idle_cv_.wait(lock, [this] { return queue_.empty() && active_ == 0; });
}

void Service::worker_loop() {
  for (;;) {
    std::string id;
    {
      std::unique_lock lock(queue_mutex_);
      queue_cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) return;
      id = queue_.front();
      queue_.pop_front();
      ++active_;
    }
    if (auto job = store_->get(id)) {
      try {
        run_job(*job);
      } catch (const std::exception& e) {
        try {
          store_->transition(id, JobStatus::failed, "", e.what());
        } catch (const std::exception&) {
        }
      }
    }
    {
      std::lock_guard lock(queue_mutex_);
      --active_;
    }
    idle_cv_.notify_all();
  }
}

std::shared_ptr<const ModelCheckpoint> Service::checkpoint_for(AspectClass aspect) {
  std::lock_guard lock(model_mutex_);
  if (auto it = models_.find(aspect); it != models_.end()) return it->second;
  auto path = config_.checkpoints.find(aspect);
  if (path == config_.checkpoints.end())
    throw ValidationError("no checkpoint loaded for " + std::string(to_string(aspect)) + " canvases");
  auto model = std::make_shared<const ModelCheckpoint>(ModelCheckpoint::load(path->second));
  models_[aspect] = model;
  return model;
}

std::shared_ptr<const ModelCheckpoint> Service::adjust_checkpoint() {
  std::lock_guard lock(model_mutex_);
  if (!adjust_) {
    if (!config_.adjust_checkpoint) throw ValidationError("no adjustment checkpoint loaded");
    adjust_ = std::make_shared<const ModelCheckpoint>(ModelCheckpoint::load(*config_.adjust_checkpoint));
  }
  return adjust_;
}

void Service::run_job(const Job& job) {
  if (job.status == JobStatus::queued) store_->transition(job.id, JobStatus::running);
  const std::string result = "results/" + job.id;
  try {
    switch (job.kind) {
      case JobKind::generate: {
        auto request = design_request_from_json(job.request);
        auto model = checkpoint_for(request.canvas.aspect_class);
        std::lock_guard lock(model_mutex_);  // modules are not reentrant during forward
        auto set = run_design_pipeline(request, *model);
        for (size_t i = 0; i < set.candidates.size(); ++i)
          store_->write_result(job.id, std::to_string(i) + ".svg", export_svg(set.candidates[i].layout));
        store_->write_result(job.id, "layouts.json", candidate_set_to_json(set).dump());
        break;
      }
      case JobKind::retarget: {
        auto source = layout_from_json(job.request.at("layout"));
        auto target = canvas_from_json(job.request.at("target_canvas"));
        const auto seed = job.request.value("seed", std::uint64_t{0});
        auto model = adjust_checkpoint();
        std::lock_guard lock(model_mutex_);
        auto out = retarget_layout(source, target, *model, seed);
        StyleConfig style;
        style.show_orders = true;
        store_->write_result(job.id, "0.svg", export_svg(out, style));
        nlohmann::json doc{{"layout", layout_to_json(out)},
                           {"source_orders", assign_reading_orders(source)},
                           {"order_retention", order_retention(out)},
                           {"seed", seed}};
        store_->write_result(job.id, "layouts.json", doc.dump());
        break;
      }
      case JobKind::evaluate: {
        std::vector<Layout> layouts;
        for (const auto& l : job.request.at("layouts")) layouts.push_back(layout_from_json(l));
        MetricOptions options;
        options.area = false;
        options.orders = !layouts.empty() && std::all_of(layouts.begin(), layouts.end(), [](const Layout& l) {
          return std::all_of(l.elements.begin(), l.elements.end(), [](const Element& e) { return e.order.has_value(); });
        });
        store_->write_result(job.id, "layouts.json", to_json(evaluate_layouts(layouts, options)).dump());
        break;
      }
    }
  } catch (const std::exception& e) {
    store_->transition(job.id, JobStatus::failed, "", e.what());
    return;
  }
  store_->transition(job.id, JobStatus::done, result);
}

HttpResponse Service::handle(const std::string& method, const std::string& path, const std::string& body,
                             const std::string& idempotency_key) {
  static const std::regex job_re("^/api/jobs/([A-Za-z0-9_.-]+)$");
  static const std::regex layouts_re("^/api/results/([A-Za-z0-9_.-]+)/layouts$");
  static const std::regex svg_re("^/api/results/([A-Za-z0-9_.-]+)/svg/([0-9]+)$");
  std::smatch m;
  if (method == "POST") {
    if (path == "/api/generate") return submit(JobKind::generate, body, idempotency_key);
    if (path == "/api/retarget") return submit(JobKind::retarget, body, idempotency_key);
    if (path == "/api/evaluate") return submit(JobKind::evaluate, body, idempotency_key);
    return error_response(404, "no such endpoint");
  }
  if (method != "GET") return error_response(405, "method not allowed");
  if (path == "/api/health") {
    nlohmann::json models = nlohmann::json::object();
    for (const auto& [aspect, p] : config_.checkpoints) models[std::string(to_string(aspect))] = p.string();
    return json_response(200, {{"status", "ok"},
                               {"checkpoints", models},
                               {"adjustment_checkpoint", config_.adjust_checkpoint ? config_.adjust_checkpoint->string() : ""}});
  }
  if (std::regex_match(path, m, job_re)) {
    auto job = store_->get(m[1]);
    if (!job) return error_response(404, "unknown job " + m[1].str());
    return json_response(200, job_to_json(*job));
  }
  auto done_job = [&](const std::string& id, HttpResponse& err) -> bool {
    auto job = store_->get(id);
    if (!job) {
      err = error_response(404, "unknown job " + id);
      return false;
    }
    if (job->status != JobStatus::done) {
      err = error_response(409, "job " + id + " is " + std::string(to_string(job->status)));
      return false;
    }
    return true;
  };
  if (std::regex_match(path, m, layouts_re)) {
    HttpResponse err;
    if (!done_job(m[1], err)) return err;
    auto content = store_->read_result(m[1], "layouts.json");
    if (!content) return error_response(404, "result missing");
    return {200, "application/json", *content};
  }
  if (std::regex_match(path, m, svg_re)) {
    HttpResponse err;
    if (!done_job(m[1], err)) return err;
    auto content = store_->read_result(m[1], m[2].str() + ".svg");
    if (!content) return error_response(404, "no rendering " + m[2].str() + " for job " + m[1].str());
    return {200, "image/svg+xml", *content};
  }
  return error_response(404, "no such endpoint");
}

void Service::listen(const std::string& host, int port) {
  httplib::Server server;
  auto forward = [this](const httplib::Request& req, httplib::Response& res) {
    auto r = handle(req.method, req.path, req.body, req.get_header_value("Idempotency-Key"));
    res.status = r.status;
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_content(r.body, r.content_type);
  };
  server.Get(".*", forward);
  server.Post(".*", forward);
  server.Options(".*", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type, Idempotency-Key");
    res.status = 204;
  });
  {
    std::lock_guard lock(server_mutex_);
    server_ = &server;
  }
  const bool ok = server.listen(host, port);
  {
    std::lock_guard lock(server_mutex_);
    server_ = nullptr;
  }
  if (!ok) throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
}

void Service::stop() {
  std::lock_guard lock(server_mutex_);
  if (server_) static_cast<httplib::Server*>(server_)->stop();
}

}  // namespace layoutforge
