#pragma once

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "layoutforge/core.hpp"
#include "layoutforge/model.hpp"

namespace layoutforge {

enum class JobKind { generate, retarget, evaluate };
enum class JobStatus { queued, running, done, failed };

std::string_view to_string(JobKind kind);
std::string_view to_string(JobStatus status);
JobKind job_kind_from_string(std::string_view text);
JobStatus job_status_from_string(std::string_view text);

struct Job {
  std::string id;
  JobKind kind = JobKind::generate;
  nlohmann::json request;
  JobStatus status = JobStatus::queued;
  std::string result;  // result directory relative to the store root
  std::string error;
  std::string idempotency_key;
};

nlohmann::json job_to_json(const Job& job);

/// Durable job records: an append-only JSON-lines log replayed on open,
/// plus one result directory per job.
class JobStore {
 public:
  explicit JobStore(std::filesystem::path root);

  /// Returns the existing job for a repeated idempotency key, else a new queued job.
  std::pair<Job, bool> create(JobKind kind, const nlohmann::json& request, const std::string& idempotency_key = "");
  /// Records a status change; statuses only move forward.
  Job transition(const std::string& id, JobStatus status, const std::string& result = "",
                 const std::string& error = "");
  std::optional<Job> get(const std::string& id) const;
  /// Jobs left queued or running, in creation order.
  std::vector<Job> unfinished() const;
  std::vector<Job> all() const;

  void write_result(const std::string& id, const std::string& name, const std::string& content);
  std::optional<std::string> read_result(const std::string& id, const std::string& name) const;
  const std::filesystem::path& root() const { return root_; }

 private:
  void append(const nlohmann::json& event);
  void apply(const nlohmann::json& event);

  std::filesystem::path root_;
  mutable std::mutex mutex_;
  std::map<std::string, Job> jobs_;
  std::vector<std::string> order_;
  std::map<std::string, std::string> keys_;
  std::uint64_t next_id_ = 1;
};

struct ServiceConfig {
  /// Storage root; defaults to $LAYOUTFORGE_HOME or ./layoutforge-data.
  std::filesystem::path home;
  std::map<AspectClass, std::filesystem::path> checkpoints;
  std::optional<std::filesystem::path> adjust_checkpoint;
  int workers = 1;

  static std::filesystem::path default_home();
};

struct HttpResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Routes one request; used by the HTTP server and directly by tests.
  HttpResponse handle(const std::string& method, const std::string& path, const std::string& body,
                      const std::string& idempotency_key = "");

  /// Blocks until no job is queued or running.
  void wait_idle();
  JobStore& store() { return *store_; }

  /// Serves HTTP until stop() is called.
  void listen(const std::string& host, int port);
  void stop();

 private:
  HttpResponse submit(JobKind kind, const std::string& body, const std::string& idempotency_key);
  void enqueue(const std::string& id);
  void worker_loop();
  void run_job(const Job& job);
  std::shared_ptr<const ModelCheckpoint> checkpoint_for(AspectClass aspect);
  std::shared_ptr<const ModelCheckpoint> adjust_checkpoint();

  ServiceConfig config_;
  std::unique_ptr<JobStore> store_;

  std::mutex queue_mutex_;
  std::condition_variable queue_cv_;
  std::condition_variable idle_cv_;
  std::deque<std::string> queue_;
  int active_ = 0;
  bool stopping_ = false;
  std::vector<std::thread> workers_;

  std::mutex model_mutex_;
  std::map<AspectClass, std::shared_ptr<const ModelCheckpoint>> models_;
  std::shared_ptr<const ModelCheckpoint> adjust_;

  std::mutex server_mutex_;
  void* server_ = nullptr;  // httplib::Server while listening
};

}  // namespace layoutforge
