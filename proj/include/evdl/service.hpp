#pragma once

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "evdl/classifier.hpp"
#include "evdl/dataset.hpp"
#include "evdl/decision.hpp"

namespace httplib {
class Server;
}

namespace evdl {

enum class DelegationStatus { Pending, Labeled };

struct DelegationItem {
  std::string item_id;
  std::vector<double> features;
  double p_bar = 0.5;
  double uncertainty_u = 1.0;
  std::string created_at;  // ISO-8601 UTC
  std::uint64_t sequence = 0;
  DelegationStatus status = DelegationStatus::Pending;
  std::optional<Label> user_label;
};

struct ServiceConfig {
  /// Holds model.evdl, persona.json, queue.json and personal.jsonl.
  std::filesystem::path state_dir;
  /// Items scored by /metrics and /sweeps, and addressable by id in /predict.
  std::optional<Dataset> evaluation_set;
  TrainConfig finetune_defaults;
  std::vector<double> sweep_thetas = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  std::string annotator_id = "user";
};

/// Status code plus canonical JSON body.
struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

/// The assistant backend. Every public method is safe to call concurrently.
class AssistantService {
 public:
  /// Restores persisted state from cfg.state_dir. `initial_model` replaces
  /// any persisted model when given.
  AssistantService(ServiceConfig cfg, std::optional<ModelCheckpoint> initial_model = std::nullopt);
  ~AssistantService();

  AssistantService(const AssistantService&) = delete;
  AssistantService& operator=(const AssistantService&) = delete;

  ApiResponse predict(const nlohmann::json& request);
  ApiResponse list_delegations() const;
  ApiResponse submit_label(const std::string& item_id, const nlohmann::json& request);
  ApiResponse get_persona() const;
  ApiResponse set_persona(const nlohmann::json& request);
  ApiResponse start_finetune(const nlohmann::json& request);
  ApiResponse finetune_status() const;
  ApiResponse metrics() const;
  ApiResponse sweeps(const std::string& channel) const;

  /// Blocks until no fine-tune job is running.
  void wait_for_finetune();

  /// Registers the HTTP routes on `server`.
  void bind_routes(httplib::Server& server);

  std::shared_ptr<const ModelCheckpoint> active_model() const;
  std::size_t personal_dataset_size() const;

 private:
  enum class JobState { Idle, Running, Succeeded, Failed };

  void load_state(std::optional<ModelCheckpoint> initial_model);
  void persist_queue() const;
  void persist_persona() const;
  void run_finetune(std::uint64_t job_id, ModelCheckpoint base, Dataset personal, TrainConfig tc);
  std::vector<Prediction> evaluation_predictions(const ModelCheckpoint& model,
                                                 const PersonaConfig& persona) const;

  ServiceConfig cfg_;

  mutable std::mutex model_mutex_;
  std::shared_ptr<const ModelCheckpoint> model_;

  mutable std::shared_mutex state_mutex_;
  PersonaConfig persona_;
  std::map<std::string, DelegationItem> queue_;
  Dataset personal_;
  std::uint64_t next_sequence_ = 0;
  std::uint64_t next_anonymous_id_ = 0;
  std::map<std::string, std::size_t> evaluation_index_;

  mutable std::mutex job_mutex_;
  JobState job_state_ = JobState::Idle;
  std::uint64_t job_id_ = 0;
  std::string job_error_;
  std::condition_variable job_cv_;
  std::thread job_thread_;
};

/// Error body {code, message, field_path?}.
ApiResponse api_error(int status, const std::string& code, const std::string& message,
                      const std::string& field_path = {});

nlohmann::json metrics_to_json(const MetricsReport& m);
nlohmann::json sweep_rows_to_json(const std::vector<SweepRow>& rows);

}  // namespace evdl
