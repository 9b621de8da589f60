#include "evdl/service.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <regex>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "evdl/checkpoint.hpp"
#include "evdl/errors.hpp"

namespace evdl {

using nlohmann::json;

namespace {

constexpr const char* kModelFile = "model.evdl";
constexpr const char* kPersonaFile = "persona.json";
constexpr const char* kQueueFile = "queue.json";
constexpr const char* kPersonalFile = "personal.jsonl";
constexpr const char* kRiskPending = "pending until next training";
constexpr const char* kRiskActive = "matches active model";

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_atomically(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out << text;
    out.flush();
    if (!out) throw IoError("failed writing '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

json persona_to_json(const PersonaConfig& p) {
  return {{"persona_name", p.persona_name},
          {"theta", p.theta},
          {"risk_matrix", {{"r01", p.risk_matrix.r01()}, {"r10", p.risk_matrix.r10()}}}};
}

PersonaConfig persona_from_json(const json& j) {
  PersonaConfig p;
  p.persona_name = j.at("persona_name").get<std::string>();
  p.theta = j.at("theta").get<double>();
  p.risk_matrix = RiskMatrix(j.at("risk_matrix").at("r01").get<double>(),
                             j.at("risk_matrix").at("r10").get<double>());
  p.validate();
  return p;
}

std::string status_name(DelegationStatus s) { return s == DelegationStatus::Pending ? "pending" : "labeled"; }

json item_to_json(const DelegationItem& item, bool with_features) {
  json j = {{"item_id", item.item_id},
            {"p_bar", item.p_bar},
            {"uncertainty", item.uncertainty_u},
            {"created_at", item.created_at},
            {"sequence", item.sequence},
            {"status", status_name(item.status)},
            {"user_label", item.user_label ? json(to_int(*item.user_label)) : json(nullptr)}};
  if (with_features) j["features"] = item.features;
  return j;
}

DelegationItem item_from_json(const json& j) {
  DelegationItem item;
  item.item_id = j.at("item_id").get<std::string>();
  item.features = j.at("features").get<std::vector<double>>();
  item.p_bar = j.at("p_bar").get<double>();
  item.uncertainty_u = j.at("uncertainty").get<double>();
  item.created_at = j.at("created_at").get<std::string>();
  item.sequence = j.at("sequence").get<std::uint64_t>();
  item.status = j.at("status").get<std::string>() == "labeled" ? DelegationStatus::Labeled
                                                                : DelegationStatus::Pending;
  if (!j.at("user_label").is_null()) item.user_label = label_from_int(j.at("user_label").get<int>());
  return item;
}

std::optional<ApiResponse> read_number(const json& body, const char* field, double& out) {
  if (!body.contains(field)) return std::nullopt;
  if (!body[field].is_number()) return api_error(400, "validation", std::string(field) + " must be a number", field);
  out = body[field].get<double>();
  return std::nullopt;
}

}  // namespace

ApiResponse api_error(int status, const std::string& code, const std::string& message,
                      const std::string& field_path) {
  json body = {{"code", code}, {"message", message}};
  if (!field_path.empty()) body["field_path"] = field_path;
  return {status, std::move(body)};
}

json metrics_to_json(const MetricsReport& m) {
  auto cls = [](const ClassMetrics& c) {
    return json{{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}};
  };
  return {{"accuracy", m.accuracy},
          {"precision", m.precision},
          {"recall", m.recall},
          {"f1", m.f1},
          {"private", cls(m.private_class)},
          {"public", cls(m.public_class)},
          {"coverage", m.coverage},
          {"confusion",
           {{"true_private", m.confusion.true_private},
            {"false_private", m.confusion.false_private},
            {"false_public", m.confusion.false_public},
            {"true_public", m.confusion.true_public}}}};
}

json sweep_rows_to_json(const std::vector<SweepRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    json row = {{"theta_or_rate", r.value}, {"coverage", r.coverage}};
    const MetricsReport* m = r.metrics ? &*r.metrics : nullptr;
    auto v = [&](double MetricsReport::*field) { return m ? json(m->*field) : json(nullptr); };
    auto c = [&](ClassMetrics MetricsReport::*cls, double ClassMetrics::*field) {
      return m ? json((m->*cls).*field) : json(nullptr);
    };
    row["accuracy"] = v(&MetricsReport::accuracy);
    row["f1_overall"] = v(&MetricsReport::f1);
    row["precision_overall"] = v(&MetricsReport::precision);
    row["recall_overall"] = v(&MetricsReport::recall);
    row["f1_private"] = c(&MetricsReport::private_class, &ClassMetrics::f1);
    row["precision_private"] = c(&MetricsReport::private_class, &ClassMetrics::precision);
    row["recall_private"] = c(&MetricsReport::private_class, &ClassMetrics::recall);
    row["f1_public"] = c(&MetricsReport::public_class, &ClassMetrics::f1);
    row["precision_public"] = c(&MetricsReport::public_class, &ClassMetrics::precision);
    row["recall_public"] = c(&MetricsReport::public_class, &ClassMetrics::recall);
    out.push_back(std::move(row));
  }
  return out;
}

AssistantService::AssistantService(ServiceConfig cfg, std::optional<ModelCheckpoint> initial_model)
    : cfg_(std::move(cfg)) {
  if (cfg_.state_dir.empty()) throw DomainError("service state_dir must be set");
  std::filesystem::create_directories(cfg_.state_dir);
  if (cfg_.evaluation_set) {
    for (std::size_t i = 0; i < cfg_.evaluation_set->size(); ++i) {
      evaluation_index_[cfg_.evaluation_set->examples[i].id] = i;
    }
  }
  load_state(std::move(initial_model));
}

AssistantService::~AssistantService() {
  if (job_thread_.joinable()) job_thread_.join();
}

void AssistantService::load_state(std::optional<ModelCheckpoint> initial_model) {
  const auto dir = cfg_.state_dir;
  if (initial_model) {
    save_checkpoint(*initial_model, dir / kModelFile);
    model_ = std::make_shared<const ModelCheckpoint>(std::move(*initial_model));
  } else if (std::filesystem::exists(dir / kModelFile)) {
    model_ = std::make_shared<const ModelCheckpoint>(load_checkpoint(dir / kModelFile));
  }

  if (std::filesystem::exists(dir / kPersonaFile)) {
    std::ifstream in(dir / kPersonaFile);
    persona_ = persona_from_json(json::parse(in));
  } else if (model_) {
    persona_.risk_matrix = model_->risk_matrix;
  }

  if (std::filesystem::exists(dir / kQueueFile)) {
    std::ifstream in(dir / kQueueFile);
    for (const auto& j : json::parse(in)) {
      DelegationItem item = item_from_json(j);
      next_sequence_ = std::max(next_sequence_, item.sequence + 1);
      queue_[item.item_id] = std::move(item);
    }
  }

  personal_.schema_id = model_ ? model_->feature_schema_id : std::string{};
  personal_.feature_dim = model_ ? model_->spec().input_dim : 0;
  const auto personal_path = dir / kPersonalFile;
  if (std::filesystem::exists(personal_path) && std::filesystem::file_size(personal_path) > 0) {
    Dataset loaded = load_dataset(personal_path, personal_.schema_id);
    if (model_ && loaded.feature_dim != personal_.feature_dim) {
      throw FormatError("personal dataset does not match the active model's feature dimension");
    }
    personal_.examples = std::move(loaded.examples);
  }
}

void AssistantService::persist_queue() const {
  json arr = json::array();
  for (const auto& [id, item] : queue_) arr.push_back(item_to_json(item, true));
  write_atomically(cfg_.state_dir / kQueueFile, arr.dump());
}

void AssistantService::persist_persona() const {
  write_atomically(cfg_.state_dir / kPersonaFile, persona_to_json(persona_).dump());
}

std::shared_ptr<const ModelCheckpoint> AssistantService::active_model() const {
  std::lock_guard lock(model_mutex_);
  return model_;
}

std::size_t AssistantService::personal_dataset_size() const {
  std::shared_lock lock(state_mutex_);
  return personal_.size();
}

ApiResponse AssistantService::predict(const json& request) {
  const auto model = active_model();
  if (!model) return api_error(409, "no_model", "no model is loaded");
  if (!request.is_object()) return api_error(400, "validation", "request body must be an object");

  std::optional<std::string> item_id;
  if (request.contains("item_id")) {
    if (!request["item_id"].is_string() || request["item_id"].get<std::string>().empty()) {
      return api_error(400, "validation", "item_id must be a non-empty string", "item_id");
    }
    item_id = request["item_id"].get<std::string>();
  }

  std::vector<double> features;
  if (request.contains("features")) {
    const auto& f = request["features"];
    if (!f.is_array()) return api_error(400, "validation", "features must be an array", "features");
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (!f[i].is_number() || !std::isfinite(f[i].get<double>())) {
        return api_error(400, "validation", "features must be finite numbers",
                         "features[" + std::to_string(i) + "]");
      }
      features.push_back(f[i].get<double>());
    }
  } else if (item_id && evaluation_index_.contains(*item_id)) {
    features = cfg_.evaluation_set->examples[evaluation_index_.at(*item_id)].features;
  } else {
    std::shared_lock lock(state_mutex_);
    auto it = item_id ? queue_.find(*item_id) : queue_.end();
    if (it == queue_.end()) {
      return api_error(400, "validation", "features are required for an unknown item", "features");
    }
    features = it->second.features;
  }
  if (static_cast<int>(features.size()) != model->spec().input_dim) {
    return api_error(400, "validation",
                     "expected " + std::to_string(model->spec().input_dim) + " features, got " +
                         std::to_string(features.size()),
                     "features");
  }

  const EvidentialOutput out = forward(*model, features);

  std::unique_lock lock(state_mutex_);
  if (!item_id) item_id = "item-" + std::to_string(next_anonymous_id_++);
  const Prediction pred = make_prediction(*item_id, out.p_bar, out.uncertainty, persona_);
  bool enqueued = false;
  if (pred.action == Action::Delegate && !queue_.contains(*item_id)) {
    DelegationItem item;
    item.item_id = *item_id;
    item.features = features;
    item.p_bar = out.p_bar;
    item.uncertainty_u = out.uncertainty;
    item.created_at = utc_now();
    item.sequence = next_sequence_++;
    queue_[item.item_id] = std::move(item);
    persist_queue();
    enqueued = true;
  }
  return {200,
          {{"item_id", *item_id},
           {"predicted_label", to_int(pred.predicted_label)},
           {"p_bar", pred.p_bar},
           {"uncertainty", pred.uncertainty_u},
           {"entropy", pred.entropy},
           {"action", to_string(pred.action)},
           {"enqueued", enqueued},
           {"theta", persona_.theta}}};
}

ApiResponse AssistantService::list_delegations() const {
  std::shared_lock lock(state_mutex_);
  std::vector<const DelegationItem*> pending;
  for (const auto& [id, item] : queue_) {
    if (item.status == DelegationStatus::Pending) pending.push_back(&item);
  }
  std::sort(pending.begin(), pending.end(), [](const DelegationItem* a, const DelegationItem* b) {
    if (a->uncertainty_u != b->uncertainty_u) return a->uncertainty_u > b->uncertainty_u;
    return a->sequence < b->sequence;
  });
  json items = json::array();
  for (const auto* item : pending) items.push_back(item_to_json(*item, false));
  return {200, {{"items", std::move(items)}, {"pending_count", pending.size()},
                {"personal_dataset_size", personal_.size()}}};
}

ApiResponse AssistantService::submit_label(const std::string& item_id, const json& request) {
  if (!request.is_object() || !request.contains("label")) {
    return api_error(400, "validation", "label is required", "label");
  }
  const auto& l = request["label"];
  if (!l.is_number_integer() || (l.get<long long>() != 0 && l.get<long long>() != 1)) {
    return api_error(400, "validation", "label must be 0 or 1", "label");
  }
  const Label label = label_from_int(static_cast<int>(l.get<long long>()));

  std::unique_lock lock(state_mutex_);
  auto it = queue_.find(item_id);
  if (it == queue_.end()) return api_error(404, "not_found", "no delegation with id '" + item_id + "'");
  if (it->second.status == DelegationStatus::Labeled) {
    return api_error(409, "conflict", "item '" + item_id + "' is already labeled");
  }

  LabeledExample ex;
  ex.id = item_id;
  ex.features = it->second.features;
  ex.annotations = {{cfg_.annotator_id, label}};
  ex.resolved_label = label;
  // Durable before the in-memory state changes and before we answer.
  append_record(ex, cfg_.state_dir / kPersonalFile);
  personal_.examples.push_back(std::move(ex));
  it->second.status = DelegationStatus::Labeled;
  it->second.user_label = label;
  persist_queue();
  return {200, {{"item_id", item_id}, {"label", to_int(label)}, {"status", "labeled"},
                {"personal_dataset_size", personal_.size()}}};
}

ApiResponse AssistantService::get_persona() const {
  const auto model = active_model();
  std::shared_lock lock(state_mutex_);
  json body = persona_to_json(persona_);
  body["theta_status"] = "active now";
  body["risk_matrix_status"] =
      model && model->risk_matrix == persona_.risk_matrix ? kRiskActive : kRiskPending;
  return {200, std::move(body)};
}

ApiResponse AssistantService::set_persona(const json& request) {
  if (!request.is_object()) return api_error(400, "validation", "request body must be an object");
  PersonaConfig next;
  {
    std::shared_lock lock(state_mutex_);
    next = persona_;
  }
  if (auto err = read_number(request, "theta", next.theta)) return *err;
  if (!(next.theta >= 0.0 && next.theta <= 1.0)) {
    return api_error(400, "validation", "theta must lie in [0, 1]", "theta");
  }
  if (request.contains("persona_name")) {
    if (!request["persona_name"].is_string()) {
      return api_error(400, "validation", "persona_name must be a string", "persona_name");
    }
    next.persona_name = request["persona_name"].get<std::string>();
  }
  if (request.contains("risk_matrix")) {
    const auto& r = request["risk_matrix"];
    if (!r.is_object()) return api_error(400, "validation", "risk_matrix must be an object", "risk_matrix");
    double r01 = next.risk_matrix.r01();
    double r10 = next.risk_matrix.r10();
    for (auto [name, target] : {std::pair{"r01", &r01}, std::pair{"r10", &r10}}) {
      if (!r.contains(name)) continue;
      const std::string path = std::string("risk_matrix.") + name;
      if (!r[name].is_number()) return api_error(400, "validation", path + " must be a number", path);
      *target = r[name].get<double>();
      if (!(*target >= 0.0) || !std::isfinite(*target)) {
        return api_error(400, "validation", path + " must be finite and non-negative", path);
      }
    }
    next.risk_matrix = RiskMatrix(r01, r10);
  }

  {
    std::unique_lock lock(state_mutex_);
    persona_ = next;
    persist_persona();
  }
  return get_persona();
}

ApiResponse AssistantService::start_finetune(const json& request) {
  const auto model = active_model();
  if (!model) return api_error(409, "no_model", "no model is loaded");
  if (!request.is_object()) return api_error(400, "validation", "request body must be an object");

  TrainConfig tc = cfg_.finetune_defaults;
  for (auto [name, target] : {std::pair{"epochs", &tc.epochs}, std::pair{"batch_size", &tc.batch_size}}) {
    if (!request.contains(name)) continue;
    if (!request[name].is_number_integer()) {
      return api_error(400, "validation", std::string(name) + " must be an integer", name);
    }
    *target = request[name].get<int>();
  }
  if (auto err = read_number(request, "learning_rate", tc.learning_rate)) return *err;
  if (auto err = read_number(request, "lr_decay_per_epoch", tc.lr_decay_per_epoch)) return *err;
  if (request.contains("seed")) {
    if (!request["seed"].is_number_unsigned()) {
      return api_error(400, "validation", "seed must be a non-negative integer", "seed");
    }
    tc.seed = {request["seed"].get<std::uint64_t>()};
  }
  try {
    tc.validate();
  } catch (const DomainError& e) {
    return api_error(400, "validation", e.what());
  }

  std::unique_lock job_lock(job_mutex_);
  if (job_state_ == JobState::Running) return api_error(409, "conflict", "a fine-tune job is already running");

  ModelCheckpoint base = *model;
  Dataset personal;
  {
    std::shared_lock lock(state_mutex_);
    if (personal_.empty()) {
      return api_error(409, "no_personal_data", "fine-tuning needs at least one labeled item");
    }
    personal = personal_;
    base.risk_matrix = persona_.risk_matrix;
  }
  if (job_thread_.joinable()) job_thread_.join();
  job_state_ = JobState::Running;
  job_error_.clear();
  const std::uint64_t job_id = ++job_id_;
  job_thread_ = std::thread(&AssistantService::run_finetune, this, job_id, std::move(base),
                            std::move(personal), tc);
  return {202, {{"job_id", job_id}, {"state", "running"}}};
}

void AssistantService::run_finetune(std::uint64_t job_id, ModelCheckpoint base, Dataset personal,
                                    TrainConfig tc) {
  JobState outcome = JobState::Succeeded;
  std::string error;
  try {
    spdlog::info("fine-tune job {} on {} personal items", job_id, personal.size());
    auto tuned = std::make_shared<const ModelCheckpoint>(fine_tune(base, personal, tc));
    save_checkpoint(*tuned, cfg_.state_dir / kModelFile);
    std::lock_guard lock(model_mutex_);
    model_ = std::move(tuned);
  } catch (const std::exception& e) {
    outcome = JobState::Failed;
    error = e.what();
    spdlog::error("fine-tune job {} failed: {}", job_id, error);
  }
  {
    std::lock_guard lock(job_mutex_);
    job_state_ = outcome;
    job_error_ = error;
  }
  job_cv_.notify_all();
}

ApiResponse AssistantService::finetune_status() const {
  const auto model = active_model();
  std::lock_guard lock(job_mutex_);
  static constexpr const char* kNames[] = {"idle", "running", "succeeded", "failed"};
  json body = {{"job_id", job_id_}, {"state", kNames[static_cast<int>(job_state_)]}};
  if (!job_error_.empty()) body["error"] = job_error_;
  if (model) body["epoch_t"] = model->epoch_t;
  return {200, std::move(body)};
}

void AssistantService::wait_for_finetune() {
  std::unique_lock lock(job_mutex_);
  job_cv_.wait(lock, [this] { return job_state_ != JobState::Running; });
}

std::vector<Prediction> AssistantService::evaluation_predictions(const ModelCheckpoint& model,
                                                                 const PersonaConfig& persona) const {
  return predict_dataset(model, *cfg_.evaluation_set, persona);
}

ApiResponse AssistantService::metrics() const {
  const auto model = active_model();
  if (!model) return api_error(409, "no_model", "no model is loaded");
  if (!cfg_.evaluation_set || cfg_.evaluation_set->empty()) {
    return api_error(409, "no_evaluation_set", "no evaluation set is configured");
  }
  PersonaConfig persona;
  std::size_t pending = 0;
  std::size_t labeled = 0;
  std::size_t personal = 0;
  {
    std::shared_lock lock(state_mutex_);
    persona = persona_;
    for (const auto& [id, item] : queue_) {
      (item.status == DelegationStatus::Pending ? pending : labeled) += 1;
    }
    personal = personal_.size();
  }
  const auto preds = evaluation_predictions(*model, persona);
  const auto gold = gold_labels(*cfg_.evaluation_set);
  const MetricsReport report = compute_metrics(preds, gold);
  return {200,
          {{"metrics", metrics_to_json(report)},
           {"evaluation_size", preds.size()},
           {"delegation_rate", 1.0 - report.coverage},
           {"theta", persona.theta},
           {"sweep", {{"channel", "u"}, {"rows", sweep_rows_to_json(sweep_thresholds(preds, gold, cfg_.sweep_thetas))}}},
           {"queue", {{"pending", pending}, {"labeled", labeled}}},
           {"personal_dataset_size", personal},
           {"epoch_t", model->epoch_t}}};
}

ApiResponse AssistantService::sweeps(const std::string& channel_name) const {
  UncertaintyChannel channel{};
  try {
    channel = channel_from_string(channel_name);
  } catch (const DomainError& e) {
    return api_error(400, "validation", e.what(), "channel");
  }
  const auto model = active_model();
  if (!model) return api_error(409, "no_model", "no model is loaded");
  if (!cfg_.evaluation_set || cfg_.evaluation_set->empty()) {
    return api_error(409, "no_evaluation_set", "no evaluation set is configured");
  }
  PersonaConfig persona;
  {
    std::shared_lock lock(state_mutex_);
    persona = persona_;
  }
  const auto preds = evaluation_predictions(*model, persona);
  const auto rows = sweep_thresholds(preds, gold_labels(*cfg_.evaluation_set), cfg_.sweep_thetas, channel);
  return {200, {{"channel", to_string(channel)}, {"theta", persona.theta}, {"rows", sweep_rows_to_json(rows)}}};
}

namespace {

void send(httplib::Response& res, const ApiResponse& api) {
  res.status = api.status;
  res.set_content(api.body.dump(), "application/json");
}

// Parses the request body; an empty body reads as {}.
std::optional<json> parse_body(const httplib::Request& req, httplib::Response& res) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    send(res, api_error(400, "invalid_json", e.what()));
    return std::nullopt;
  }
}

}  // namespace

void AssistantService::bind_routes(httplib::Server& server) {
  server.Post("/predict", [this](const httplib::Request& req, httplib::Response& res) {
    if (auto body = parse_body(req, res)) send(res, predict(*body));
  });
  server.Get("/delegations", [this](const httplib::Request&, httplib::Response& res) {
    send(res, list_delegations());
  });
  server.Post(R"(/delegations/([^/]+)/label)", [this](const httplib::Request& req, httplib::Response& res) {
    if (auto body = parse_body(req, res)) send(res, submit_label(req.matches[1].str(), *body));
  });
  server.Get("/persona", [this](const httplib::Request&, httplib::Response& res) {
    send(res, get_persona());
  });
  server.Put("/persona", [this](const httplib::Request& req, httplib::Response& res) {
    if (auto body = parse_body(req, res)) send(res, set_persona(*body));
  });
  server.Post("/finetune", [this](const httplib::Request& req, httplib::Response& res) {
    if (auto body = parse_body(req, res)) send(res, start_finetune(*body));
  });
  server.Get("/finetune/status", [this](const httplib::Request&, httplib::Response& res) {
    send(res, finetune_status());
  });
  server.Get("/metrics", [this](const httplib::Request&, httplib::Response& res) {
    send(res, metrics());
  });
  server.Get("/sweeps", [this](const httplib::Request& req, httplib::Response& res) {
    send(res, sweeps(req.has_param("channel") ? req.get_param_value("channel") : "u"));
  });
  server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      send(res, api_error(500, "internal", e.what()));
    } catch (...) {
      send(res, api_error(500, "internal", "unknown error"));
    }
  });
}

}  // namespace evdl
