#pragma once

// Scripted client for the assistant's HTTP API: delegate, label, fine-tune,
// replay. Every observation goes through the wire.

#include <chrono>
#include <filesystem>
#include <map>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "evdl/service.hpp"

namespace evdl::scenario {

struct HttpRun {
  std::string failure;  // empty on success
  std::size_t stream_size = 0;
  std::size_t first_pass_delegations = 0;
  std::size_t pending_after_first_pass = 0;
  std::size_t personal_after_labeling = 0;
  std::size_t replay_delegations = 0;
  std::string finetune_state;
};

// Serves a model with a zero output layer over `stream`, labels everything it delegates
// with the gold label, fine-tunes, then replays the stream under fresh ids.
inline HttpRun run_http_scenario(const Dataset& stream, const std::filesystem::path& state_dir,
                                 double theta, const nlohmann::json& finetune_request) {
  using nlohmann::json;
  HttpRun run;
  run.stream_size = stream.size();

  NetworkSpec spec;
  spec.input_dim = stream.feature_dim;
  ServiceConfig cfg;
  cfg.state_dir = state_dir;
  AssistantService service(cfg, zero_head_model(spec, RngSeed{42}, stream.schema_id));

  httplib::Server server;
  service.bind_routes(server);
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread serving([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  client.set_read_timeout(120, 0);
  auto call = [&](const httplib::Result& r, int want, const std::string& what) -> json {
    if (!r) {
      run.failure = what + ": no response";
      return nullptr;
    }
    if (r->status != want) {
      run.failure = what + ": status " + std::to_string(r->status) + " " + r->body;
      return nullptr;
    }
    return json::parse(r->body);
  };

  auto predict_all = [&](const std::string& prefix) {
    std::size_t delegated = 0;
    for (const auto& ex : stream.examples) {
      const json body = {{"item_id", prefix + ex.id}, {"features", ex.features}};
      const json out = call(client.Post("/predict", body.dump(), "application/json"), 200, "predict");
      if (out.is_null()) return delegated;
      delegated += out["action"] == "delegate";
    }
    return delegated;
  };

  [&] {
    if (call(client.Put("/persona", json{{"theta", theta}}.dump(), "application/json"), 200, "persona").is_null()) return;
    run.first_pass_delegations = predict_all("a-");
    if (!run.failure.empty()) return;

    const json queue = call(client.Get("/delegations"), 200, "delegations");
    if (queue.is_null()) return;
    run.pending_after_first_pass = queue["pending_count"].get<std::size_t>();
    std::map<std::string, Label> gold;
    for (const auto& ex : stream.examples) gold["a-" + ex.id] = ex.resolved_label;
    for (const auto& item : queue["items"]) {
      const std::string id = item["item_id"];
      const json body = {{"label", to_int(gold.at(id))}};
      if (call(client.Post("/delegations/" + id + "/label", body.dump(), "application/json"), 200, "label").is_null()) return;
    }
    const json after = call(client.Get("/delegations"), 200, "delegations");
    if (after.is_null()) return;
    run.personal_after_labeling = after["personal_dataset_size"].get<std::size_t>();

    if (call(client.Post("/finetune", finetune_request.dump(), "application/json"), 202, "finetune").is_null()) return;
    for (int i = 0; i < 6000; ++i) {
      const json status = call(client.Get("/finetune/status"), 200, "status");
      if (status.is_null()) return;
      run.finetune_state = status["state"];
      if (run.finetune_state != "running") break;
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    if (run.finetune_state != "succeeded") {
      run.failure = "fine-tune ended in state " + run.finetune_state;
      return;
    }
    run.replay_delegations = predict_all("b-");
  }();

  server.stop();
  serving.join();
  return run;
}

}  // namespace evdl::scenario
