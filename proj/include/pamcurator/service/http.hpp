#pragma once

#include <memory>
#include <string>

#include <json.hpp>

#include "pamcurator/core/httplib.hpp"
#include "pamcurator/service/service.hpp"

namespace pam::service {

inline constexpr std::size_t kMaxTasksPerRequest = 500;

namespace detail {

inline nlohmann::json envelope(const CurationService& svc, nlohmann::json body) {
  body["run_id"] = svc.run_id();
  body["iteration"] = svc.iteration();
  return body;
}

inline void send_json(httplib::Response& res, const CurationService& svc, nlohmann::json body, int status = 200) {
  res.status = status;
  res.set_content(envelope(svc, std::move(body)).dump(), "application/json");
}

inline void send_error(httplib::Response& res, const CurationService& svc, ServiceErrc code, const std::string& message) {
  send_json(res, svc, {{"error", to_string(code)}, {"message", message}}, http_status(code));
}

/// Maps library and service exceptions onto JSON error responses.
template <typename F>
void guarded(const CurationService& svc, httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const ServiceError& e) {
    send_error(res, svc, e.code(), e.what());
  } catch (const NotFoundError& e) {
    send_error(res, svc, ServiceErrc::not_found, e.what());
  } catch (const ArgumentError& e) {
    send_error(res, svc, ServiceErrc::bad_request, e.what());
  } catch (const nlohmann::json::exception& e) {
    send_error(res, svc, ServiceErrc::bad_request, e.what());
  } catch (const std::exception& e) {
    send_json(res, svc, {{"error", "internal"}, {"message", e.what()}}, 500);
  }
}

}  // namespace detail

/// Binds the labeling API onto `server`. Every JSON response carries
/// run_id and iteration.
inline void mount_routes(httplib::Server& server, CurationService& svc) {
  using detail::guarded;
  using detail::send_json;
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Headers", "Content-Type"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  server.Get("/healthz", [&svc](const httplib::Request&, httplib::Response& res) {
    send_json(res, svc, {{"status", svc.active() ? "ok" : "idle"}});
  });

  server.Get("/tasks", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(svc, res, [&] {
      std::size_t n = 10;
      if (req.has_param("n")) {
        try {
          n = std::stoul(req.get_param_value("n"));
        } catch (const std::exception&) {
          throw ServiceError(ServiceErrc::bad_request, "n must be a non-negative integer");
        }
      }
      n = std::min(n, kMaxTasksPerRequest);
      const std::string session = req.has_param("session") ? req.get_param_value("session") : req.remote_addr;
      nlohmann::json tasks = nlohmann::json::array();
      for (const auto& t : svc.get_next_tasks(session, n)) tasks.push_back(task_to_json(t));
      send_json(res, svc, {{"tasks", tasks}, {"vocabulary", vocabulary_to_json(svc.vocabulary())}});
    });
  });

  server.Post("/labels", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(svc, res, [&] {
      const auto body = nlohmann::json::parse(req.body);
      if (body.is_array()) {
        nlohmann::json acks = nlohmann::json::array();
        for (const auto& item : body) acks.push_back(svc.submit_label(submission_from_json(item)));
        send_json(res, svc, {{"acks", acks}});
      } else {
        send_json(res, svc, {{"ack", svc.submit_label(submission_from_json(body))}});
      }
    });
  });

  server.Get(R"(/spectrogram/([^/]+)\.png)", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(svc, res, [&] {
      const auto style = RenderStyle::parse(req.has_param("style") ? req.get_param_value("style") : "");
      const auto png = svc.render_spectrogram(req.matches[1], style);
      res.set_header("X-Run-Id", svc.run_id());
      res.set_header("X-Iteration", std::to_string(svc.iteration()));
      res.set_content(std::string(png.begin(), png.end()), "image/png");
    });
  });

  server.Get(R"(/audio/([^/]+)\.wav)", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(svc, res, [&] {
      const auto wav = svc.audio_wav(req.matches[1]);
      res.set_header("X-Run-Id", svc.run_id());
      res.set_header("X-Iteration", std::to_string(svc.iteration()));
      res.set_content(std::string(wav.begin(), wav.end()), "audio/wav");
    });
  });

  server.Post("/retrain", [&svc](const httplib::Request&, httplib::Response& res) {
    guarded(svc, res, [&] { send_json(res, svc, svc.trigger_retrain(), 202); });
  });

  server.Get("/stats", [&svc](const httplib::Request&, httplib::Response& res) {
    guarded(svc, res, [&] { send_json(res, svc, svc.stats_json()); });
  });
}

}  // namespace pam::service
