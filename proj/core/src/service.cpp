#include "smearscope/service.hpp"

#include <atomic>
#include <chrono>
#include <stdexcept>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "json_util.hpp"
#include "smearscope/image_io.hpp"

namespace smearscope {

using nlohmann::json;

struct InferenceService::Impl {
    Model model;
    PipelineConfig cfg;
    std::string hash;
    httplib::Server server;
    std::thread worker;

    Impl(Model m, PipelineConfig c)
        : model(std::move(m)), cfg(std::move(c)), hash(model_hash(model)) {
        setup_routes();
    }

    static void send_error(httplib::Response& res, int status, const std::string& code) {
        res.status = status;
        res.set_content(json{{"error", code}}.dump(), "application/json");
    }

    void setup_routes() {
        server.set_payload_max_length(kMaxBodyBytes);

        server.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
            res.set_content(json{{"status", "ok"}, {"model_hash", hash}}.dump(),
                            "application/json");
        });

        server.Post("/analyze", [this](const httplib::Request& req, httplib::Response& res) {
            if (req.body.size() > kMaxBodyBytes) {
                send_error(res, 413, "payload_too_large");
                return;
            }
            RgbImage img;
            try {
                img = decode_image(reinterpret_cast<const std::uint8_t*>(req.body.data()),
                                   req.body.size());
            } catch (const std::exception&) {
                send_error(res, 400, "decode_failed");
                return;
            }
            try {
                const std::string image_id = req.get_param_value("image_id");
                const AnalysisResult result = analyze_image(img, model, cfg, image_id);
                if (req.get_param_value("overlay") == "1") {
                    json j = json::parse(analysis_result_to_json(result));
                    j["overlay_png_base64"] =
                        detail::base64_encode(encode_png(render_overlay(img, result)));
                    res.set_content(j.dump(2), "application/json");
                } else {
                    res.set_content(analysis_result_to_json(result), "application/json");
                }
            } catch (const std::exception& e) {
                res.status = 500;
                res.set_content(json{{"error", "internal_error"}, {"message", e.what()}}.dump(),
                                "application/json");
            }
        });
    }
};

InferenceService::InferenceService(Model model, PipelineConfig cfg)
    : impl_(std::make_unique<Impl>(std::move(model), std::move(cfg))) {}

InferenceService::~InferenceService() { stop(); }

int InferenceService::start(const std::string& host, int port) {
    int bound = port;
    if (port == 0) {
        bound = impl_->server.bind_to_any_port(host);
        if (bound < 0) throw std::runtime_error("service: cannot bind to any port");
    } else {
        if (!impl_->server.bind_to_port(host, port))
            throw std::runtime_error("service: cannot bind to port " + std::to_string(port));
    }
    impl_->worker = std::thread([this] { impl_->server.listen_after_bind(); });
    // listen_after_bind needs a moment before the socket accepts.
    for (int i = 0; i < 1000 && !impl_->server.is_running(); ++i)
        std::this_thread::sleep_for(std::chrono::milliseconds(1));
    if (!impl_->server.is_running()) throw std::runtime_error("service: failed to start");
    return bound;
}

void InferenceService::run(const std::string& host, int port) {
    if (!impl_->server.listen(host, port))
        throw std::runtime_error("service: cannot listen on " + host + ":" +
                                 std::to_string(port));
}

void InferenceService::stop() {
    impl_->server.stop();
    if (impl_->worker.joinable()) impl_->worker.join();
}

}  // namespace smearscope
