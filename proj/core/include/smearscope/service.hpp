#pragma once

#include <memory>
#include <string>

#include "smearscope/analyze.hpp"

namespace smearscope {

/// Stateless HTTP inference front-end over analyze_image.
///
/// Endpoints:
///   GET  /health   -> {"status":"ok","model_hash":...}
///   POST /analyze  -> AnalysisResult JSON; body is PNG or JPEG bytes
///                     (sniffed by magic), optional ?overlay=1 embeds a
///                     base64 PNG overlay, optional ?image_id=... echoes an
///                     id into the result.
///
/// The model and config are read-only after construction, so concurrent
/// requests are safe and identical inputs produce identical responses.
class InferenceService {
public:
    InferenceService(Model model, PipelineConfig cfg);
    ~InferenceService();

    InferenceService(const InferenceService&) = delete;
    InferenceService& operator=(const InferenceService&) = delete;

    /// Bind and serve on a background thread; port 0 picks a free port.
    /// Returns the bound port. Throws std::runtime_error on bind failure.
    int start(const std::string& host, int port);

    /// Serve on the calling thread until stop() is invoked elsewhere.
    void run(const std::string& host, int port);

    void stop();

    static constexpr std::size_t kMaxBodyBytes = 20 * 1024 * 1024;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace smearscope
