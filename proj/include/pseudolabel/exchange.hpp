#pragma once

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <mutex>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "pseudolabel/segmenter.hpp"

namespace pseudolabel {

// Exchange directory protocol:
//   <dir>/<frame:06>.prompts.json
//     {"frame": n, "image": "<relpath>", "width": W, "height": H,
//      "prompts": [{"id": j, "point": [u, v] | null, "bbox": [u0, v0, u1, v1] | null}]}
//   <dir>/<frame:06>.masks.json
//     {"frame": n, "width": W, "height": H, "masks": [{"prompt_id": j, "rle": [c0, c1, ...]}]}

std::filesystem::path prompts_file(const std::filesystem::path& dir, std::size_t frame);
std::filesystem::path masks_file(const std::filesystem::path& dir, std::size_t frame);

nlohmann::ordered_json request_to_json(const MaskRequest& request);
/// Throws FormatError on schema violations.
MaskRequest request_from_json(const nlohmann::json& j);

nlohmann::ordered_json response_to_json(const MaskResponse& response);
/// Throws TransportError on schema violations or RLE/dimension mismatches.
/// All-zero masks are treated as unanswered prompts and dropped.
MaskResponse response_from_json(const nlohmann::json& j);

/// Writes through a temporary file and a rename so readers never see partial JSON.
void write_json_atomic(const std::filesystem::path& path, const nlohmann::ordered_json& j);

void write_request(const std::filesystem::path& dir, const MaskRequest& request);
MaskRequest read_request(const std::filesystem::path& path);
void write_response(const std::filesystem::path& dir, const MaskResponse& response);
MaskResponse read_response(const std::filesystem::path& path);

/// File-exchange client for an external segmenter process. Writes the prompts
/// file and blocks until the matching masks file appears or the timeout
/// expires. An existing masks file that answers the request is reused, which
/// makes runs replayable.
class ExchangeSegmenter final : public Segmenter {
 public:
  ExchangeSegmenter(std::filesystem::path dir,
                    std::chrono::milliseconds timeout = std::chrono::seconds(600),
                    std::chrono::milliseconds poll_interval = std::chrono::milliseconds(200));

  std::string_view name() const override { return "exchange"; }
  MaskResponse answer(const MaskRequest& request) override;

  const std::filesystem::path& directory() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::chrono::milliseconds timeout_;
  std::chrono::milliseconds poll_interval_;

  std::mutex mutex_;
  std::condition_variable released_;
  std::set<std::size_t> in_flight_;
};

}  // namespace pseudolabel
