#include "pseudolabel/segmenter.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>

#include <fmt/format.h>

#include "pseudolabel/errors.hpp"

namespace pseudolabel {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Uniform in [0, 1), a pure function of (seed, frame, prompt).
double prompt_uniform(std::uint64_t seed, std::size_t frame, int prompt_id) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(frame));
  h = splitmix64(h ^ static_cast<std::uint64_t>(static_cast<std::uint32_t>(prompt_id)));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

std::uint16_t select_instance(const InstanceMap& instances, const Prompt& prompt) {
  if (prompt.point) return instances.at(prompt.point->u, prompt.point->v);
  std::map<std::uint16_t, std::size_t> counts;
  const auto& b = *prompt.bbox;
  for (int v = b.v_min; v <= b.v_max; ++v)
    for (int u = b.u_min; u <= b.u_max; ++u)
      if (auto id = instances.at(u, v)) ++counts[id];
  std::uint16_t best = 0;
  std::size_t best_count = 0;
  for (const auto& [id, n] : counts) {
    if (n > best_count) {
      best = id;
      best_count = n;
    }
  }
  return best;
}

// Separable square max/min filter; pixels outside the image count as 0.
Bitmap morph(const Bitmap& in, int radius, bool grow) {
  if (radius <= 0) return in;
  const int w = in.width();
  const int h = in.height();
  Bitmap tmp(w, h, 0);
  Bitmap out(w, h, 0);
  const auto pass = [&](const Bitmap& src, Bitmap& dst, bool horizontal) {
    for (int v = 0; v < h; ++v) {
      for (int u = 0; u < w; ++u) {
        bool any = false;
        bool all = true;
        for (int k = -radius; k <= radius; ++k) {
          const int su = horizontal ? u + k : u;
          const int sv = horizontal ? v : v + k;
          const bool set = su >= 0 && sv >= 0 && su < w && sv < h && src.at(su, sv);
          any = any || set;
          all = all && set;
        }
        dst.at(u, v) = (grow ? any : all) ? 1 : 0;
      }
    }
  };
  pass(in, tmp, true);
  pass(tmp, out, false);
  return out;
}

}  // namespace

void MaskRequest::validate() const {
  if (width <= 0 || height <= 0) throw std::invalid_argument("request dimensions must be positive");
  if (prompts.empty()) throw std::invalid_argument("mask request without prompts");
  std::set<int> ids;
  for (const auto& p : prompts) {
    p.validate(width, height);
    if (!ids.insert(p.id).second)
      throw std::invalid_argument(fmt::format("duplicate prompt id {}", p.id));
  }
}

void MaskResponse::validate_against(const MaskRequest& request) const {
  if (frame != request.frame)
    throw TransportError(fmt::format("response for frame {} answers request {}", frame, request.frame));
  if (width != request.width || height != request.height)
    throw TransportError(fmt::format("frame {}: response is {}x{}, request {}x{}", frame, width,
                                     height, request.width, request.height));
  std::set<int> asked;
  for (const auto& p : request.prompts) asked.insert(p.id);
  std::set<int> seen;
  for (const auto& m : masks) {
    if (!asked.contains(m.prompt_id))
      throw TransportError(fmt::format("frame {}: mask for unknown prompt {}", frame, m.prompt_id));
    if (!seen.insert(m.prompt_id).second)
      throw TransportError(fmt::format("frame {}: several masks for prompt {}", frame, m.prompt_id));
    try {
      m.validate(width, height);
    } catch (const std::invalid_argument& e) {
      throw TransportError(fmt::format("frame {}: {}", frame, e.what()));
    }
  }
}

MaskResponse request_masks(Segmenter& segmenter, const MaskRequest& request) {
  request.validate();
  MaskResponse response = segmenter.answer(request);
  response.validate_against(request);
  return response;
}

void OraclePerturbation::validate() const {
  if (dilate_radius < 0 || erode_radius < 0)
    throw std::invalid_argument("morphology radii must be >= 0");
  if (!(dropout >= 0.0 && dropout <= 1.0))
    throw std::invalid_argument("dropout probability must be in [0, 1]");
}

Bitmap dilate(const Bitmap& mask, int radius) { return morph(mask, radius, true); }
Bitmap erode(const Bitmap& mask, int radius) { return morph(mask, radius, false); }

MaskResponse oracle_masks(const InstanceMap& instances, const MaskRequest& request,
                          const OraclePerturbation& perturbation) {
  perturbation.validate();
  if (!instances.same_shape(request.width, request.height))
    throw std::invalid_argument("instance render does not match the request dimensions");

  MaskResponse response{request.frame, request.width, request.height, {}};
  for (const Prompt& prompt : request.prompts) {
    if (perturbation.dropout > 0.0 &&
        prompt_uniform(perturbation.seed, request.frame, prompt.id) < perturbation.dropout)
      continue;
    const std::uint16_t instance = select_instance(instances, prompt);
    if (instance == 0) continue;

    Bitmap bits(request.width, request.height, 0);
    for (std::size_t i = 0; i < instances.size(); ++i) bits[i] = instances[i] == instance ? 1 : 0;
    bits = erode(dilate(bits, perturbation.dilate_radius), perturbation.erode_radius);

    InstanceMask mask(prompt.id, std::move(bits));
    if (mask.area > 0) response.masks.push_back(std::move(mask));
  }
  return response;
}

OracleSegmenter::OracleSegmenter(InstanceSource source, OraclePerturbation perturbation)
    : source_(std::move(source)), perturbation_(perturbation) {
  perturbation_.validate();
}

MaskResponse OracleSegmenter::answer(const MaskRequest& request) {
  return oracle_masks(source_(request.frame), request, perturbation_);
}

}  // namespace pseudolabel
