#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "pseudolabel/label_map.hpp"
#include "pseudolabel/refinement.hpp"

namespace pseudolabel {

struct MaskRequest {
  std::size_t frame = 0;
  std::string image;  // path relative to the exchange directory's consumer
  int width = 0;
  int height = 0;
  std::vector<Prompt> prompts;

  /// Throws std::invalid_argument on empty prompt lists, duplicate ids or
  /// prompts outside the image.
  void validate() const;
};

struct MaskResponse {
  std::size_t frame = 0;
  int width = 0;
  int height = 0;
  std::vector<InstanceMask> masks;  // at most one per prompt id

  /// Throws TransportError if the response does not answer `request`:
  /// frame or dimension mismatch, unknown or repeated prompt ids, bad masks.
  void validate_against(const MaskRequest& request) const;
};

/// "Prompts in, masks out". Prompts the segmenter cannot answer are absent
/// from the response. Implementations must accept concurrent calls for distinct frames.
class Segmenter {
 public:
  virtual ~Segmenter() = default;
  virtual std::string_view name() const = 0;
  virtual MaskResponse answer(const MaskRequest& request) = 0;
};

/// Validates the request, queries the segmenter and checks the response contract.
MaskResponse request_masks(Segmenter& segmenter, const MaskRequest& request);

/// Controlled imperfection for the oracle. Dilation is applied before erosion,
/// both with a square structuring element of the given radius.
struct OraclePerturbation {
  int dilate_radius = 0;
  int erode_radius = 0;
  double dropout = 0.0;
  std::uint64_t seed = 0;
  void validate() const;
};

/// Answers prompts from an instance-id render (0 = background). Point prompts
/// select the instance under the point; bbox-only prompts select the instance
/// with the largest pixel count inside the box (lowest id on ties).
MaskResponse oracle_masks(const InstanceMap& instances, const MaskRequest& request,
                          const OraclePerturbation& perturbation = {});

Bitmap dilate(const Bitmap& mask, int radius);
Bitmap erode(const Bitmap& mask, int radius);

class OracleSegmenter final : public Segmenter {
 public:
  using InstanceSource = std::function<InstanceMap(std::size_t frame)>;

  explicit OracleSegmenter(InstanceSource source, OraclePerturbation perturbation = {});

  std::string_view name() const override { return "oracle"; }
  MaskResponse answer(const MaskRequest& request) override;

 private:
  InstanceSource source_;
  OraclePerturbation perturbation_;
};

}  // namespace pseudolabel
