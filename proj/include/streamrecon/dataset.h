#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "streamrecon/geometry.h"
#include "streamrecon/image.h"

namespace streamrecon {

struct Frame {
  CameraId id = 0;
  std::string image_path;
  Image image;
  Camera camera;
};

struct SkippedFrame {
  CameraId id = 0;
  std::string reason;
};

// Sequential reader over a directory holding images/NNNNNN.png,
// poses/NNNNNN.txt (camera-to-world) and intrinsics.txt. Frames come out in
// increasing id order, one at a time; there is no random access.
class SequenceSource {
 public:
  // stride > 1 keeps every stride-th frame. Throws InputError if the
  // directory has no frames.
  explicit SequenceSource(const std::string& dir, int stride = 1);

  // Next readable frame. A frame whose image cannot be read is skipped and
  // recorded; a non-finite or malformed pose throws InputError.
  std::optional<Frame> Next();

  const std::vector<SkippedFrame>& skipped() const { return skipped_; }
  const std::string& dir() const { return dir_; }
  std::size_t frame_count() const { return ids_.size(); }

 private:
  std::string dir_;
  Eigen::Matrix3d K_;
  std::vector<CameraId> ids_;
  std::size_t next_ = 0;
  std::vector<SkippedFrame> skipped_;
};

// Ids of poses/*.txt in increasing order.
std::vector<CameraId> ListFrameIds(const std::string& dir);

// Ground truth of one frame: camera and depth (depth/NNNNNN.pfm, else
// depth/NNNNNN.png in millimeters). Depth is empty when neither exists.
struct GroundTruthFrame {
  Camera camera;
  std::optional<DepthMap> depth;
};
GroundTruthFrame ReadGroundTruthFrame(const std::string& dir, CameraId id);

std::string FramePath(const std::string& dir, const std::string& sub, CameraId id,
                      const std::string& ext);

}  // namespace streamrecon
