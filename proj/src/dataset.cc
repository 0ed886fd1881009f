#include "streamrecon/dataset.h"

#include <algorithm>
#include <cctype>
#include <filesystem>

#include "streamrecon/synthetic.h"

namespace streamrecon {
namespace fs = std::filesystem;

namespace {

std::optional<CameraId> ParseId(const std::string& stem) {
  if (stem.empty() || stem.size() > 18) return std::nullopt;
  for (char c : stem) {
    if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
  }
  return std::stoll(stem);
}

}  // namespace

std::string FramePath(const std::string& dir, const std::string& sub, CameraId id,
                      const std::string& ext) {
  return (fs::path(dir) / sub / (FrameName(id) + ext)).string();
}

std::vector<CameraId> ListFrameIds(const std::string& dir) {
  const fs::path poses = fs::path(dir) / "poses";
  STREAMRECON_CHECK_INPUT(fs::is_directory(poses), "missing directory ", poses.string());
  std::vector<CameraId> ids;
  for (const auto& entry : fs::directory_iterator(poses)) {
    if (entry.path().extension() != ".txt") continue;
    if (auto id = ParseId(entry.path().stem().string())) ids.push_back(*id);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

SequenceSource::SequenceSource(const std::string& dir, int stride) : dir_(dir) {
  STREAMRECON_CHECK_INPUT(stride >= 1, "stride must be >= 1");
  K_ = ReadIntrinsicsFile((fs::path(dir) / "intrinsics.txt").string());
  const auto all = ListFrameIds(dir);
  for (std::size_t i = 0; i < all.size(); i += stride) ids_.push_back(all[i]);
  STREAMRECON_CHECK_INPUT(!ids_.empty(), "no frames in ", dir);
}

std::optional<Frame> SequenceSource::Next() {
  while (next_ < ids_.size()) {
    const CameraId id = ids_[next_++];
    const Eigen::Matrix4d pose = ReadPoseFile(FramePath(dir_, "poses", id, ".txt"));
    Frame frame;
    frame.id = id;
    frame.image_path = FramePath(dir_, "images", id, ".png");
    try {
      frame.image = ReadPng(frame.image_path);
    } catch (const InputError& e) {
      skipped_.push_back({id, e.what()});
      continue;
    }
    frame.camera = Camera::FromPose(pose, K_, frame.image.width(), frame.image.height(), id);
    frame.camera.Validate();
    return frame;
  }
  return std::nullopt;
}

GroundTruthFrame ReadGroundTruthFrame(const std::string& dir, CameraId id) {
  const Eigen::Matrix3d K = ReadIntrinsicsFile((fs::path(dir) / "intrinsics.txt").string());
  const Eigen::Matrix4d pose = ReadPoseFile(FramePath(dir, "poses", id, ".txt"));
  GroundTruthFrame gt;
  const std::string pfm = FramePath(dir, "depth", id, ".pfm");
  const std::string png = FramePath(dir, "depth", id, ".png");
  if (fs::exists(pfm)) {
    gt.depth = ReadPfm(pfm);
  } else if (fs::exists(png)) {
    gt.depth = ReadDepthPng(png);
  }
  int width = 0, height = 0;
  if (gt.depth) {
    width = gt.depth->width();
    height = gt.depth->height();
    gt.depth->set_camera(id);
  } else {
    const Image image = ReadPng(FramePath(dir, "images", id, ".png"));
    width = image.width();
    height = image.height();
  }
  gt.camera = Camera::FromPose(pose, K, width, height, id);
  return gt;
}

}  // namespace streamrecon
