#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace meshstitch {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec2i = Eigen::Vector2i;

/// Pipeline stage a failure belongs to, used for CLI error tagging.
enum class Stage { Io, Features, Ransac, Overlap, Solve };

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::Io: return "IO";
    case Stage::Features: return "FEATURES";
    case Stage::Ransac: return "RANSAC";
    case Stage::Overlap: return "OVERLAP";
    case Stage::Solve: return "SOLVE";
  }
  return "UNKNOWN";
}

class StitchError : public std::runtime_error {
 public:
  StitchError(Stage stage, const std::string& message)
      : std::runtime_error(message), stage_(stage) {}

  Stage stage() const { return stage_; }

 private:
  Stage stage_;
};

}  // namespace meshstitch
