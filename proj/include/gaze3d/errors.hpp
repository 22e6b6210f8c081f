#pragma once

#include <stdexcept>
#include <string>

namespace gaze3d {

enum class Errc {
  behind_camera,
  non_positive_depth,
  out_of_image,
  zero_direction,
  bad_range,
  insufficient_correspondences,
  degenerate_configuration,
  diverged_behind_camera,
  all_behind_camera,
  no_consensus,
  empty_train_set,
  too_few_descriptors,
  empty_database,
  untrained_tree,
  dimension_mismatch,
  too_few_keypoints,
  too_few_matches,
  insufficient_pairs,
  empty_session,
  invalid_spec,
  target_not_visible,
  length_mismatch,
  io_error,
  bad_checksum,
};

const char* errc_name(Errc c);

/// Exception carrying a machine-checkable error code alongside the message.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace gaze3d
