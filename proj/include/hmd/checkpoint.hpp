#pragma once

// Checkpoint file: "MDCK", u32 version, u32 metadata length, metadata JSON,
// then records [u32 name length, name, u32 rank, u32 extents…, float64
// payload]. Record names are "param/<name>", "adam.m/<name>" and
// "adam.v/<name>".

#include <cstdint>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "hmd/data.hpp"
#include "hmd/model.hpp"
#include "hmd/training.hpp"

namespace hmd {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class checkpoint_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
/// Bad magic, unknown version or unreadable header.
class checkpoint_version_error : public checkpoint_error {
 public:
  using checkpoint_error::checkpoint_error;
};
/// A stored tensor disagrees with the model it is loaded into.
class checkpoint_shape_error : public checkpoint_error {
 public:
  checkpoint_shape_error(std::string tensor, const std::string& what) : checkpoint_error(what), tensor_(std::move(tensor)) {}
  const std::string& tensor() const { return tensor_; }

 private:
  std::string tensor_;
};

struct CheckpointRecord {
  std::string name;
  Tensor value;
};

struct CheckpointData {
  nlohmann::json metadata;
  std::vector<CheckpointRecord> records;
};

void save_checkpoint(const std::filesystem::path& path, const Captioner& model, const Vocabulary& vocab,
                     const TrainProgress& progress, const AdamState* adam);

CheckpointData read_checkpoint(const std::filesystem::path& path);

/// Copies "param/" records into the model; every model parameter must be
/// present with a matching shape.
void apply_parameters(const CheckpointData& data, Captioner& model);

struct LoadedCheckpoint {
  std::unique_ptr<Captioner> model;
  Vocabulary vocab;
  TrainProgress progress;
  std::optional<AdamState> adam;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace hmd
