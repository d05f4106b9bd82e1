// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "occaug/image.hpp"
#include "occaug/mask.hpp"

namespace occaug {

struct InpaintRequest {
  Image image;
  BinaryMask mask;
  std::string prompt;
  std::uint64_t seed = 0;
  int steps = 50;
};

struct FeatureRequest {
  Image image;
  std::string prompt;  // empty: null prompt
  int timestep = 100;
  std::string tap = "mid";
  std::uint64_t seed = 0;
};

// c x h x w activations tapped from the frozen model.
struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> values;

  double at(int c, int y, int x) const {
    return values[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  bool finite() const;
  bool operator==(const FeatureMap&) const = default;
};

struct TapInfo {
  std::string name;
  int channels = 0;
  int downsample = 1;  // feature side = image side / downsample

  bool operator==(const TapInfo&) const = default;
};

struct CapabilityReport {
  std::string backend;
  std::string version;
  int dims_multiple = 1;
  int channels = 3;
  std::vector<TapInfo> taps;
  int timestep_min = 0;
  int timestep_max = 0;
  int default_steps = 1;
  int max_parallel = 1;

  const TapInfo* find_tap(std::string_view name) const;
  std::string to_json() const;
  static CapabilityReport from_json(std::string_view text);
  bool operator==(const CapabilityReport&) const = default;
};

// Uniform interface to a frozen generative model. Implementations never
// change their parameters; parameter_checksum() lets callers verify that.
class GenerativeBackend {
 public:
  virtual ~GenerativeBackend() = default;

  virtual Image inpaint(const InpaintRequest& request) = 0;
  virtual FeatureMap extract_features(const FeatureRequest& request) = 0;
  virtual CapabilityReport capabilities() const = 0;
  virtual std::uint64_t parameter_checksum() const = 0;
};

CapabilityReport describe_capabilities(const GenerativeBackend& backend);

// Throws CapabilityError when the request cannot be served by a backend
// with these capabilities (dimension multiple, channels, tap, timestep).
void check_request(const CapabilityReport& caps, const InpaintRequest& request);
void check_request(const CapabilityReport& caps, const FeatureRequest& request);

// Deterministic stand-in for a diffusion model.
//
// Inpainting: each masked pixel of channel c becomes
//   clamp(ring_mean[c] + noise(seed, x, y, c), 0, 255)
// where ring_mean[c] is the rounded-half-up mean of channel c over unmasked
// pixels that have a 4-neighbour inside the mask (128 if there are none) and
//   noise = int(splitmix64(mix_seed({seed, x, y, c})) % 3) - 1.
// Unmasked pixels are copied unchanged. An empty mask returns the input.
//
// Features (tap "mid", 8 channels, downsample 8): the image is average
// pooled over 8x8 blocks and scaled to [0, 1]; each output channel k is
//   sum_c W[k][c] * pooled[c] + b[k]
// with W (8x3) and b (8) drawn once from Rng(kParameterSeed) as standard
// normals scaled by 0.5. An all-zero image therefore maps to b[k] everywhere.
// Request seed and timestep do not change the features.
class MockBackend final : public GenerativeBackend {
 public:
  static constexpr std::uint64_t kParameterSeed = 0x0cc1u;
  static constexpr int kChannels = 8;
  static constexpr int kDownsample = 8;

  MockBackend();

  Image inpaint(const InpaintRequest& request) override;
  FeatureMap extract_features(const FeatureRequest& request) override;
  CapabilityReport capabilities() const override;
  std::uint64_t parameter_checksum() const override;

  double weight(int k, int c) const { return weight_[static_cast<std::size_t>(k) * 3 + c]; }
  double bias(int k) const { return bias_[static_cast<std::size_t>(k)]; }

 private:
  std::vector<double> weight_;
  std::vector<double> bias_;
};

// "mock", "local:<command line>" or "remote:<host>:<port>".
std::unique_ptr<GenerativeBackend> make_backend(std::string_view spec);

// Talks the framed protocol to a child process over its stdin/stdout:
// each message is a little-endian u32 byte length followed by the frame.
// Calls are serialized.
class LocalProcessBackend final : public GenerativeBackend {
 public:
  explicit LocalProcessBackend(std::string command);
  ~LocalProcessBackend() override;
  LocalProcessBackend(const LocalProcessBackend&) = delete;
  LocalProcessBackend& operator=(const LocalProcessBackend&) = delete;

  Image inpaint(const InpaintRequest& request) override;
  FeatureMap extract_features(const FeatureRequest& request) override;
  CapabilityReport capabilities() const override;
  std::uint64_t parameter_checksum() const override;

 private:
  std::string call(const std::string& frame) const;

  std::string command_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  mutable std::mutex mutex_;
  CapabilityReport caps_;
};

// Posts frames to http://<host>:<port>/v1/call.
class RemoteBackend final : public GenerativeBackend {
 public:
  RemoteBackend(std::string host, int port);

  Image inpaint(const InpaintRequest& request) override;
  FeatureMap extract_features(const FeatureRequest& request) override;
  CapabilityReport capabilities() const override;
  std::uint64_t parameter_checksum() const override;

 private:
  std::string call(const std::string& frame) const;

  std::string host_;
  int port_;
  CapabilityReport caps_;
};

// Features persisted per (image_id, tap, timestep) under
// <root>/<backend version>/, with an index.csv of
// image_id,tap,timestep,backend_version,file.
class FeatureCache {
 public:
  FeatureCache(std::filesystem::path root, std::string backend_version);

  std::optional<FeatureMap> get(ImageId image_id, const std::string& tap, int timestep) const;
  void put(ImageId image_id, const std::string& tap, int timestep, const FeatureMap& map);
  std::filesystem::path directory() const;

 private:
  std::filesystem::path file_for(ImageId image_id, const std::string& tap, int timestep) const;

  std::filesystem::path root_;
  std::string version_;
  mutable std::mutex mutex_;
};

std::string encode_feature_map(const FeatureMap& map);
FeatureMap decode_feature_map(std::string_view bytes);

}  // namespace occaug
