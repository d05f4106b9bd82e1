// SPDX-License-Identifier: Apache-2.0
#pragma once

// Procedural shapes dataset: three object classes on noisy backgrounds, each
// object made of 2-4 disjoint rectangular or elliptical parts, with matching
// part annotations in the loader's JSON format.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "occaug/image.hpp"
#include "occaug/mask.hpp"

namespace occaug {

struct ToyOptions {
  std::uint64_t seed = 0;
  int train_count = 300;
  int test_count = 90;
  int size = 64;
};

struct ToySample {
  ImageId image_id = 0;
  int class_index = 0;
  Image image;
  std::vector<BinaryMask> parts;  // pairwise disjoint, non-empty
};

const std::vector<std::string>& toy_class_names();

// Deterministic in (seed, image_id).
ToySample make_toy_sample(std::uint64_t seed, ImageId image_id, int class_index, int size);

struct ToyDataset {
  std::filesystem::path root;
  std::filesystem::path train_annotations;  // root/train.json
  std::filesystem::path test_annotations;   // root/test.json
};

// Writes root/images/<id>.ppm plus train.json and test.json. Train ids start
// at 1, test ids at 100001. Classes cycle with the id.
ToyDataset make_toy(const std::filesystem::path& root, const ToyOptions& options = {});

}  // namespace occaug
