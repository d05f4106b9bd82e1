// SPDX-License-Identifier: Apache-2.0
#include "occaug/augmenters.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "csv.hpp"
#include "occaug/error.hpp"
#include "occaug/kernels.hpp"
#include "occaug/rng.hpp"

namespace occaug {

std::string_view kind_name(AugmentationKind kind) {
  switch (kind) {
    case AugmentationKind::BlackOut:
      return "blackout";
    case AugmentationKind::CutMix:
      return "cutmix";
    case AugmentationKind::ReplaceParts:
      return "replace-parts";
    case AugmentationKind::SDInpaint:
      return "sd-inpaint";
  }
  return "unknown";
}

AugmentationKind parse_kind(std::string_view name) {
  for (auto kind : {AugmentationKind::BlackOut, AugmentationKind::CutMix,
                    AugmentationKind::ReplaceParts, AugmentationKind::SDInpaint})
    if (kind_name(kind) == name) return kind;
  throw ValidationError("unknown augmentation method '" + std::string(name) +
                        "' (expected blackout, cutmix, replace-parts, sd-inpaint)");
}

namespace {

void require_mask_fits(const Image& image, const BinaryMask& mask, const char* op) {
  if (mask.width() != image.width() || mask.height() != image.height())
    throw ValidationError(std::string(op) + ": mask " + std::to_string(mask.width()) + "x" +
                          std::to_string(mask.height()) + " does not match image " +
                          std::to_string(image.width()) + "x" + std::to_string(image.height()));
}

void require_same_shape(const Image& a, const Image& b, const char* op) {
  if (!a.same_shape(b))
    throw ValidationError(std::string(op) + ": image shapes differ (" + std::to_string(a.width()) +
                          "x" + std::to_string(a.height()) + "x" + std::to_string(a.channels()) +
                          " vs " + std::to_string(b.width()) + "x" + std::to_string(b.height()) +
                          "x" + std::to_string(b.channels()) + ")");
}

}  // namespace

Image black_out_pixels(const Image& image, const BinaryMask& mask) {
  require_mask_fits(image, mask, "black_out");
  Image out = image;
  for (int c = 0; c < image.channels(); ++c)
    kernels::fill_masked_u8(out.plane(c), image.plane(c), mask.bits(), 0);
  return out;
}

AugmentedSample black_out(const Image& image, const BinaryMask& mask, int label) {
  AugmentedSample s;
  s.image = black_out_pixels(image, mask);
  s.label_weights = one_hot(label);
  s.source_mask = mask;
  s.kind = AugmentationKind::BlackOut;
  return s;
}

AugmentedSample replace_parts(const Image& image, const BinaryMask& mask, const Image& donor,
                              int label) {
  require_mask_fits(image, mask, "replace_parts");
  require_same_shape(image, donor, "replace_parts");
  AugmentedSample s;
  s.image = Image(image.width(), image.height(), image.channels());
  for (int c = 0; c < image.channels(); ++c)
    kernels::select_u8(s.image.plane(c), image.plane(c), donor.plane(c), mask.bits());
  s.label_weights = one_hot(label);
  s.source_mask = mask;
  s.kind = AugmentationKind::ReplaceParts;
  return s;
}

CellRect sample_cutmix_rect(int width, int height, std::uint64_t seed) {
  Rng rng(seed);
  const double lambda = rng.unit();  // Beta(1, 1)
  const double cut_ratio = std::sqrt(1.0 - lambda);
  const int cut_w = static_cast<int>(width * cut_ratio);
  const int cut_h = static_cast<int>(height * cut_ratio);
  const int cx = static_cast<int>(rng.below(static_cast<std::uint64_t>(width)));
  const int cy = static_cast<int>(rng.below(static_cast<std::uint64_t>(height)));
  return {std::clamp(cx - cut_w / 2, 0, width), std::clamp(cy - cut_h / 2, 0, height),
          std::clamp(cx + cut_w / 2, 0, width), std::clamp(cy + cut_h / 2, 0, height)};
}

MixRatio cutmix_lambda(const CellRect& rect, int width, int height) {
  const std::int64_t total = static_cast<std::int64_t>(width) * height;
  return {total - rect.area(), total};
}

AugmentedSample cutmix_with_rect(const Image& image_a, int label_a, const Image& image_b,
                                 int label_b, const CellRect& rect) {
  require_same_shape(image_a, image_b, "cutmix");
  if (rect.x0 < 0 || rect.y0 < 0 || rect.x1 > image_a.width() || rect.y1 > image_a.height() ||
      rect.x0 > rect.x1 || rect.y0 > rect.y1)
    throw ValidationError("cutmix rectangle lies outside the image");
  BinaryMask box(image_a.width(), image_a.height());
  box.fill_rect(rect.x0, rect.y0, rect.x1, rect.y1);

  AugmentedSample s;
  s.image = Image(image_a.width(), image_a.height(), image_a.channels());
  for (int c = 0; c < image_a.channels(); ++c)
    kernels::select_u8(s.image.plane(c), image_a.plane(c), image_b.plane(c), box.bits());
  const MixRatio lambda = cutmix_lambda(rect, image_a.width(), image_a.height());
  if (lambda.numerator == lambda.denominator || label_a == label_b) {
    s.label_weights = one_hot(label_a);
  } else if (lambda.numerator == 0) {
    s.label_weights = one_hot(label_b);
  } else {
    const auto rest = lambda.denominator - lambda.numerator;
    s.label_weights = {{label_a, lambda.value()},
                       {label_b, static_cast<double>(rest) / static_cast<double>(lambda.denominator)}};
  }
  s.pasted_rect = rect;
  s.lambda = lambda;
  s.kind = AugmentationKind::CutMix;
  return s;
}

AugmentedSample cutmix(const Image& image_a, int label_a, const Image& image_b, int label_b,
                       std::uint64_t seed) {
  require_same_shape(image_a, image_b, "cutmix");
  return cutmix_with_rect(image_a, label_a, image_b, label_b,
                          sample_cutmix_rect(image_a.width(), image_a.height(), seed));
}

std::string inpaint_prompt(std::string_view class_name) {
  return "A class of " + std::string(class_name);
}

AugmentedSample inpaint_augment(const Image& image, const OcclusionPlan& plan,
                                std::string_view class_name, int label,
                                GenerativeBackend& backend, std::uint64_t seed, int steps) {
  require_mask_fits(image, plan.composite, "inpaint_augment");
  AugmentedSample s;
  s.label_weights = one_hot(label);
  s.source_mask = plan.composite;
  s.kind = AugmentationKind::SDInpaint;
  if (plan.composite.empty_set()) {
    s.image = image;
    return s;
  }
  InpaintRequest req{image, plan.composite, inpaint_prompt(class_name), seed, steps};
  try {
    if (req.steps <= 0) req.steps = backend.capabilities().default_steps;
    s.image = backend.inpaint(req);
  } catch (const CapabilityError& e) {
    throw CapabilityError("image " + std::to_string(plan.image_id) + ": " + e.what());
  } catch (const Error& e) {
    throw BackendError("image " + std::to_string(plan.image_id) + ": inpainting failed: " +
                       e.what());
  }
  if (!s.image.same_shape(image))
    throw BackendError("image " + std::to_string(plan.image_id) +
                       ": backend returned an image of a different shape");
  return s;
}

std::uint64_t augmentation_seed(std::uint64_t seed, ImageId image_id) {
  return mix_seed({seed, static_cast<std::uint64_t>(image_id), 0xA06Du});
}

std::size_t donor_index(std::size_t count, std::size_t index, std::uint64_t seed) {
  if (count == 0 || index >= count) throw ValidationError("donor_index: index out of range");
  if (count == 1) return index;
  Rng rng(mix_seed({seed, index, 0xD0u}));
  const std::size_t pick = rng.below(count - 1);
  return pick >= index ? pick + 1 : pick;
}

AugmentCache::AugmentCache(std::filesystem::path root, AugmentationKind kind)
    : root_(std::move(root)), kind_(kind) {}

std::filesystem::path AugmentCache::method_dir() const { return root_ / kind_name(kind_); }

std::filesystem::path AugmentCache::image_path(ImageId image_id) const {
  return method_dir() / (std::to_string(image_id) + ".ppm");
}

bool AugmentCache::contains(ImageId image_id) const {
  return std::filesystem::exists(image_path(image_id));
}

std::optional<Image> AugmentCache::load(ImageId image_id) const {
  if (!contains(image_id)) return std::nullopt;
  return read_image(image_path(image_id));
}

void AugmentCache::store(ImageId image_id, const Image& image) const {
  // Write then rename so an interrupted run never leaves a partial image.
  const auto final_path = image_path(image_id);
  const auto tmp = final_path.string() + ".tmp";
  write_image(image, tmp);
  std::filesystem::rename(tmp, final_path);
}

Manifest AugmentCache::read_manifest() const {
  Manifest m;
  std::ifstream in(method_dir() / "manifest.csv");
  if (!in) return m;
  std::string line;
  std::getline(in, line);
  m.complete = line == "# status=complete";
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != 5) throw ParseError("malformed manifest row '" + line + "'");
    m.rows.push_back({std::stoll(f[0]), f[1], std::stoull(f[2]), f[3], f[4]});
  }
  return m;
}

void AugmentCache::write_manifest(const Manifest& manifest) const {
  std::filesystem::create_directories(method_dir());
  const auto path = method_dir() / "manifest.csv";
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    out << (manifest.complete ? "# status=complete\n" : "# status=incomplete\n");
    out << "image_id,kind,seed,mask_file,prompt\n";
    for (const auto& r : manifest.rows)
      out << r.image_id << ',' << csv::quote(r.kind) << ',' << r.seed << ','
          << csv::quote(r.mask_file) << ',' << csv::quote(r.prompt) << '\n';
    if (!out) throw IoError("cannot write manifest " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace occaug
