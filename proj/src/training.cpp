// SPDX-License-Identifier: Apache-2.0
#include "occaug/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "bytes.hpp"
#include "csv.hpp"
#include "occaug/error.hpp"
#include "occaug/rng.hpp"

namespace occaug {

// ---------------------------------------------------------------------------
// Loss

void LossWeights::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0))
    throw ValidationError("loss weights must be non-negative (alpha=" + format_double(alpha) +
                          ", beta=" + format_double(beta) + ")");
  if (alpha + beta <= 0.0) throw ValidationError("alpha + beta must be positive");
}

namespace {

void check_target(const LabelWeights& target, std::size_t num_classes) {
  double sum = 0.0;
  for (const auto& cw : target) {
    if (cw.label < 0 || static_cast<std::size_t>(cw.label) >= num_classes)
      throw ValidationError("label " + std::to_string(cw.label) + " outside " +
                            std::to_string(num_classes) + " classes");
    if (cw.weight < 0.0) throw ValidationError("negative label weight");
    sum += cw.weight;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw ValidationError("label weights sum to " + format_double(sum) + ", expected 1");
}

double log_sum_exp(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - m);
  return m + std::log(z);
}

}  // namespace

double soft_cross_entropy(std::span<const double> logits, const LabelWeights& target) {
  if (logits.empty()) throw ValidationError("cross-entropy of empty logits");
  check_target(target, logits.size());
  const double lse = log_sum_exp(logits);
  double loss = 0.0;
  for (const auto& cw : target) loss += cw.weight * (lse - logits[static_cast<std::size_t>(cw.label)]);
  return loss;
}

LossResult combined_loss_with_grad(const Matrix& image_logits,
                                   std::span<const LabelWeights> image_targets,
                                   const Matrix& mask_logits, std::span<const int> mask_labels,
                                   const LossWeights& weights) {
  weights.validate();
  if (static_cast<std::size_t>(image_logits.rows) != image_targets.size())
    throw ValidationError("image batch has " + std::to_string(image_logits.rows) +
                          " logit rows but " + std::to_string(image_targets.size()) + " targets");
  if (static_cast<std::size_t>(mask_logits.rows) != mask_labels.size())
    throw ValidationError("mask batch has " + std::to_string(mask_logits.rows) +
                          " logit rows but " + std::to_string(mask_labels.size()) + " labels");
  LossResult r;
  r.grad_image_logits = Matrix(image_logits.rows, image_logits.cols);
  r.grad_mask_logits = Matrix(mask_logits.rows, mask_logits.cols);

  double image_sum = 0.0;
  for (int i = 0; i < image_logits.rows; ++i) {
    const auto row = image_logits.row(i);
    image_sum += soft_cross_entropy(row, image_targets[static_cast<std::size_t>(i)]);
    const auto p = softmax(row);
    auto g = r.grad_image_logits.row(i);
    const double scale = weights.alpha / image_logits.rows;
    for (std::size_t k = 0; k < p.size(); ++k) g[k] = scale * p[k];
    for (const auto& cw : image_targets[static_cast<std::size_t>(i)])
      g[static_cast<std::size_t>(cw.label)] -= scale * cw.weight;
  }
  double mask_sum = 0.0;
  for (int i = 0; i < mask_logits.rows; ++i) {
    const auto row = mask_logits.row(i);
    const int label = mask_labels[static_cast<std::size_t>(i)];
    mask_sum += soft_cross_entropy(row, one_hot(label));
    const auto p = softmax(row);
    auto g = r.grad_mask_logits.row(i);
    const double scale = weights.beta / mask_logits.rows;
    for (std::size_t k = 0; k < p.size(); ++k) g[k] = scale * p[k];
    g[static_cast<std::size_t>(label)] -= scale;
  }
  r.image_term = image_logits.rows ? image_sum / image_logits.rows : 0.0;
  r.mask_term = mask_logits.rows ? mask_sum / mask_logits.rows : 0.0;
  r.loss = weights.alpha * r.image_term + weights.beta * r.mask_term;
  return r;
}

double combined_loss(const Matrix& image_logits, std::span<const LabelWeights> image_targets,
                     const Matrix& mask_logits, std::span<const int> mask_labels,
                     const LossWeights& weights) {
  return combined_loss_with_grad(image_logits, image_targets, mask_logits, mask_labels, weights)
      .loss;
}

int argmax(std::span<const double> values) {
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  return best;
}

// ---------------------------------------------------------------------------
// Configuration

std::string augmentation_name(const std::optional<AugmentationKind>& kind) {
  return kind ? std::string(kind_name(*kind)) : "none";
}

std::optional<AugmentationKind> parse_augmentation(std::string_view name) {
  if (name == "none") return std::nullopt;
  return parse_kind(name);
}

void TrainConfig::validate() const {
  if (batch_size <= 0) throw ValidationError("batch_size must be positive");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw ValidationError("learning_rate must be a finite non-negative number");
  if (epochs <= 0) throw ValidationError("epochs must be positive");
  loss.validate();
  if (feature_dim <= 0) throw ValidationError("feature_dim must be positive");
  if (pool <= 0) throw ValidationError("pool must be positive");
  if (projection_dim < 0) throw ValidationError("projection_dim must be non-negative");
  if (mask_grid <= 0) throw ValidationError("mask_grid must be positive");
  if (timestep < 0) throw ValidationError("timestep must be non-negative");
  if (tap.empty()) throw ValidationError("tap must be named");
}

const std::set<std::string, std::less<>>& TrainConfig::keys() {
  static const std::set<std::string, std::less<>> k{
      "batch_size", "learning_rate", "epochs", "seed",        "augmentation",
      "alpha",      "beta",          "backbone", "fusion",    "feature_dim",
      "pool",       "projection_dim", "mask_grid", "timestep", "tap"};
  return k;
}

KeyValues TrainConfig::to_key_values() const {
  return {{"batch_size", std::to_string(batch_size)},
          {"learning_rate", format_double(learning_rate)},
          {"epochs", std::to_string(epochs)},
          {"seed", std::to_string(seed)},
          {"augmentation", augmentation_name(augmentation)},
          {"alpha", format_double(loss.alpha)},
          {"beta", format_double(loss.beta)},
          {"backbone", backbone},
          {"fusion", fusion ? "true" : "false"},
          {"feature_dim", std::to_string(feature_dim)},
          {"pool", std::to_string(pool)},
          {"projection_dim", std::to_string(projection_dim)},
          {"mask_grid", std::to_string(mask_grid)},
          {"timestep", std::to_string(timestep)},
          {"tap", tap}};
}

TrainConfig TrainConfig::from_key_values(const KeyValues& values, std::string_view source) {
  reject_unknown_keys(values, keys(), source);
  TrainConfig c;
  auto get = [&](const char* key) -> const std::string* {
    const auto it = values.find(key);
    return it == values.end() ? nullptr : &it->second;
  };
  auto as_int = [&](const std::string& v, const char* key) {
    const auto n = parse_int(v, key);
    if (n < INT32_MIN || n > INT32_MAX) throw ValidationError(std::string(key) + " out of range");
    return static_cast<int>(n);
  };
  if (auto v = get("batch_size")) c.batch_size = as_int(*v, "batch_size");
  if (auto v = get("learning_rate")) c.learning_rate = parse_double(*v, "learning_rate");
  if (auto v = get("epochs")) c.epochs = as_int(*v, "epochs");
  if (auto v = get("seed")) c.seed = parse_uint(*v, "seed");
  if (auto v = get("augmentation")) c.augmentation = parse_augmentation(*v);
  if (auto v = get("alpha")) c.loss.alpha = parse_double(*v, "alpha");
  if (auto v = get("beta")) c.loss.beta = parse_double(*v, "beta");
  if (auto v = get("backbone")) c.backbone = *v;
  if (auto v = get("fusion")) c.fusion = parse_bool(*v, "fusion");
  if (auto v = get("feature_dim")) c.feature_dim = as_int(*v, "feature_dim");
  if (auto v = get("pool")) c.pool = as_int(*v, "pool");
  if (auto v = get("projection_dim")) c.projection_dim = as_int(*v, "projection_dim");
  if (auto v = get("mask_grid")) c.mask_grid = as_int(*v, "mask_grid");
  if (auto v = get("timestep")) c.timestep = as_int(*v, "timestep");
  if (auto v = get("tap")) c.tap = *v;
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Mixture

TrainingMixture::TrainingMixture(std::vector<SourceImage> sources, LabelTable labels,
                                 std::optional<AugmentationKind> kind, std::uint64_t seed,
                                 const MixtureOptions& options)
    : sources_(std::move(sources)), labels_(std::move(labels)), kind_(kind), seed_(seed) {
  if (sources_.empty()) throw ValidationError("training mixture needs at least one image");
  const Image& first = *sources_.front().image;
  width_ = first.width();
  height_ = first.height();
  channels_ = first.channels();
  for (const auto& s : sources_) {
    if (!s.image) throw ValidationError("image " + std::to_string(s.image_id) + " is not loaded");
    if (s.image->width() != width_ || s.image->height() != height_ ||
        s.image->channels() != channels_)
      throw ValidationError("image " + std::to_string(s.image_id) +
                            " differs in size from the first training image");
    if (s.label < 0 || s.label >= labels_.size())
      throw ValidationError("image " + std::to_string(s.image_id) + " has label " +
                            std::to_string(s.label) + " outside the label table");
    if (kind_ && !s.plan)
      throw ValidationError("image " + std::to_string(s.image_id) +
                            " has no occlusion plan; run `occlusion-aug prepare` first");
    if (s.plan && (s.plan->composite.width() != width_ || s.plan->composite.height() != height_))
      throw ValidationError("plan for image " + std::to_string(s.image_id) +
                            " does not match the image size");
  }
  empty_mask_ = std::make_shared<const BinaryMask>(width_, height_);

  if (!kind_ || *kind_ == AugmentationKind::CutMix) return;
  std::optional<AugmentCache> cache;
  if (options.cache_root) cache.emplace(*options.cache_root, *kind_);
  fixed_augmented_.resize(sources_.size());
  for (std::size_t i = 0; i < sources_.size(); ++i) {
    const SourceImage& s = sources_[i];
    if (cache) {
      if (auto img = cache->load(s.image_id)) {
        if (!img->same_shape(*s.image))
          throw ValidationError("cached " + std::string(kind_name(*kind_)) + " image for " +
                                std::to_string(s.image_id) + " has the wrong size");
        fixed_augmented_[i] = std::make_shared<const Image>(std::move(*img));
        continue;
      }
    }
    switch (*kind_) {
      case AugmentationKind::BlackOut:
        fixed_augmented_[i] =
            std::make_shared<const Image>(black_out_pixels(*s.image, s.plan->composite));
        break;
      case AugmentationKind::ReplaceParts: {
        const auto& donor = *sources_[donor_index(sources_.size(), i, seed_)].image;
        fixed_augmented_[i] = std::make_shared<const Image>(
            replace_parts(*s.image, s.plan->composite, donor, s.label).image);
        break;
      }
      case AugmentationKind::SDInpaint: {
        if (!options.backend)
          throw ValidationError(
              "no cached sd-inpaint image for image " + std::to_string(s.image_id) +
              (options.cache_root ? " under " + cache->method_dir().string() : std::string()) +
              " and no backend given; run `occlusion-aug augment --method sd-inpaint` first");
        fixed_augmented_[i] = std::make_shared<const Image>(
            inpaint_augment(*s.image, *s.plan, s.class_name, s.label, *options.backend,
                            augmentation_seed(seed_, s.image_id), options.inpaint_steps)
                .image);
        break;
      }
      case AugmentationKind::CutMix:
        break;
    }
  }
}

TrainingSample TrainingMixture::real_sample(std::size_t i) const {
  const SourceImage& s = sources_[i];
  return {s.image_id, s.label, false, s.image, one_hot(s.label), empty_mask_};
}

TrainingSample TrainingMixture::augmented_sample(std::size_t i, int epoch) const {
  const SourceImage& s = sources_[i];
  auto mask = std::shared_ptr<const BinaryMask>(s.plan, &s.plan->composite);
  if (*kind_ != AugmentationKind::CutMix)
    return {s.image_id, s.label, true, fixed_augmented_[i], one_hot(s.label), mask};
  const std::uint64_t stream = mix_seed({seed_, static_cast<std::uint64_t>(epoch), i, 0xC0u});
  const std::size_t partner = donor_index(sources_.size(), i, stream);
  const SourceImage& b = sources_[partner];
  AugmentedSample mixed = cutmix(*s.image, s.label, *b.image, b.label, splitmix64(stream));
  return {s.image_id, s.label, true, std::make_shared<const Image>(std::move(mixed.image)),
          std::move(mixed.label_weights), mask};
}

std::vector<TrainingSample> TrainingMixture::epoch(int epoch) const {
  const std::size_t s = sources_.size();
  std::vector<std::size_t> order(epoch_size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed({seed_, static_cast<std::uint64_t>(epoch), 0xE0u}));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::vector<TrainingSample> out;
  out.reserve(order.size());
  for (std::size_t k : order)
    out.push_back(k < s ? real_sample(k) : augmented_sample(k - s, epoch));
  return out;
}

TrainingMixture build_training_mixture(std::vector<SourceImage> sources, LabelTable labels,
                                       std::optional<AugmentationKind> kind, std::uint64_t seed,
                                       const MixtureOptions& options) {
  return TrainingMixture(std::move(sources), std::move(labels), kind, seed, options);
}

TrainingMixture build_training_mixture(const PartDataset& store,
                                       std::optional<AugmentationKind> kind,
                                       const std::filesystem::path& plan_dir, std::uint64_t seed,
                                       const MixtureOptions& options) {
  std::vector<SourceImage> sources;
  sources.reserve(store.size());
  for (const auto& entry : store.entries()) {
    SourceImage s;
    s.image_id = entry.image.image_id;
    s.label = entry.image.class_label;
    s.class_name = entry.image.class_name;
    s.image = std::make_shared<const Image>(read_image(entry.image.path));
    if (kind) {
      const auto path = plan_path(plan_dir, s.image_id);
      if (!std::filesystem::exists(path))
        throw ValidationError("no occlusion plan for image " + std::to_string(s.image_id) +
                              " (expected " + path.string() + "); run `occlusion-aug prepare`");
      s.plan = std::make_shared<const OcclusionPlan>(read_plan_file(path));
    }
    sources.push_back(std::move(s));
  }
  return TrainingMixture(std::move(sources), store.labels(), kind, seed, options);
}

// ---------------------------------------------------------------------------
// Training

std::vector<double> diffusion_features(GenerativeBackend& backend, const Image& image,
                                       int timestep, const std::string& tap) {
  FeatureRequest req;
  req.image = image;
  req.timestep = timestep;
  req.tap = tap;
  return pool_features(backend.extract_features(req));
}

namespace {

int dominant_label(const LabelWeights& w) {
  int best = w.front().label;
  double best_w = w.front().weight;
  for (const auto& cw : w)
    if (cw.weight > best_w || (cw.weight == best_w && cw.label < best)) {
      best = cw.label;
      best_w = cw.weight;
    }
  return best;
}

std::uint64_t image_key(const Image& image) {
  const auto b = image.bytes();
  std::uint64_t h = fnv1a(b.data(), b.size());
  return mix_seed({h, static_cast<std::uint64_t>(image.width()),
                   static_cast<std::uint64_t>(image.height()),
                   static_cast<std::uint64_t>(image.channels())});
}

class FeatureMemo {
 public:
  FeatureMemo(GenerativeBackend* backend, int timestep, std::string tap)
      : backend_(backend), timestep_(timestep), tap_(std::move(tap)) {}

  const std::vector<double>& get(const Image& image) {
    const auto key = image_key(image);
    auto it = memo_.find(key);
    if (it == memo_.end())
      it = memo_.emplace(key, diffusion_features(*backend_, image, timestep_, tap_)).first;
    return it->second;
  }

 private:
  GenerativeBackend* backend_;
  int timestep_;
  std::string tap_;
  std::unordered_map<std::uint64_t, std::vector<double>> memo_;
};

}  // namespace

RunCheckpoint train(const TrainConfig& config, const TrainingMixture& mixture,
                    GenerativeBackend* backend, const EpochCallback& on_epoch) {
  config.validate();
  if (config.augmentation != mixture.kind())
    throw ValidationError("config augmentation '" + augmentation_name(config.augmentation) +
                          "' does not match the mixture's '" +
                          augmentation_name(mixture.kind()) + "'");
  RunCheckpoint run;
  run.config = config;
  run.labels = mixture.labels();

  ModelSpec spec;
  spec.backbone = config.backbone;
  spec.width = mixture.width();
  spec.height = mixture.height();
  spec.channels = mixture.channels();
  spec.num_classes = mixture.labels().size();
  spec.feature_dim = config.feature_dim;
  spec.pool = config.pool;
  spec.fusion = config.fusion;
  spec.projection_dim = config.projection_dim;
  spec.mask_grid = config.mask_grid;

  std::optional<FeatureMemo> memo;
  std::uint64_t checksum = 0;
  if (config.fusion) {
    if (!backend)
      throw ValidationError("fusion is enabled but no generative backend was given (--backend)");
    const CapabilityReport caps = backend->capabilities();
    const auto tap = std::find_if(caps.taps.begin(), caps.taps.end(),
                                  [&](const TapInfo& t) { return t.name == config.tap; });
    if (tap == caps.taps.end())
      throw CapabilityError("backend " + caps.backend + " has no feature tap '" + config.tap + "'");
    spec.diffusion_dim = tap->channels;
    run.backend_version = caps.version;
    checksum = backend->parameter_checksum();
    memo.emplace(backend, config.timestep, config.tap);
  }
  run.model = Model(spec, config.seed);
  const Model& model = run.model;
  const int classes = spec.num_classes;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto samples = mixture.epoch(epoch - 1);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    int step = 0;
    for (std::size_t start = 0; start < samples.size(); start += config.batch_size, ++step) {
      const std::size_t end = std::min(samples.size(), start + config.batch_size);
      const int n = static_cast<int>(end - start);
      Matrix image_logits(n, classes);
      std::vector<Model::Trace> traces(static_cast<std::size_t>(n));
      std::vector<LabelWeights> targets;
      std::vector<std::size_t> mask_rows;
      std::vector<int> mask_labels;
      for (int i = 0; i < n; ++i) {
        const TrainingSample& s = samples[start + i];
        std::span<const double> ld;
        if (memo) ld = memo->get(*s.image);
        const auto logits = model.image_logits(*s.image, ld, &traces[static_cast<std::size_t>(i)]);
        std::copy(logits.begin(), logits.end(), image_logits.row(i).begin());
        targets.push_back(s.label_weights);
        if (argmax(logits) == dominant_label(s.label_weights)) ++correct;
        if (s.augmented) {
          mask_rows.push_back(start + i);
          mask_labels.push_back(s.label);
        }
      }
      Matrix mask_logits(static_cast<int>(mask_rows.size()), classes);
      for (std::size_t j = 0; j < mask_rows.size(); ++j) {
        const auto logits = model.mask_logits(*samples[mask_rows[j]].mask);
        std::copy(logits.begin(), logits.end(), mask_logits.row(static_cast<int>(j)).begin());
      }
      const LossResult r =
          combined_loss_with_grad(image_logits, targets, mask_logits, mask_labels, config.loss);
      if (!std::isfinite(r.loss))
        throw Error("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                    std::to_string(step) + "; lower learning_rate (currently " +
                    format_double(config.learning_rate) + ")");
      loss_sum += r.loss * n;

      Model grad = model.zeros_like();
      for (int i = 0; i < n; ++i)
        model.backward_image(traces[static_cast<std::size_t>(i)], r.grad_image_logits.row(i), grad);
      for (std::size_t j = 0; j < mask_rows.size(); ++j)
        model.backward_mask(*samples[mask_rows[j]].mask, r.grad_mask_logits.row(static_cast<int>(j)),
                            grad);
      run.model.sgd_step(grad, config.learning_rate);
    }
    if (memo && backend->parameter_checksum() != checksum)
      throw BackendError("generative backend parameters changed during epoch " +
                         std::to_string(epoch) + "; the backend must stay frozen");
    const EpochMetrics m{epoch, loss_sum / static_cast<double>(samples.size()),
                         static_cast<double>(correct) / static_cast<double>(samples.size())};
    run.metrics.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  return run;
}

// ---------------------------------------------------------------------------
// Checkpoint

namespace {

constexpr std::string_view kParamMagic = "OCCK";

KeyValues spec_to_key_values(const ModelSpec& s) {
  return {{"backbone", s.backbone},
          {"width", std::to_string(s.width)},
          {"height", std::to_string(s.height)},
          {"channels", std::to_string(s.channels)},
          {"num_classes", std::to_string(s.num_classes)},
          {"feature_dim", std::to_string(s.feature_dim)},
          {"pool", std::to_string(s.pool)},
          {"fusion", s.fusion ? "true" : "false"},
          {"diffusion_dim", std::to_string(s.diffusion_dim)},
          {"projection_dim", std::to_string(s.projection_dim)},
          {"mask_grid", std::to_string(s.mask_grid)}};
}

ModelSpec spec_from_key_values(const KeyValues& kv, std::string_view source) {
  reject_unknown_keys(kv,
                      {"backbone", "width", "height", "channels", "num_classes", "feature_dim",
                       "pool", "fusion", "diffusion_dim", "projection_dim", "mask_grid"},
                      source);
  auto need = [&](const char* key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw ParseError(std::string(source) + ": missing key " + key);
    return it->second;
  };
  auto i = [&](const char* key) { return static_cast<int>(parse_int(need(key), key)); };
  ModelSpec s;
  s.backbone = need("backbone");
  s.width = i("width");
  s.height = i("height");
  s.channels = i("channels");
  s.num_classes = i("num_classes");
  s.feature_dim = i("feature_dim");
  s.pool = i("pool");
  s.fusion = parse_bool(need("fusion"), "fusion");
  s.diffusion_dim = i("diffusion_dim");
  s.projection_dim = i("projection_dim");
  s.mask_grid = i("mask_grid");
  s.validate();
  return s;
}

}  // namespace

void RunCheckpoint::save(const std::filesystem::path& dir) const {
  bytes::Writer w;
  w.raw(kParamMagic);
  w.u32(1);
  const auto params = model.parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.u64(p.size());
    for (double v : p) w.f64(v);
  }
  write_text_file(dir / "parameters.bin", w.take());

  KeyValues cfg = config.to_key_values();
  write_text_file(dir / "config.txt", format_key_values(cfg));
  KeyValues m = spec_to_key_values(model.spec());
  if (!backend_version.empty()) m["backend_version"] = backend_version;
  write_text_file(dir / "model.txt", format_key_values(m));
  labels.write_csv(dir / "labels.csv");

  std::string csv = "epoch,loss,top1\n";
  for (const auto& e : metrics)
    csv += std::to_string(e.epoch) + "," + format_double(e.loss) + "," + format_double(e.top1) +
           "\n";
  write_text_file(dir / "metrics.csv", csv);
}

RunCheckpoint RunCheckpoint::load(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw IoError("checkpoint directory not found: " + dir.string());
  RunCheckpoint run;
  run.config =
      TrainConfig::from_key_values(read_key_values(dir / "config.txt"), (dir / "config.txt").string());
  KeyValues m = read_key_values(dir / "model.txt");
  if (auto it = m.find("backend_version"); it != m.end()) {
    run.backend_version = it->second;
    m.erase(it);
  }
  const ModelSpec spec = spec_from_key_values(m, (dir / "model.txt").string());
  run.labels = LabelTable::read_csv(dir / "labels.csv");
  if (run.labels.size() != spec.num_classes)
    throw ValidationError("checkpoint label table has " + std::to_string(run.labels.size()) +
                          " classes, model expects " + std::to_string(spec.num_classes));
  run.model = Model(spec, run.config.seed);

  const std::string blob = read_text_file(dir / "parameters.bin");
  bytes::Reader r(blob);
  if (r.raw(4) != kParamMagic) throw ParseError("parameters.bin: bad magic");
  if (const auto v = r.u32(); v != 1)
    throw ParseError("parameters.bin: unsupported version " + std::to_string(v));
  auto params = run.model.parameters();
  if (r.u32() != params.size()) throw ParseError("parameters.bin: block count mismatch");
  for (auto& p : params) {
    if (r.u64() != p.size()) throw ParseError("parameters.bin: block size mismatch");
    for (double& v : p) v = r.f64();
  }
  if (!r.done()) throw ParseError("parameters.bin: trailing bytes");

  const std::string csv = read_text_file(dir / "metrics.csv");
  std::size_t pos = csv.find('\n');
  if (csv.substr(0, pos) != "epoch,loss,top1") throw ParseError("metrics.csv: bad header");
  while (pos != std::string::npos && pos + 1 < csv.size()) {
    const std::size_t next = csv.find('\n', pos + 1);
    const std::string line = csv.substr(pos + 1, next - pos - 1);
    pos = next;
    if (line.empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != 3) throw ParseError("metrics.csv: expected 3 fields in '" + line + "'");
    run.metrics.push_back({static_cast<int>(parse_int(f[0], "epoch")), parse_double(f[1], "loss"),
                           parse_double(f[2], "top1")});
  }
  return run;
}

}  // namespace occaug
