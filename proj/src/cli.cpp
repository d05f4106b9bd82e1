// SPDX-License-Identifier: Apache-2.0
#include "occaug/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "occaug/annotation_store.hpp"
#include "occaug/augmenters.hpp"
#include "occaug/backend_wire.hpp"
#include "occaug/config.hpp"
#include "occaug/error.hpp"
#include "occaug/eval_harness.hpp"
#include "occaug/generative_backend.hpp"
#include "occaug/occlusion.hpp"
#include "occaug/toy.hpp"
#include "occaug/training.hpp"

namespace occaug {

namespace {

namespace fs = std::filesystem;

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

// One subcommand: its options are also the keys its --config file may set.
struct Command {
  CLI::App* app = nullptr;
  std::map<std::string, std::string> values;
  std::map<std::string, bool> flags;
  std::vector<std::string> checkpoints;
  std::set<std::string, std::less<>> extra_keys;

  void option(const std::string& key, const std::string& help) {
    app->add_option(dashed(key), values[key], help);
  }
  void flag(const std::string& key, const std::string& help) {
    app->add_flag(dashed(key), flags[key], help);
  }
};

class Settings {
 public:
  KeyValues kv;

  std::optional<std::string> get(std::string_view key) const {
    const auto it = kv.find(key);
    if (it == kv.end() || it->second.empty()) return std::nullopt;
    return it->second;
  }
  std::string require(std::string_view key) const {
    if (auto v = get(key)) return *v;
    throw ValidationError("missing " + dashed(std::string(key)) + " (flag or config key '" +
                          std::string(key) + "')");
  }
  fs::path path(std::string_view key) const { return fs::absolute(require(key)); }
  std::optional<fs::path> optional_path(std::string_view key) const {
    if (auto v = get(key)) return fs::absolute(*v);
    return std::nullopt;
  }
  std::uint64_t seed() const { return get("seed") ? parse_uint(*get("seed"), "seed") : 0; }
  int integer(std::string_view key, int fallback) const {
    if (auto v = get(key)) return static_cast<int>(parse_int(*v, key));
    return fallback;
  }
  bool boolean(std::string_view key) const {
    if (auto v = get(key)) return parse_bool(*v, key);
    return false;
  }
};

Settings resolve(const Command& cmd) {
  Settings s;
  const auto config = cmd.values.find("config");
  if (config != cmd.values.end() && !config->second.empty()) {
    std::set<std::string, std::less<>> allowed = cmd.extra_keys;
    for (const auto& [k, v] : cmd.values)
      if (k != "config") allowed.insert(k);
    for (const auto& [k, v] : cmd.flags) allowed.insert(k);
    if (cmd.app->get_option_no_throw("--checkpoint")) allowed.insert("checkpoint");
    s.kv = read_key_values(config->second);
    reject_unknown_keys(s.kv, allowed, config->second);
  }
  for (const auto& [k, v] : cmd.values)
    if (k != "config" && cmd.app->count(dashed(k)) > 0) s.kv[k] = v;
  for (const auto& [k, v] : cmd.flags)
    if (cmd.app->count(dashed(k)) > 0) s.kv[k] = v ? "true" : "false";
  if (!cmd.checkpoints.empty()) {
    std::string joined;
    for (const auto& c : cmd.checkpoints) joined += (joined.empty() ? "" : ",") + c;
    s.kv["checkpoint"] = joined;
  }
  return s;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

std::unique_ptr<GenerativeBackend> open_backend(const std::string& spec) {
  if (spec == "local") {
    std::error_code ec;
    const fs::path self = fs::read_symlink("/proc/self/exe", ec);
    if (ec) throw CapabilityError("cannot locate this executable for the local backend");
    return make_backend("local:'" + self.string() + "' serve-stdio");
  }
  return make_backend(spec);
}

fs::path cache_root(const Settings& s) {
  if (auto p = s.optional_path("cache")) return *p;
  if (const char* env = std::getenv(kCacheRootEnv); env && *env) return fs::absolute(env);
  return fs::absolute("occaug-cache");
}

std::optional<fs::path> explicit_cache_root(const Settings& s) {
  if (auto p = s.optional_path("cache")) return p;
  if (const char* env = std::getenv(kCacheRootEnv); env && *env) return fs::absolute(env);
  return std::nullopt;
}

fs::path images_root(const Settings& s, const fs::path& annotations) {
  if (auto p = s.optional_path("images_root")) return *p;
  return annotations.parent_path();
}

LoadOptions load_options(const Settings& s) {
  LoadOptions o;
  const std::string policy = s.get("policy").value_or("strict");
  if (policy == "strict")
    o.policy = OverlapPolicy::Strict;
  else if (policy == "lenient")
    o.policy = OverlapPolicy::Lenient;
  else
    throw ValidationError("--policy must be strict or lenient, got '" + policy + "'");
  return o;
}

// ---------------------------------------------------------------------------

int cmd_make_toy(const Settings& s, std::ostream& out) {
  ToyOptions o;
  o.seed = s.seed();
  o.train_count = s.integer("train_count", o.train_count);
  o.test_count = s.integer("test_count", o.test_count);
  o.size = s.integer("size", o.size);
  const ToyDataset ds = make_toy(s.path("out"), o);
  out << "train annotations: " << ds.train_annotations.string() << "\n"
      << "test annotations: " << ds.test_annotations.string() << "\n";
  return kExitOk;
}

int cmd_prepare(const Settings& s, std::ostream& out) {
  const fs::path annotations = s.path("annotations");
  const fs::path out_dir = s.path("out");
  const fs::path report_path = out_dir / "validation_report.txt";
  std::optional<PartDataset> ds;
  try {
    ds.emplace(load_part_dataset(images_root(s, annotations), annotations, load_options(s)));
  } catch (const ValidationError& e) {
    write_text_file(report_path, std::string(e.what()) + "\n");
    throw;
  }
  std::map<std::size_t, std::size_t> n_hist;
  double fraction_sum = 0.0;
  for (const auto& entry : ds->entries()) {
    const OcclusionPlan plan = select_part_combination(entry.parts);
    write_plan_file(plan_path(out_dir, plan.image_id), plan);
    ++n_hist[entry.parts.n()];
    fraction_sum += plan.occluded_fraction;
  }
  std::ostringstream summary;
  summary << "plans: " << ds->size() << "\n";
  summary << "mean_occluded_fraction: "
          << format_double(ds->size() ? fraction_sum / static_cast<double>(ds->size()) : 0.0)
          << "\n";
  for (const auto& [n, count] : n_hist) summary << "parts_" << n << ": " << count << "\n";
  write_text_file(out_dir / "summary.txt", summary.str());
  write_text_file(report_path, ds->report().describe() + "\n");
  out << summary.str();
  return kExitOk;
}

int cmd_augment(const Settings& s, std::ostream& out) {
  const AugmentationKind kind = parse_kind(s.require("method"));
  if (kind == AugmentationKind::CutMix)
    throw ValidationError("cutmix is resampled every epoch during training and has nothing to cache");
  const fs::path annotations = s.path("annotations");
  const fs::path plans = s.path("plans");
  const std::uint64_t seed = s.seed();
  const int steps = s.integer("steps", 0);
  const LabeledImages labeled = load_labeled_images(images_root(s, annotations), annotations);

  std::vector<const ImageRecord*> entries;
  for (const auto& rec : labeled.images)
    if (fs::exists(plan_path(plans, rec.image_id))) entries.push_back(&rec);
  if (entries.empty())
    throw ValidationError("no occlusion plans under " + plans.string() +
                          "; run `occlusion-aug prepare` first");

  std::unique_ptr<GenerativeBackend> backend;
  if (kind == AugmentationKind::SDInpaint) backend = open_backend(s.get("backend").value_or("mock"));

  const AugmentCache cache(cache_root(s), kind);
  Manifest manifest;
  std::size_t created = 0, existing = 0;
  try {
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const ImageRecord& rec = *entries[i];
      const fs::path plan_file = plan_path(plans, rec.image_id);
      ManifestRow row{rec.image_id, std::string(kind_name(kind)),
                      augmentation_seed(seed, rec.image_id), plan_file.filename().string(),
                      kind == AugmentationKind::SDInpaint ? inpaint_prompt(rec.class_name) : ""};
      if (cache.contains(rec.image_id)) {
        ++existing;
        manifest.rows.push_back(std::move(row));
        continue;
      }
      const Image image = read_image(rec.path);
      const OcclusionPlan plan = read_plan_file(plan_file);
      Image result;
      switch (kind) {
        case AugmentationKind::BlackOut:
          result = black_out_pixels(image, plan.composite);
          break;
        case AugmentationKind::ReplaceParts: {
          const ImageRecord& donor = *entries[donor_index(entries.size(), i, seed)];
          Image donor_image = read_image(donor.path);
          if (!donor_image.same_shape(image))
            donor_image = resize_nearest(donor_image, image.width(), image.height());
          result = replace_parts(image, plan.composite, donor_image, rec.class_label).image;
          break;
        }
        case AugmentationKind::SDInpaint:
          result = inpaint_augment(image, plan, rec.class_name, rec.class_label, *backend, row.seed,
                                   steps)
                       .image;
          break;
        case AugmentationKind::CutMix:
          break;
      }
      cache.store(rec.image_id, result);
      ++created;
      manifest.rows.push_back(std::move(row));
    }
  } catch (const Error&) {
    manifest.complete = false;
    cache.write_manifest(manifest);
    throw;
  }
  manifest.complete = true;
  const Manifest previous = cache.read_manifest();
  if (!(previous.complete && previous.rows == manifest.rows)) cache.write_manifest(manifest);
  out << "cache: " << cache.method_dir().string() << "\n"
      << "new: " << created << "\nexisting: " << existing << "\n";
  return kExitOk;
}

int cmd_train(const Settings& s, std::ostream& out) {
  KeyValues train_kv;
  for (const auto& [k, v] : s.kv)
    if (TrainConfig::keys().count(k)) train_kv[k] = v;
  if (auto m = s.get("method")) train_kv["augmentation"] = *m;
  const TrainConfig config = TrainConfig::from_key_values(train_kv, "train settings");

  const fs::path annotations = s.path("annotations");
  const fs::path out_dir = s.path("out");
  const PartDataset ds = load_part_dataset(images_root(s, annotations), annotations, load_options(s));

  std::unique_ptr<GenerativeBackend> backend;
  if (config.fusion || s.get("backend")) backend = open_backend(s.get("backend").value_or("mock"));
  MixtureOptions mo;
  mo.cache_root = explicit_cache_root(s);
  mo.backend = backend.get();
  mo.inpaint_steps = s.integer("steps", 0);
  const fs::path plans = config.augmentation ? s.path("plans") : fs::path();
  const TrainingMixture mixture =
      build_training_mixture(ds, config.augmentation, plans, config.seed, mo);

  const RunCheckpoint run = train(config, mixture, backend.get(), [&](const EpochMetrics& m) {
    out << "epoch " << m.epoch << " loss " << format_double(m.loss) << " top1 "
        << format_double(m.top1) << "\n";
    out.flush();
  });
  run.save(out_dir);
  out << "checkpoint: " << out_dir.string() << "\n";
  return kExitOk;
}

std::string method_label(const RunCheckpoint& run) {
  return augmentation_name(run.config.augmentation) +
         (run.model.spec().fusion ? "+sd-features" : "");
}

int cmd_eval(const Settings& s, std::ostream& out) {
  const auto checkpoints = split_list(s.require("checkpoint"));
  const fs::path annotations = s.path("annotations");
  const fs::path out_dir = s.path("out");
  EvalConfig cfg;
  cfg.seed = s.seed();
  cfg.patch_size = s.integer("patch_size", cfg.patch_size);
  cfg.threads = s.integer("threads", cfg.threads);
  cfg.top_k = s.integer("top_k", cfg.top_k);
  cfg.intersect_classes = s.boolean("intersect");
  if (auto levels = s.get("levels")) {
    cfg.levels.clear();
    for (const auto& l : split_list(*levels)) cfg.levels.push_back(static_cast<int>(parse_int(l, "levels")));
  }
  if (auto classes = s.get("classes")) cfg.class_subset = split_list(*classes);
  cfg.validate();

  const LabeledImages labeled = load_labeled_images(images_root(s, annotations), annotations);
  std::vector<EvalImage> images;
  for (const auto& rec : labeled.images)
    images.push_back({rec.image_id, rec.class_name, std::make_shared<const Image>(read_image(rec.path))});

  std::unique_ptr<GenerativeBackend> backend;
  AccuracyTable table(cfg.levels);
  for (const auto& dir : checkpoints) {
    const RunCheckpoint run = RunCheckpoint::load(fs::absolute(dir));
    EvalConfig c = cfg;
    c.fusion = run.model.spec().fusion;
    if (c.fusion) {
      if (!backend) backend = open_backend(s.get("backend").value_or("mock"));
      c.backend = backend.get();
    }
    table.add_row(evaluate_under_occlusion(run, images, c, method_label(run), run.config.backbone));
  }
  const ReportFiles files = emit_report(table, out_dir, s.get("stem").value_or("accuracy"));
  out << format_markdown(table) << "\n"
      << "csv: " << files.csv.string() << "\nmarkdown: " << files.markdown.string()
      << "\nplot: " << files.plot.string() << "\n";
  return kExitOk;
}

int cmd_eval_folder(const Settings& s, std::ostream& out) {
  const RunCheckpoint run = RunCheckpoint::load(s.path("checkpoint"));
  std::unique_ptr<GenerativeBackend> backend;
  if (run.model.spec().fusion) backend = open_backend(s.get("backend").value_or("mock"));
  const FolderResult r =
      evaluate_real_folder(run, s.path("folder"), backend.get(), s.integer("top_k", 5));
  out << "images: " << r.images << "\ntop1: " << format_double(r.top1)
      << "\ntop5: " << format_double(r.top5) << "\n";
  for (const auto& name : r.skipped_classes) out << "skipped unknown class: " << name << "\n";
  return kExitOk;
}

int cmd_capabilities(const Settings& s, std::ostream& out) {
  const auto backend = open_backend(s.get("backend").value_or("mock"));
  out << backend->capabilities().to_json() << "\n";
  return kExitOk;
}

int cmd_serve(const Settings& s, std::ostream& out) {
  const auto backend = open_backend(s.get("backend").value_or("mock"));
  wire::HttpServer server(*backend);
  const std::string host = s.get("host").value_or("127.0.0.1");
  const int port = server.bind(host, s.integer("port", 8080));
  out << "listening on " << host << ":" << port << "\n";
  out.flush();
  server.listen();
  return kExitOk;
}

int cmd_serve_stdio(const Settings& s) {
  const auto backend = open_backend(s.get("backend").value_or("mock"));
  wire::serve_stream(*backend, 0, 1);
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Part-occlusion augmentation toolkit", "occlusion-aug"};
  app.require_subcommand(1);
  std::map<std::string, Command> cmds;
  auto add = [&](const std::string& name, const std::string& help) -> Command& {
    Command& c = cmds[name];
    c.app = app.add_subcommand(name, help);
    c.option("config", "flat key = value file; flags override it");
    return c;
  };

  {
    Command& c = add("make-toy", "generate the synthetic shapes dataset");
    c.option("out", "output directory");
    c.option("seed", "generator seed");
    c.option("train_count", "training images (default 300)");
    c.option("test_count", "test images (default 90)");
    c.option("size", "image side in pixels (default 64)");
  }
  {
    Command& c = add("prepare", "validate part annotations and write occlusion plans");
    c.option("annotations", "annotation JSON");
    c.option("images_root", "directory file_name paths are relative to");
    c.option("out", "plan directory");
    c.option("policy", "strict (default) or lenient overlap handling");
  }
  {
    Command& c = add("augment", "fill the augmented-image cache");
    c.option("annotations", "annotation JSON");
    c.option("images_root", "directory file_name paths are relative to");
    c.option("plans", "plan directory from prepare");
    c.option("method", "blackout, replace-parts or sd-inpaint");
    c.option("backend", "mock, local or remote:<host>:<port>");
    c.option("cache", std::string("cache root (default $") + kCacheRootEnv + " or ./occaug-cache)");
    c.option("seed", "augmentation seed");
    c.option("steps", "inpainting steps (default: backend default)");
  }
  {
    Command& c = add("train", "train a model on real plus augmented images");
    c.option("annotations", "annotation JSON");
    c.option("images_root", "directory file_name paths are relative to");
    c.option("plans", "plan directory from prepare");
    c.option("policy", "strict (default) or lenient overlap handling");
    c.option("method", "none, blackout, cutmix, replace-parts or sd-inpaint");
    c.option("backend", "mock, local or remote:<host>:<port>");
    c.option("cache", "augmented-image cache root");
    c.option("seed", "training seed");
    c.option("steps", "inpainting steps on cache misses");
    c.option("out", "checkpoint directory");
    for (const auto& k : TrainConfig::keys()) c.extra_keys.insert(k);
  }
  {
    Command& c = add("eval", "accuracy under simulated patch occlusion");
    c.app->add_option("--checkpoint", c.checkpoints, "checkpoint directory (repeatable)");
    c.option("annotations", "test annotation JSON");
    c.option("images_root", "directory file_name paths are relative to");
    c.option("out", "report directory");
    c.option("seed", "mask seed");
    c.option("levels", "comma-separated information-loss levels (default 0,20,40,60,80)");
    c.option("patch_size", "occlusion patch side (default 16)");
    c.option("classes", "comma-separated class subset");
    c.flag("intersect", "skip images whose class the checkpoint does not know");
    c.option("backend", "backend for fused checkpoints");
    c.option("threads", "worker threads (default: all cores)");
    c.option("top_k", "second accuracy column k (default 5)");
    c.option("stem", "report file stem (default accuracy)");
  }
  {
    Command& c = add("eval-folder", "accuracy on a class_name/<image> folder");
    c.option("checkpoint", "checkpoint directory");
    c.option("folder", "image folder");
    c.option("backend", "backend for fused checkpoints");
    c.option("top_k", "second accuracy column k (default 5)");
  }
  {
    Command& c = add("capabilities", "print a backend's capability report");
    c.option("backend", "mock, local or remote:<host>:<port>");
  }
  {
    Command& c = add("serve", "serve a backend over HTTP");
    c.option("backend", "backend to expose (default mock)");
    c.option("host", "bind address (default 127.0.0.1)");
    c.option("port", "port, 0 for any (default 8080)");
  }
  {
    Command& c = add("serve-stdio", "serve a backend over stdin/stdout");
    c.option("backend", "backend to expose (default mock)");
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    for (auto& [name, cmd] : cmds) {
      if (!cmd.app->parsed()) continue;
      const Settings s = resolve(cmd);
      if (name == "make-toy") return cmd_make_toy(s, out);
      if (name == "prepare") return cmd_prepare(s, out);
      if (name == "augment") return cmd_augment(s, out);
      if (name == "train") return cmd_train(s, out);
      if (name == "eval") return cmd_eval(s, out);
      if (name == "eval-folder") return cmd_eval_folder(s, out);
      if (name == "capabilities") return cmd_capabilities(s, out);
      if (name == "serve") return cmd_serve(s, out);
      if (name == "serve-stdio") return cmd_serve_stdio(s);
    }
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}

}  // namespace occaug
