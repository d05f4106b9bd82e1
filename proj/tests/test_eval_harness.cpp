// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <fstream>
#include <random>

#include "occaug/error.hpp"
#include "occaug/eval_harness.hpp"
#include "occaug/occlusion.hpp"
#include "test_support.hpp"

using namespace occaug;

namespace {

// Label is in the top k when fewer than k classes outrank it.
bool oracle_in_top_k(std::span<const double> z, int label, int k) {
  int ahead = 0;
  for (int c = 0; c < static_cast<int>(z.size()); ++c) {
    if (c == label) continue;
    const double a = z[static_cast<std::size_t>(c)], b = z[static_cast<std::size_t>(label)];
    if (a > b || (a == b && c < label)) ++ahead;
  }
  return ahead < k;
}

struct Fixture {
  std::vector<SourceImage> sources;
  std::vector<EvalImage> images;
  RunCheckpoint run;
};

// A small trained checkpoint over 3 classes of 16x16 images.
Fixture make_fixture(bool fusion = false, GenerativeBackend* backend = nullptr) {
  std::mt19937_64 gen(81);
  Fixture f;
  const std::vector<std::uint8_t> tint{40, 130, 220};
  for (int i = 0; i < 18; ++i) {
    const int label = i % 3;
    auto img = std::make_shared<Image>(testing::random_image(gen, 16, 16));
    for (auto& b : img->plane(label)) b = static_cast<std::uint8_t>((b + tint[static_cast<std::size_t>(label)]) / 2);
    f.sources.push_back({i + 1, label, "c" + std::to_string(label), img, nullptr});
    f.images.push_back({i + 1, "c" + std::to_string(label), img});
  }
  const TrainingMixture mix =
      build_training_mixture(f.sources, LabelTable({"c0", "c1", "c2"}), std::nullopt, 1);
  TrainConfig c;
  c.batch_size = 6;
  c.learning_rate = 0.05;
  c.epochs = 5;
  c.feature_dim = 8;
  c.pool = 4;
  c.mask_grid = 4;
  c.fusion = fusion;
  f.run = train(c, mix, backend);
  return f;
}

EvalConfig small_eval() {
  EvalConfig cfg;
  cfg.patch_size = 4;
  cfg.seed = 7;
  cfg.threads = 1;
  return cfg;
}

int class_of(const RunCheckpoint& run, const std::string& name) { return *run.labels.find(name); }

}  // namespace

TEST_CASE("hand-enumerated top-k fixture") {
  // Rank of the true label per row: 1, 1, 2, 3.
  Matrix z(4, 3);
  const double rows[4][3] = {{3, 1, 2}, {0, 5, 1}, {3, 0, 2}, {2, 1, 3}};
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 3; ++c) z(r, c) = rows[r][c];
  const std::vector<int> labels{0, 1, 2, 1};
  CHECK(top_k_accuracy(z, labels, 1) == 0.5);
  CHECK(top_k_accuracy(z, labels, 2) == 0.75);
  CHECK(top_k_accuracy(z, labels, 3) == 1.0);
  CHECK(top_k_accuracy(z, labels, 7) == 1.0);
  CHECK_THROWS_AS(top_k_accuracy(z, labels, 0), ValidationError);
  const std::vector<int> bad{0, 3, 1, 1};
  CHECK_THROWS_AS(top_k_accuracy(z, bad, 1), ValidationError);
}

TEST_CASE("ties go to the smaller class index") {
  const std::vector<double> z{1, 1, 0};
  CHECK(in_top_k(z, 0, 1));
  CHECK_FALSE(in_top_k(z, 1, 1));
  CHECK(in_top_k(z, 1, 2));
}

TEST_CASE("one-hot logits give perfect top-1") {
  Matrix z(5, 4, 0.0);
  std::vector<int> labels;
  for (int r = 0; r < 5; ++r) {
    z(r, (r * 3) % 4) = 1.0;
    labels.push_back((r * 3) % 4);
  }
  CHECK(top_k_accuracy(z, labels, 1) == 1.0);
}

TEST_CASE("top-k agrees with the membership oracle on random fixtures") {
  std::mt19937_64 gen(82);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(gen() % 30), classes = 2 + static_cast<int>(gen() % 8);
    Matrix z(n, classes);
    // Coarse values so ties happen.
    for (auto& v : z.data) v = static_cast<double>(gen() % 4);
    std::vector<int> labels;
    for (int r = 0; r < n; ++r) labels.push_back(static_cast<int>(gen() % classes));
    for (int k = 1; k <= classes; ++k) {
      int hits = 0;
      for (int r = 0; r < n; ++r) {
        const bool o = oracle_in_top_k(z.row(r), labels[static_cast<std::size_t>(r)], k);
        CHECK(in_top_k(z.row(r), labels[static_cast<std::size_t>(r)], k) == o);
        hits += o;
      }
      CHECK(top_k_accuracy(z, labels, k) == static_cast<double>(hits) / n);
    }
  }
}

TEST_CASE("eval masks are shared, seeded and level-specific") {
  const EvalConfig cfg = small_eval();
  CHECK(eval_mask(cfg, 3, 0, 16, 16).empty_set());
  const BinaryMask m40 = eval_mask(cfg, 3, 40, 16, 16);
  CHECK(m40 == eval_mask(cfg, 3, 40, 16, 16));
  CHECK(m40 == simulate_patch_occlusion(16, 16, 40, eval_mask_seed(7, 3, 40), 4));
  CHECK(m40.popcount() == 6 * 16);
  CHECK_FALSE(eval_mask_seed(7, 3, 40) == eval_mask_seed(7, 4, 40));
  CHECK_FALSE(eval_mask_seed(7, 3, 40) == eval_mask_seed(7, 3, 60));
}

TEST_CASE("evaluation under occlusion") {
  const Fixture f = make_fixture();
  EvalConfig cfg = small_eval();
  const AccuracyRow row = evaluate_under_occlusion(f.run, f.images, cfg, "none", "pooled-mlp");
  REQUIRE(row.cells.size() == 5);
  CHECK(row.method == "none");

  // Level 0 is plain classification; other levels black out the shared mask.
  for (const AccuracyCell& cell : row.cells) {
    int top1 = 0, top5 = 0;
    double loss = 0;
    for (const auto& im : f.images) {
      const BinaryMask m = eval_mask(cfg, im.image_id, cell.level, 16, 16);
      const auto z = f.run.model.image_logits(black_out_pixels(*im.image, m), {});
      const int label = class_of(f.run, im.class_name);
      top1 += oracle_in_top_k(z, label, 1);
      top5 += oracle_in_top_k(z, label, 5);
      loss += measured_information_loss(m);
    }
    CAPTURE(cell.level);
    CHECK(cell.top1 == static_cast<double>(top1) / 18);
    CHECK(cell.top5 == static_cast<double>(top5) / 18);
    CHECK(cell.measured_loss == doctest::Approx(loss / 18));
  }
  CHECK(row.at_level(0)->measured_loss == 0.0);
  CHECK(row.at_level(0)->top5 == 1.0);

  // Thread count does not change the result.
  cfg.threads = 4;
  CHECK(evaluate_under_occlusion(f.run, f.images, cfg, "none", "pooled-mlp") == row);
}

TEST_CASE("a constant predictor scores the class frequency at full occlusion") {
  Fixture f = make_fixture();
  auto& layer = f.run.model.head().layer();
  layer.set_zero();
  layer.bias()[1] = 1.0;
  EvalConfig cfg = small_eval();
  cfg.levels = {0, 100};
  const AccuracyRow row = evaluate_under_occlusion(f.run, f.images, cfg, "const", "pooled-mlp");
  CHECK(row.at_level(100)->top1 == doctest::Approx(6.0 / 18));
  CHECK(row.at_level(100)->measured_loss == 1.0);
}

TEST_CASE("class filters") {
  const Fixture f = make_fixture();
  EvalConfig cfg = small_eval();
  cfg.levels = {0};
  std::vector<EvalImage> images = f.images;
  images.push_back({99, "unknown", f.images[0].image});
  CHECK_THROWS_AS(evaluate_under_occlusion(f.run, images, cfg, "m", "a"), ValidationError);
  cfg.intersect_classes = true;
  const AccuracyRow all = evaluate_under_occlusion(f.run, images, cfg, "m", "a");
  CHECK(all == evaluate_under_occlusion(f.run, f.images, cfg, "m", "a"));

  cfg.class_subset = std::vector<std::string>{"c1"};
  const AccuracyRow sub = evaluate_under_occlusion(f.run, images, cfg, "m", "a");
  int hits = 0;
  for (const auto& im : f.images)
    if (im.class_name == "c1") hits += argmax(f.run.model.image_logits(*im.image, {})) == 1;
  CHECK(sub.cells[0].top1 == static_cast<double>(hits) / 6);
}

TEST_CASE("fused checkpoints need a backend at evaluation time") {
  MockBackend backend;
  const Fixture f = make_fixture(true, &backend);
  EvalConfig cfg = small_eval();
  cfg.levels = {0, 60};
  CHECK_THROWS_AS(evaluate_under_occlusion(f.run, f.images, cfg, "m", "a"), ValidationError);
  cfg.fusion = true;
  cfg.backend = &backend;
  const AccuracyRow row = evaluate_under_occlusion(f.run, f.images, cfg, "m", "a");
  // The backend sees the occluded image.
  int hits = 0;
  for (const auto& im : f.images) {
    const Image occluded = black_out_pixels(*im.image, eval_mask(cfg, im.image_id, 60, 16, 16));
    const auto ld = diffusion_features(backend, occluded, 100, "mid");
    hits += argmax(f.run.model.image_logits(occluded, ld)) == class_of(f.run, im.class_name);
  }
  CHECK(row.at_level(60)->top1 == static_cast<double>(hits) / 18);
}

TEST_CASE("real-folder evaluation") {
  const Fixture f = make_fixture();
  const auto dir = testing::temp_dir("folder");
  CHECK_THROWS_AS(evaluate_real_folder(f.run, dir), ValidationError);

  // Ten images across the three known classes, plus an unknown class.
  int hits = 0;
  for (int i = 0; i < 10; ++i) {
    const auto& im = f.images[static_cast<std::size_t>(i)];
    std::filesystem::create_directories(dir / im.class_name);
    write_image(*im.image, dir / im.class_name / (std::to_string(i) + ".ppm"));
    hits += argmax(f.run.model.image_logits(*im.image, {})) == class_of(f.run, im.class_name);
  }
  std::filesystem::create_directories(dir / "zebra");
  write_image(*f.images[0].image, dir / "zebra" / "z.ppm");
  const FolderResult r = evaluate_real_folder(f.run, dir);
  CHECK(r.images == 10);
  CHECK(r.top1 == static_cast<double>(hits) / 10);
  CHECK(r.top5 == 1.0);
  CHECK(r.skipped_classes == std::vector<std::string>{"zebra"});

  // A single correctly classified image scores 1.0 / 1.0.
  const auto one = testing::temp_dir("folder_one");
  for (const auto& im : f.images)
    if (argmax(f.run.model.image_logits(*im.image, {})) == class_of(f.run, im.class_name)) {
      std::filesystem::create_directories(one / im.class_name);
      write_image(*im.image, one / im.class_name / "x.ppm");
      break;
    }
  const FolderResult single = evaluate_real_folder(f.run, one);
  CHECK(single.images == 1);
  CHECK(single.top1 == 1.0);
}

TEST_CASE("accuracy table validation") {
  AccuracyTable t;
  AccuracyRow row{"m", "a", {}};
  for (int level : standard_loss_levels()) row.cells.push_back({level, 0.5, 0.75, level / 100.0});
  t.add_row(row);
  AccuracyRow wrong_levels = row;
  wrong_levels.cells.pop_back();
  CHECK_THROWS_AS(t.add_row(wrong_levels), ValidationError);
  AccuracyRow inverted = row;
  inverted.cells[1].top1 = 0.9;
  CHECK_THROWS_AS(t.add_row(inverted), ValidationError);
}

TEST_CASE("reports round-trip and render") {
  AccuracyTable t;
  AccuracyRow a{"none", "pooled-mlp", {}}, b{"blackout+sd-features", "pooled-mlp", {}};
  for (int level : standard_loss_levels()) {
    a.cells.push_back({level, 0.9 - level / 200.0, 0.99, level / 100.0 + 0.001});
    b.cells.push_back({level, 0.8 - level / 300.0, 1.0, level / 100.0 - 0.002});
  }
  t.add_row(a);
  t.add_row(b);

  const std::string csv = format_csv(t);
  CHECK(csv.rfind("method,arch,level,top1,top5,measured_loss\n", 0) == 0);
  CHECK(parse_csv(csv) == t);
  CHECK_THROWS_AS(parse_csv("method,arch\nx,y\n"), ParseError);

  const std::string md = format_markdown(t);
  CHECK(md.find("| Method | Arch | 0% | 20% | 40% | 60% | 80% |") != std::string::npos);
  CHECK(md.find("90.00 / 99.00") != std::string::npos);

  const std::string svg = format_svg_plot(t);
  std::size_t series = 0;
  for (auto pos = svg.find("class=\"series\""); pos != std::string::npos;
       pos = svg.find("class=\"series\"", pos + 1))
    ++series;
  CHECK(series == 2);

  const auto dir = testing::temp_dir("report");
  const ReportFiles files = emit_report(t, dir, "acc");
  CHECK(std::filesystem::exists(files.csv));
  CHECK(std::filesystem::exists(files.markdown));
  CHECK(std::filesystem::exists(files.plot));
  CHECK(parse_csv(read_text_file(files.csv)) == t);
  CHECK_THROWS_AS(emit_report(AccuracyTable(), dir), ValidationError);
}

TEST_CASE("eval config validation") {
  EvalConfig cfg;
  cfg.levels = {0, 120};
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.levels = {0};
  cfg.top_k = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}
