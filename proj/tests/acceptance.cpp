// SPDX-License-Identifier: Apache-2.0
// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "occaug/annotation_store.hpp"
#include "occaug/augmenters.hpp"
#include "occaug/cli.hpp"
#include "occaug/config.hpp"
#include "occaug/error.hpp"
#include "occaug/eval_harness.hpp"
#include "occaug/fusion_head.hpp"
#include "occaug/generative_backend.hpp"
#include "occaug/occlusion.hpp"
#include "occaug/training.hpp"
#include "test_support.hpp"

using namespace occaug;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

int cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (code != kExitOk) std::cerr << "command failed: " << args.front() << ": " << err.str();
  return code;
}

PartAnnotation rect_part(std::int64_t id, int x0, int y0, int x1, int y1, int w, int h) {
  return make_part(id,
                   PolygonGeometry{{{{double(x0), double(y0)},
                                     {double(x1), double(y0)},
                                     {double(x1), double(y1)},
                                     {double(x0), double(y1)}}}},
                   w, h);
}

// Exhaustive maximum over subsets of size ceil(n/2), smallest sorted id
// tuple on ties.
std::pair<std::size_t, std::vector<std::int64_t>> exhaustive(const PartSet& ps) {
  const std::size_t n = ps.parts.size(), k = (n + 1) / 2;
  std::vector<BinaryMask> masks;
  for (const auto& p : ps.parts) masks.push_back(rasterize_mask(p, ps.width, ps.height));
  std::size_t best = 0;
  std::vector<std::int64_t> best_ids;
  bool have = false;
  for (std::uint32_t bits = 0; bits < (1u << n); ++bits) {
    if (static_cast<std::size_t>(std::popcount(bits)) != k) continue;
    std::vector<std::int64_t> ids;
    std::size_t area = 0;
    for (int y = 0; y < ps.height; ++y)
      for (int x = 0; x < ps.width; ++x) {
        bool hit = false;
        for (std::size_t i = 0; i < n; ++i) hit = hit || ((bits >> i) & 1u && masks[i].get(x, y));
        area += hit;
      }
    for (std::size_t i = 0; i < n; ++i)
      if ((bits >> i) & 1u) ids.push_back(ps.parts[i].part_id);
    std::sort(ids.begin(), ids.end());
    if (!have || area > best || (area == best && ids < best_ids)) {
      best = area;
      best_ids = ids;
      have = true;
    }
  }
  return {best, best_ids};
}

Outcome criterion1() {
  const auto t0 = Clock::now();
  std::mt19937_64 gen(1001);
  int mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + gen() % 6;
    PartSet ps{trial, 48, 32, {}};
    std::vector<std::int64_t> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<std::int64_t>(10 * i + gen() % 10);
    std::shuffle(ids.begin(), ids.end(), gen);
    for (std::size_t i = 0; i < n; ++i) {
      const int sx = static_cast<int>(i % 3) * 16, sy = static_cast<int>(i / 3) * 16;
      const int w = 1 + static_cast<int>(gen() % 15), h = 1 + static_cast<int>(gen() % 15);
      const int x = sx + static_cast<int>(gen() % (16 - w + 1));
      const int y = sy + static_cast<int>(gen() % (16 - h + 1));
      ps.parts.push_back(rect_part(ids[i], x, y, x + w, y + h, 48, 32));
    }
    const OcclusionPlan plan = select_part_combination(ps);
    const auto [area, _] = exhaustive(ps);
    mismatches += plan.composite.popcount() != area;
  }
  // Constructed ties: equal-area parts, so the smallest ids must win.
  int tie_failures = 0;
  for (int trial = 0; trial < 12; ++trial) {
    const std::size_t n = 2 + trial % 5;
    PartSet ps{trial, 48, 32, {}};
    std::vector<std::int64_t> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<std::int64_t>(50 - 3 * i);
    std::shuffle(ids.begin(), ids.end(), gen);
    for (std::size_t i = 0; i < n; ++i) {
      const int sx = static_cast<int>(i % 3) * 16, sy = static_cast<int>(i / 3) * 16;
      ps.parts.push_back(rect_part(ids[i], sx, sy, sx + 5, sy + 2, 48, 32));
    }
    const auto expect = exhaustive(ps).second;
    tie_failures += select_part_combination(ps).selected_part_ids != expect;
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && tie_failures == 0 && secs < 10.0,
          "200 sets, " + std::to_string(mismatches) + " area mismatches; 12 ties, " +
              std::to_string(tie_failures) + " wrong; " + fmt(secs) + " s"};
}

Outcome criterion2() {
  double worst = 0.0;
  for (double target : {20.0, 40.0, 60.0, 80.0})
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const double got = measured_information_loss(simulate_patch_occlusion(224, 224, target, seed));
      worst = std::max(worst, std::abs(got - target / 100.0));
    }
  return {worst <= 0.012, "worst deviation " + fmt(100 * worst, 3) + " pp over 400 masks"};
}

Outcome criterion3() {
  std::mt19937_64 gen(1003);
  long violations = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int w = 8 + static_cast<int>(gen() % 56), h = 8 + static_cast<int>(gen() % 56);
    const Image img = testing::random_image(gen, w, h);
    const Image donor = testing::random_image(gen, w, h);
    const BinaryMask m = testing::random_mask(gen, w, h, 0.35);
    const Image bo = black_out(img, m, 0).image;
    const Image rp = replace_parts(img, m, donor, 0).image;
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const bool in = m.get(x, y);
          violations += bo.at(c, y, x) != (in ? 0 : img.at(c, y, x));
          violations += rp.at(c, y, x) != (in ? donor.at(c, y, x) : img.at(c, y, x));
        }
  }
  return {violations == 0, "50 fixtures, " + std::to_string(violations) + " pixel violations"};
}

Outcome criterion4() {
  std::mt19937_64 gen(1004);
  int failures = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const int w = 4 + static_cast<int>(gen() % 60), h = 4 + static_cast<int>(gen() % 60);
    const Image a = testing::random_image(gen, w, h), b = testing::random_image(gen, w, h);
    const AugmentedSample s = cutmix(a, 0, b, 1, seed);
    const CellRect r = *s.pasted_rect;
    const std::int64_t total = static_cast<std::int64_t>(w) * h;
    failures += !(s.lambda->denominator == total && s.lambda->numerator == total - r.area());
    double sum = 0;
    for (const auto& cw : s.label_weights) sum += cw.weight;
    failures += std::abs(sum - 1.0) > 1e-15;
  }
  const Image a(32, 32, 3, 10), b(32, 32, 3, 200);
  const AugmentedSample empty = cutmix_with_rect(a, 0, b, 1, {5, 5, 5, 5});
  const AugmentedSample full = cutmix_with_rect(a, 0, b, 1, {0, 0, 32, 32});
  const bool bounds = empty.image == a && empty.label_weights == one_hot(0) &&
                      empty.lambda->value() == 1.0 && full.image == b &&
                      full.label_weights == one_hot(1) && full.lambda->value() == 0.0;
  const bool example = cutmix_lambda({0, 0, 112, 112}, 224, 224) == MixRatio{37632, 50176};
  return {failures == 0 && bounds && example,
          "100 seeded draws, " + std::to_string(failures) + " failures; boundaries " +
              (bounds ? "ok" : "wrong") + "; 112x112 of 224x224 gives 37632/50176"};
}

Outcome criterion5() {
  std::mt19937_64 gen(1005);
  double worst_beta0 = 0, worst_alpha0 = 0;
  bool scaled = true;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + static_cast<int>(gen() % 6), m = 1 + static_cast<int>(gen() % 6), k = 3;
    Matrix z(n, k), mz(m, k);
    for (auto& v : z.data) v = std::normal_distribution<double>(0, 2)(gen);
    for (auto& v : mz.data) v = std::normal_distribution<double>(0, 2)(gen);
    std::vector<LabelWeights> t;
    std::vector<int> ml;
    auto ce = [](std::span<const double> row, int label) {
      double s = 0;
      for (double v : row) s += std::exp(v);
      return std::log(s) - row[static_cast<std::size_t>(label)];
    };
    double img = 0, msk = 0;
    for (int i = 0; i < n; ++i) {
      t.push_back(one_hot(static_cast<int>(gen() % k)));
      img += ce(z.row(i), t.back()[0].label);
    }
    for (int i = 0; i < m; ++i) {
      ml.push_back(static_cast<int>(gen() % k));
      msk += ce(mz.row(i), ml.back());
    }
    img /= n;
    msk /= m;
    worst_beta0 = std::max(worst_beta0, std::abs(combined_loss(z, t, mz, ml, {1.0, 0.0}) - img));
    worst_alpha0 = std::max(worst_alpha0, std::abs(combined_loss(z, t, mz, ml, {0.0, 1.0}) - msk));
    const double base = combined_loss(z, t, mz, ml, {0.75, 0.5});
    scaled = scaled && combined_loss(z, t, mz, ml, {1.5, 1.0}) == 2 * base &&
             combined_loss(z, t, mz, ml, {3.0, 2.0}) == 4 * base;
  }
  return {worst_beta0 < 1e-6 && worst_alpha0 < 1e-6 && scaled,
          "beta=0 error " + fmt(worst_beta0, 12) + ", alpha=0 error " + fmt(worst_alpha0, 12) +
              ", scaling " + (scaled ? "exact" : "inexact")};
}

// Shared toy dataset with plans.
struct ToyRun {
  fs::path root;
  bool ready = false;
};

ToyRun& toy() {
  static ToyRun run;
  if (run.ready) return run;
  run.root = fs::temp_directory_path() / ("occaug_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(run.root);
  fs::create_directories(run.root);
  run.ready = cli({"make-toy", "--out", (run.root / "toy").string(), "--seed", "1"}) == kExitOk &&
              cli({"prepare", "--annotations", (run.root / "toy" / "train.json").string(), "--out",
                   (run.root / "plans").string()}) == kExitOk;
  write_text_file(run.root / "train.cfg", "epochs = 20\nlearning_rate = 0.05\nbatch_size = 32\n");
  return run;
}

Outcome criterion6() {
  ToyRun& t = toy();
  if (!t.ready) return {false, "toy dataset could not be prepared"};
  const PartDataset store = load_part_dataset(t.root / "toy", t.root / "toy" / "train.json");
  const TrainingMixture mix =
      build_training_mixture(store, AugmentationKind::BlackOut, t.root / "plans", 1);
  TrainConfig c;
  c.epochs = 1;
  c.batch_size = 32;
  c.learning_rate = 0.05;
  c.augmentation = AugmentationKind::BlackOut;
  c.fusion = true;
  MockBackend backend;
  const std::uint64_t before = backend.parameter_checksum();
  const RunCheckpoint run = train(c, mix, &backend);
  const std::uint64_t after = backend.parameter_checksum();
  char buf[80];
  std::snprintf(buf, sizeof buf, "checksum %016llx before, %016llx after",
                static_cast<unsigned long long>(before), static_cast<unsigned long long>(after));
  return {before == after && run.metrics.size() == 1,
          std::string(buf) + " one fused epoch over " + std::to_string(mix.epoch_size()) + " samples"};
}

Outcome criterion7() {
  std::mt19937_64 gen(1007);
  double worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    FusionHead head({8, 4, 6});
    for (auto p : head.projection().parameters())
      for (double& v : p) v = std::normal_distribution<double>(0, 0.7)(gen);
    ClassifierHead cls(6, 5);
    for (auto p : cls.layer().parameters())
      for (double& v : p) v = std::normal_distribution<double>(0, 0.7)(gen);
    auto lf = testing::random_vector(gen, 8);
    const auto ld = testing::random_vector(gen, 4);
    const int label = static_cast<int>(gen() % 5);
    auto loss = [&] {
      const auto z = cls.classify(head.fuse(lf, ld));
      double m = *std::max_element(z.begin(), z.end()), s = 0;
      for (double v : z) s += std::exp(v - m);
      return std::log(s) + m - z[static_cast<std::size_t>(label)];
    };
    const auto la = head.fuse(lf, ld);
    auto gz = softmax(cls.classify(la));
    gz[static_cast<std::size_t>(label)] -= 1.0;
    ClassifierHead gcls = cls.zeros_like();
    FusionHead ghead = head.zeros_like();
    std::vector<double> gla(6), glf(8);
    cls.backward(la, gz, gcls, gla);
    head.backward(lf, ld, gla, ghead, glf);
    auto check = [&](std::span<double> param, std::span<const double> grad) {
      for (std::size_t i = 0; i < param.size(); ++i) {
        // Five-point central stencil.
        const double keep = param[i], h = 1e-3;
        auto at = [&](double d) {
          param[i] = keep + d;
          return loss();
        };
        const double fd = (at(-2 * h) - 8 * at(-h) + 8 * at(h) - at(2 * h)) / (12 * h);
        param[i] = keep;
        worst = std::max(worst, std::abs(fd - grad[i]) /
                                    std::max(1e-6, std::abs(fd) + std::abs(grad[i])));
      }
    };
    const auto hp = head.projection().parameters();
    const auto hg = std::as_const(ghead.projection()).parameters();
    for (std::size_t b = 0; b < hp.size(); ++b) check(hp[b], hg[b]);
    const auto cp = cls.layer().parameters();
    const auto cg = std::as_const(gcls.layer()).parameters();
    for (std::size_t b = 0; b < cp.size(); ++b) check(cp[b], cg[b]);
    check(lf, glf);
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "worst relative error %.2e over 20 instances", worst);
  return {worst < 1e-4, buf};
}

// Child mode for criterion 8: writes the mock's answers to 10 fixed
// requests to a file.
int emit_mock_outputs(const std::string& path) {
  MockBackend m;
  std::mt19937_64 gen(1008);
  std::ofstream out(path, std::ios::binary);
  for (int i = 0; i < 10; ++i) {
    const Image img = testing::random_image(gen, 8 * (2 + i % 3), 8 * (2 + i % 2));
    const BinaryMask mask = testing::random_mask(gen, img.width(), img.height(), 0.3);
    const Image painted = m.inpaint({img, mask, "A class of thing", 100u + i, 1});
    out.write(reinterpret_cast<const char*>(painted.bytes().data()),
              static_cast<std::streamsize>(painted.bytes().size()));
    out << encode_feature_map(m.extract_features({img, "", 100, "mid", 0}));
  }
  return out ? 0 : 1;
}

Outcome criterion8() {
  const fs::path dir = fs::temp_directory_path() / ("occaug_acc8_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  std::vector<std::string> blobs;
  for (int i = 0; i < 2; ++i) {
    const std::string file = (dir / ("run" + std::to_string(i) + ".bin")).string();
    const pid_t pid = ::fork();
    if (pid == 0) {
      ::execl("/proc/self/exe", "acceptance", "--emit-mock", file.c_str(),
              static_cast<char*>(nullptr));
      ::_exit(127);
    }
    int status = 0;
    ::waitpid(pid, &status, 0);
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) return {false, "child process failed"};
    blobs.push_back(read_text_file(file));
  }
  // Outside-mask preservation on the same request family.
  MockBackend m;
  std::mt19937_64 gen(1008);
  long changed = 0;
  for (int i = 0; i < 10; ++i) {
    const Image img = testing::random_image(gen, 8 * (2 + i % 3), 8 * (2 + i % 2));
    const BinaryMask mask = testing::random_mask(gen, img.width(), img.height(), 0.3);
    const Image painted = m.inpaint({img, mask, "A class of thing", 100u + i, 1});
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
          changed += !mask.get(x, y) && painted.at(c, y, x) != img.at(c, y, x);
  }
  fs::remove_all(dir);
  const bool same = !blobs[0].empty() && blobs[0] == blobs[1];
  return {same && changed == 0, std::to_string(blobs[0].size()) + " bytes per process, " +
                                    (same ? "identical" : "different") + "; " +
                                    std::to_string(changed) + " outside-mask pixels changed"};
}

struct EndToEnd {
  bool ran = false;
  std::vector<fs::path> reports;
};

EndToEnd& end_to_end() {
  static EndToEnd e2e;
  return e2e;
}

Outcome criterion9() {
  const auto t0 = Clock::now();
  ToyRun& t = toy();
  if (!t.ready) return {false, "toy dataset could not be prepared"};
  double none = 0, blackout = 0;
  std::string per_seed;
  for (int seed = 1; seed <= 3; ++seed) {
    const std::string s = std::to_string(seed);
    for (const char* method : {"none", "blackout"})
      if (cli({"train", "--config", (t.root / "train.cfg").string(), "--annotations",
               (t.root / "toy" / "train.json").string(), "--plans", (t.root / "plans").string(),
               "--method", method, "--seed", s, "--out",
               (t.root / ("ck_" + std::string(method) + "_" + s)).string()}) != kExitOk)
        return {false, std::string("training failed for ") + method + " seed " + s};
    const fs::path rep = t.root / ("report_" + s);
    if (cli({"eval", "--checkpoint", (t.root / ("ck_none_" + s)).string(), "--checkpoint",
             (t.root / ("ck_blackout_" + s)).string(), "--annotations",
             (t.root / "toy" / "test.json").string(), "--out", rep.string(), "--seed", s}) !=
        kExitOk)
      return {false, "evaluation failed for seed " + s};
    end_to_end().reports.push_back(rep);
    const AccuracyTable table = parse_csv(read_text_file(rep / "accuracy.csv"));
    const double a = table.rows().at(0).at_level(60)->top1;
    const double b = table.rows().at(1).at_level(60)->top1;
    none += a / 3;
    blackout += b / 3;
    per_seed += (per_seed.empty() ? "" : ", ") + std::string("seed ") + s + " " + fmt(100 * a, 1) +
                " vs " + fmt(100 * b, 1);
  }
  end_to_end().ran = true;
  const double secs = seconds_since(t0);
  return {blackout >= none && secs < 600.0,
          "top-1 at 60% loss, none " + fmt(100 * none) + " vs blackout " + fmt(100 * blackout) +
              " (" + per_seed + "); " + fmt(secs, 1) + " s"};
}

Outcome criterion10() {
  if (!end_to_end().ran || end_to_end().reports.empty())
    return {false, "no report from the end-to-end run"};
  const fs::path rep = end_to_end().reports.front();
  const AccuracyTable table = parse_csv(read_text_file(rep / "accuracy.csv"));
  const bool levels = table.levels() == std::vector<int>{0, 20, 40, 60, 80};
  bool cells = !table.rows().empty();
  for (const auto& row : table.rows()) {
    cells = cells && row.cells.size() == 5;
    for (const auto& c : row.cells) cells = cells && 0 <= c.top1 && c.top1 <= c.top5 && c.top5 <= 1;
  }
  const std::string md = read_text_file(rep / "accuracy.md");
  const bool header = md.find("| Method | Arch | 0% | 20% | 40% | 60% | 80% |") != std::string::npos;
  std::size_t pairs = 0;
  for (std::size_t pos = md.find(" / "); pos != std::string::npos; pos = md.find(" / ", pos + 1))
    ++pairs;
  const bool cell_text = pairs >= 5 * table.rows().size();
  return {levels && cells && header && cell_text && fs::exists(rep / "accuracy.svg"),
          std::string("columns ") + (levels ? "0,20,40,60,80" : "wrong") + "; " +
              std::to_string(pairs) + " top-1 / top-5 cells in markdown"};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc == 3 && std::strcmp(argv[1], "--emit-mock") == 0) return emit_mock_outputs(argv[2]);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"part-selection oracle", criterion1},
      {"information loss", criterion2},
      {"operator exactness", criterion3},
      {"CutMix law", criterion4},
      {"combined loss reductions", criterion5},
      {"frozen backend", criterion6},
      {"fusion gradient check", criterion7},
      {"mock determinism across processes", criterion8},
      {"desk-scale end-to-end", criterion9},
      {"report fidelity", criterion10},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << (i + 1) << " ("
              << criteria[i].first << "): " << o.detail << std::endl;
  }
  if (toy().ready) fs::remove_all(toy().root);
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed")
            << std::endl;
  return failed == 0 ? 0 : 1;
}
