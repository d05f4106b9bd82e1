// SPDX-License-Identifier: Apache-2.0
#include "occaug/eval_harness.hpp"

#include <algorithm>
#include <atomic>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "csv.hpp"
#include "occaug/augmenters.hpp"
#include "occaug/config.hpp"
#include "occaug/error.hpp"
#include "occaug/occlusion.hpp"
#include "occaug/rng.hpp"

namespace occaug {

bool in_top_k(std::span<const double> logits, int label, int k) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size())
    throw ValidationError("label " + std::to_string(label) + " outside " +
                          std::to_string(logits.size()) + " classes");
  const double v = logits[static_cast<std::size_t>(label)];
  int ahead = 0;
  for (std::size_t j = 0; j < logits.size(); ++j)
    if (logits[j] > v || (logits[j] == v && static_cast<int>(j) < label)) ++ahead;
  return ahead < k;
}

double top_k_accuracy(const Matrix& logits, std::span<const int> labels, int k) {
  if (k < 1) throw ValidationError("top-k needs k >= 1");
  if (static_cast<std::size_t>(logits.rows) != labels.size())
    throw ValidationError("top-k: " + std::to_string(logits.rows) + " rows but " +
                          std::to_string(labels.size()) + " labels");
  if (labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (int i = 0; i < logits.rows; ++i)
    if (in_top_k(logits.row(i), labels[static_cast<std::size_t>(i)], k)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

void EvalConfig::validate() const {
  if (levels.empty()) throw ValidationError("no information-loss levels to evaluate");
  for (int l : levels)
    if (l < 0 || l > 100) throw ValidationError("loss level " + std::to_string(l) + " outside 0..100");
  if (patch_size <= 0) throw ValidationError("patch_size must be positive");
  if (top_k < 1) throw ValidationError("top_k must be at least 1");
  if (threads < 0) throw ValidationError("threads must be non-negative");
}

std::uint64_t eval_mask_seed(std::uint64_t seed, ImageId image_id, int level) {
  return mix_seed({seed, static_cast<std::uint64_t>(image_id), static_cast<std::uint64_t>(level)});
}

BinaryMask eval_mask(const EvalConfig& config, ImageId image_id, int level, int width, int height) {
  if (level == 0) return BinaryMask(width, height);
  return simulate_patch_occlusion(width, height, level, eval_mask_seed(config.seed, image_id, level),
                                  config.patch_size);
}

// ---------------------------------------------------------------------------

const AccuracyCell* AccuracyRow::at_level(int level) const {
  for (const auto& c : cells)
    if (c.level == level) return &c;
  return nullptr;
}

AccuracyTable::AccuracyTable(std::vector<int> levels) : levels_(std::move(levels)) {
  if (levels_.empty()) throw ValidationError("accuracy table needs at least one level");
}

void AccuracyTable::add_row(AccuracyRow row) {
  if (row.cells.size() != levels_.size())
    throw ValidationError("row " + row.method + "/" + row.arch + " has " +
                          std::to_string(row.cells.size()) + " cells, table has " +
                          std::to_string(levels_.size()) + " levels");
  for (std::size_t i = 0; i < levels_.size(); ++i) {
    const auto& c = row.cells[i];
    if (c.level != levels_[i])
      throw ValidationError("row " + row.method + "/" + row.arch + ": cell " + std::to_string(i) +
                            " is level " + std::to_string(c.level) + ", expected " +
                            std::to_string(levels_[i]));
    if (!(c.top1 >= 0.0 && c.top1 <= c.top5 && c.top5 <= 1.0))
      throw ValidationError("row " + row.method + "/" + row.arch + " at level " +
                            std::to_string(c.level) + ": need 0 <= top1 <= top5 <= 1");
  }
  rows_.push_back(std::move(row));
}

// ---------------------------------------------------------------------------

Predictor::Predictor(const RunCheckpoint& checkpoint, GenerativeBackend* backend)
    : checkpoint_(checkpoint), backend_(backend) {
  if (checkpoint_.model.spec().fusion && !backend_)
    throw ValidationError(
        "checkpoint uses diffusion-feature fusion; pass a generative backend (--backend)");
}

std::vector<double> Predictor::logits(const Image& image) const {
  const Model& model = checkpoint_.model;
  if (!model.spec().fusion) return model.image_logits(image, {});
  const auto ld =
      diffusion_features(*backend_, image, checkpoint_.config.timestep, checkpoint_.config.tap);
  return model.image_logits(image, ld);
}

namespace {

template <typename Fn>
void parallel_for(std::size_t count, int threads, Fn&& fn) {
  std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads)
                                    : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count && !failed; i = next++) {
        try {
          fn(i);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

AccuracyRow evaluate_under_occlusion(const RunCheckpoint& checkpoint,
                                     std::span<const EvalImage> images, const EvalConfig& config,
                                     const std::string& method, const std::string& arch) {
  config.validate();
  const ModelSpec& spec = checkpoint.model.spec();
  if (config.fusion != spec.fusion)
    throw ValidationError(std::string("eval config has fusion ") + (config.fusion ? "on" : "off") +
                          " but the checkpoint was trained with it " + (spec.fusion ? "on" : "off"));
  if (config.fusion && !config.backend)
    throw ValidationError("fusion evaluation needs a generative backend (--backend)");
  const Predictor predictor(checkpoint, config.backend);

  std::optional<std::set<std::string>> subset;
  if (config.class_subset) subset.emplace(config.class_subset->begin(), config.class_subset->end());
  struct Item {
    const EvalImage* image;
    int label;
  };
  std::vector<Item> items;
  for (const auto& img : images) {
    if (subset && !subset->count(img.class_name)) continue;
    const auto label = checkpoint.labels.find(img.class_name);
    if (!label) {
      if (config.intersect_classes || subset) continue;
      throw ValidationError("image " + std::to_string(img.image_id) + " has class '" +
                            img.class_name + "' unknown to the checkpoint");
    }
    if (!img.image || img.image->width() != spec.width || img.image->height() != spec.height ||
        img.image->channels() != spec.channels)
      throw ValidationError("image " + std::to_string(img.image_id) +
                            " does not match the model input size");
    items.push_back({&img, *label});
  }
  if (items.empty()) throw ValidationError("no evaluation images left after class filtering");

  struct Outcome {
    bool top1 = false;
    bool topk = false;
    double loss = 0.0;
  };
  const std::size_t n = items.size();
  std::vector<Outcome> outcomes(n * config.levels.size());
  parallel_for(outcomes.size(), config.threads, [&](std::size_t t) {
    const int level = config.levels[t / n];
    const Item& item = items[t % n];
    const Image& src = *item.image->image;
    const BinaryMask mask = eval_mask(config, item.image->image_id, level, src.width(), src.height());
    const auto logits = predictor.logits(mask.empty_set() ? src : black_out_pixels(src, mask));
    outcomes[t] = {in_top_k(logits, item.label, 1), in_top_k(logits, item.label, config.top_k),
                   measured_information_loss(mask)};
  });

  AccuracyRow row{method, arch, {}};
  for (std::size_t l = 0; l < config.levels.size(); ++l) {
    std::size_t hit1 = 0, hitk = 0;
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Outcome& o = outcomes[l * n + i];
      hit1 += o.top1;
      hitk += o.topk;
      loss += o.loss;
    }
    row.cells.push_back({config.levels[l], static_cast<double>(hit1) / n,
                         static_cast<double>(hitk) / n, loss / n});
  }
  return row;
}

// ---------------------------------------------------------------------------

namespace {

Image conform(const Image& img, int width, int height, int channels) {
  Image out = img;
  if (out.channels() != channels) {
    Image converted(out.width(), out.height(), channels);
    for (int c = 0; c < channels; ++c)
      for (int y = 0; y < out.height(); ++y)
        for (int x = 0; x < out.width(); ++x) {
          int v;
          if (out.channels() == 1) {
            v = out.at(0, y, x);
          } else {
            int sum = 0;
            for (int k = 0; k < out.channels(); ++k) sum += out.at(k, y, x);
            v = (sum + out.channels() / 2) / out.channels();
          }
          converted.at(c, y, x) = static_cast<std::uint8_t>(v);
        }
    out = std::move(converted);
  }
  if (out.width() != width || out.height() != height) out = resize_nearest(out, width, height);
  return out;
}

bool is_image_file(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  return ext == ".ppm" || ext == ".pgm" || ext == ".pnm";
}

}  // namespace

FolderResult evaluate_real_folder(const RunCheckpoint& checkpoint,
                                  const std::filesystem::path& folder, GenerativeBackend* backend,
                                  int top_k) {
  if (!std::filesystem::is_directory(folder))
    throw ValidationError("evaluation folder not found: " + folder.string());
  const Predictor predictor(checkpoint, backend);
  const ModelSpec& spec = checkpoint.model.spec();

  std::vector<std::filesystem::path> class_dirs;
  for (const auto& e : std::filesystem::directory_iterator(folder))
    if (e.is_directory()) class_dirs.push_back(e.path());
  std::sort(class_dirs.begin(), class_dirs.end());

  FolderResult result;
  std::size_t hit1 = 0, hitk = 0;
  for (const auto& dir : class_dirs) {
    const std::string name = dir.filename().string();
    const auto label = checkpoint.labels.find(name);
    if (!label) {
      result.skipped_classes.push_back(name);
      continue;
    }
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
      if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const Image img = conform(read_image(f), spec.width, spec.height, spec.channels);
      const auto logits = predictor.logits(img);
      hit1 += in_top_k(logits, *label, 1);
      hitk += in_top_k(logits, *label, top_k);
      ++result.images;
    }
  }
  if (result.images == 0)
    throw ValidationError("no scorable images under " + folder.string() +
                          " (expected <class_name>/<image>.ppm for known classes)");
  result.top1 = static_cast<double>(hit1) / result.images;
  result.top5 = static_cast<double>(hitk) / result.images;
  return result;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kCsvHeader = "method,arch,level,top1,top5,measured_loss";

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

}  // namespace

std::string format_csv(const AccuracyTable& table) {
  std::string out(kCsvHeader);
  out += '\n';
  for (const auto& row : table.rows())
    for (const auto& c : row.cells)
      out += csv::quote(row.method) + "," + csv::quote(row.arch) + "," + std::to_string(c.level) +
             "," + format_double(c.top1) + "," + format_double(c.top5) + "," +
             format_double(c.measured_loss) + "\n";
  return out;
}

AccuracyTable parse_csv(std::string_view text) {
  std::vector<std::string> lines;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  if (lines.empty() || lines.front() != kCsvHeader)
    throw ParseError("report CSV must start with '" + std::string(kCsvHeader) + "'");
  std::vector<AccuracyRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = csv::split(lines[i]);
    if (f.size() != 6)
      throw ParseError("report CSV line " + std::to_string(i + 1) + ": expected 6 fields");
    if (rows.empty() || rows.back().method != f[0] || rows.back().arch != f[1])
      rows.push_back({f[0], f[1], {}});
    rows.back().cells.push_back({static_cast<int>(parse_int(f[2], "level")),
                                 parse_double(f[3], "top1"), parse_double(f[4], "top5"),
                                 parse_double(f[5], "measured_loss")});
  }
  if (rows.empty()) throw ParseError("report CSV has no rows");
  std::vector<int> levels;
  for (const auto& c : rows.front().cells) levels.push_back(c.level);
  AccuracyTable table(levels);
  for (auto& r : rows) table.add_row(std::move(r));
  return table;
}

std::string format_markdown(const AccuracyTable& table) {
  std::string out = "Top-1 / top-5 accuracy (%) by information loss\n\n| Method | Arch |";
  for (int l : table.levels()) out += " " + std::to_string(l) + "% |";
  out += "\n|---|---|";
  for (std::size_t i = 0; i < table.levels().size(); ++i) out += "---|";
  out += "\n";
  for (const auto& row : table.rows()) {
    out += "| " + row.method + " | " + row.arch + " |";
    for (const auto& c : row.cells) out += " " + percent(c.top1) + " / " + percent(c.top5) + " |";
    out += "\n";
  }
  return out;
}

std::string format_svg_plot(const AccuracyTable& table) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                 "#9467bd", "#8c564b", "#e377c2", "#17becf"};
  const double left = 60, top = 20, width = 420, height = 260;
  const auto px = [&](int level) { return left + width * level / 100.0; };
  const auto py = [&](double v) { return top + height * (1.0 - v); };
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"340\" "
       "font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"640\" height=\"340\" fill=\"white\"/>\n";
  s << "<line x1=\"" << left << "\" y1=\"" << top + height << "\" x2=\"" << left + width
    << "\" y2=\"" << top + height << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
    << top + height << "\" stroke=\"black\"/>\n";
  for (int l : table.levels())
    s << "<text x=\"" << px(l) << "\" y=\"" << top + height + 16
      << "\" text-anchor=\"middle\">" << l << "%</text>\n";
  for (int t = 0; t <= 100; t += 25)
    s << "<text x=\"" << left - 6 << "\" y=\"" << py(t / 100.0) + 4 << "\" text-anchor=\"end\">"
      << t << "</text>\n";
  s << "<text x=\"" << left + width / 2 << "\" y=\"" << top + height + 34
    << "\" text-anchor=\"middle\">information loss</text>\n";
  s << "<text x=\"16\" y=\"" << top + height / 2 << "\" transform=\"rotate(-90 16 "
    << top + height / 2 << ")\" text-anchor=\"middle\">top-1 accuracy (%)</text>\n";
  std::size_t i = 0;
  for (const auto& row : table.rows()) {
    const char* color = colors[i % 8];
    s << "<polyline class=\"series\" fill=\"none\" stroke=\"" << color
      << "\" stroke-width=\"2\" points=\"";
    for (const auto& c : row.cells) s << px(c.level) << "," << py(c.top1) << " ";
    s << "\"/>\n";
    s << "<text x=\"" << left + width + 12 << "\" y=\"" << top + 14 + 16 * i << "\" fill=\""
      << color << "\">" << row.method << " (" << row.arch << ")</text>\n";
    ++i;
  }
  s << "</svg>\n";
  return s.str();
}

ReportFiles emit_report(const AccuracyTable& table, const std::filesystem::path& dir,
                        const std::string& stem, bool plot) {
  if (table.rows().empty()) throw ValidationError("cannot emit a report for an empty table");
  ReportFiles files{dir / (stem + ".csv"), dir / (stem + ".md"), {}};
  write_text_file(files.csv, format_csv(table));
  write_text_file(files.markdown, format_markdown(table));
  if (plot) {
    files.plot = dir / (stem + ".svg");
    write_text_file(files.plot, format_svg_plot(table));
  }
  return files;
}

}  // namespace occaug
