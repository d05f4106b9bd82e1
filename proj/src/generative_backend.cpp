// SPDX-License-Identifier: Apache-2.0
#include "occaug/generative_backend.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "bytes.hpp"
#include "occaug/error.hpp"
#include "occaug/rng.hpp"

namespace occaug {

bool FeatureMap::finite() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

const TapInfo* CapabilityReport::find_tap(std::string_view name) const {
  for (const auto& t : taps)
    if (t.name == name) return &t;
  return nullptr;
}

std::string CapabilityReport::to_json() const {
  nlohmann::json j;
  j["backend"] = backend;
  j["version"] = version;
  j["dims_multiple"] = dims_multiple;
  j["channels"] = channels;
  j["timestep_min"] = timestep_min;
  j["timestep_max"] = timestep_max;
  j["default_steps"] = default_steps;
  j["max_parallel"] = max_parallel;
  j["taps"] = nlohmann::json::array();
  for (const auto& t : taps)
    j["taps"].push_back({{"name", t.name}, {"channels", t.channels}, {"downsample", t.downsample}});
  return j.dump();
}

CapabilityReport CapabilityReport::from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    CapabilityReport r;
    r.backend = j.at("backend").get<std::string>();
    r.version = j.at("version").get<std::string>();
    r.dims_multiple = j.at("dims_multiple").get<int>();
    r.channels = j.at("channels").get<int>();
    r.timestep_min = j.at("timestep_min").get<int>();
    r.timestep_max = j.at("timestep_max").get<int>();
    r.default_steps = j.at("default_steps").get<int>();
    r.max_parallel = j.at("max_parallel").get<int>();
    for (const auto& t : j.at("taps"))
      r.taps.push_back({t.at("name").get<std::string>(), t.at("channels").get<int>(),
                        t.at("downsample").get<int>()});
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed capability report: ") + e.what());
  }
}

CapabilityReport describe_capabilities(const GenerativeBackend& backend) {
  return backend.capabilities();
}

namespace {

void check_image(const CapabilityReport& caps, const Image& image) {
  if (image.empty()) throw CapabilityError("request carries an empty image");
  if (image.channels() != caps.channels)
    throw CapabilityError(caps.backend + " expects " + std::to_string(caps.channels) +
                          "-channel images, got " + std::to_string(image.channels()));
  if (image.width() % caps.dims_multiple != 0 || image.height() % caps.dims_multiple != 0)
    throw CapabilityError(caps.backend + " cannot process a " + std::to_string(image.width()) +
                          "x" + std::to_string(image.height()) +
                          " image: width and height must be multiples of " +
                          std::to_string(caps.dims_multiple));
}

}  // namespace

void check_request(const CapabilityReport& caps, const InpaintRequest& request) {
  check_image(caps, request.image);
  if (request.mask.width() != request.image.width() ||
      request.mask.height() != request.image.height())
    throw CapabilityError("inpaint mask " + std::to_string(request.mask.width()) + "x" +
                          std::to_string(request.mask.height()) + " does not match image " +
                          std::to_string(request.image.width()) + "x" +
                          std::to_string(request.image.height()));
  if (request.steps < 1) throw CapabilityError("inpaint steps must be >= 1");
}

void check_request(const CapabilityReport& caps, const FeatureRequest& request) {
  check_image(caps, request.image);
  if (caps.find_tap(request.tap) == nullptr) {
    std::string valid;
    for (const auto& t : caps.taps) valid += (valid.empty() ? "" : ", ") + t.name;
    throw CapabilityError("unknown feature tap '" + request.tap + "'; " + caps.backend +
                          " provides: " + valid);
  }
  if (request.timestep < caps.timestep_min || request.timestep > caps.timestep_max)
    throw CapabilityError("timestep " + std::to_string(request.timestep) + " outside [" +
                          std::to_string(caps.timestep_min) + ", " +
                          std::to_string(caps.timestep_max) + "]");
}

MockBackend::MockBackend() {
  Rng rng(kParameterSeed);
  weight_.resize(kChannels * 3);
  bias_.resize(kChannels);
  for (auto& w : weight_) w = 0.5 * rng.normal();
  for (auto& b : bias_) b = 0.5 * rng.normal();
}

CapabilityReport MockBackend::capabilities() const {
  CapabilityReport r;
  r.backend = "mock";
  r.version = "mock-1";
  r.dims_multiple = kDownsample;
  r.channels = 3;
  r.taps = {{"mid", kChannels, kDownsample}};
  r.timestep_min = 0;
  r.timestep_max = 999;
  r.default_steps = 1;
  r.max_parallel = 64;
  return r;
}

std::uint64_t MockBackend::parameter_checksum() const {
  std::uint64_t h = fnv1a(reinterpret_cast<const unsigned char*>(weight_.data()),
                          weight_.size() * sizeof(double));
  return fnv1a(reinterpret_cast<const unsigned char*>(bias_.data()), bias_.size() * sizeof(double),
               h);
}

Image MockBackend::inpaint(const InpaintRequest& request) {
  check_request(capabilities(), request);
  const Image& src = request.image;
  const BinaryMask& mask = request.mask;
  if (mask.empty_set()) return src;

  const int w = src.width();
  const int h = src.height();
  std::vector<std::uint64_t> sums(static_cast<std::size_t>(src.channels()), 0);
  std::uint64_t ring = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (mask.get(x, y)) continue;
      const bool touches = (x > 0 && mask.get(x - 1, y)) || (x + 1 < w && mask.get(x + 1, y)) ||
                           (y > 0 && mask.get(x, y - 1)) || (y + 1 < h && mask.get(x, y + 1));
      if (!touches) continue;
      ++ring;
      for (int c = 0; c < src.channels(); ++c) sums[static_cast<std::size_t>(c)] += src.at(c, y, x);
    }

  Image out = src;
  for (int c = 0; c < src.channels(); ++c) {
    const int mean = ring == 0 ? 128
                               : static_cast<int>((sums[static_cast<std::size_t>(c)] + ring / 2) / ring);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (!mask.get(x, y)) continue;
        const auto bits = splitmix64(mix_seed({request.seed, static_cast<std::uint64_t>(x),
                                               static_cast<std::uint64_t>(y),
                                               static_cast<std::uint64_t>(c)}));
        const int noise = static_cast<int>(bits % 3) - 1;
        out.at(c, y, x) = static_cast<std::uint8_t>(std::clamp(mean + noise, 0, 255));
      }
  }
  return out;
}

FeatureMap MockBackend::extract_features(const FeatureRequest& request) {
  check_request(capabilities(), request);
  const Image& img = request.image;
  FeatureMap fm;
  fm.channels = kChannels;
  fm.height = img.height() / kDownsample;
  fm.width = img.width() / kDownsample;
  fm.values.assign(static_cast<std::size_t>(fm.channels) * fm.height * fm.width, 0.0);
  constexpr double kBlock = kDownsample * kDownsample * 255.0;
  for (int by = 0; by < fm.height; ++by)
    for (int bx = 0; bx < fm.width; ++bx) {
      double pooled[3];
      for (int c = 0; c < 3; ++c) {
        unsigned sum = 0;
        for (int y = by * kDownsample; y < (by + 1) * kDownsample; ++y)
          for (int x = bx * kDownsample; x < (bx + 1) * kDownsample; ++x) sum += img.at(c, y, x);
        pooled[c] = sum / kBlock;
      }
      for (int k = 0; k < kChannels; ++k) {
        double v = bias(k);
        for (int c = 0; c < 3; ++c) v += weight(k, c) * pooled[c];
        fm.values[(static_cast<std::size_t>(k) * fm.height + by) * fm.width + bx] = v;
      }
    }
  return fm;
}

std::unique_ptr<GenerativeBackend> make_backend(std::string_view spec) {
  if (spec == "mock") return std::make_unique<MockBackend>();
  if (spec.starts_with("local:")) {
    const std::string command(spec.substr(6));
    if (command.empty()) throw CapabilityError("local backend needs a command: local:<command>");
    return std::make_unique<LocalProcessBackend>(command);
  }
  if (spec.starts_with("remote:")) {
    const std::string addr(spec.substr(7));
    const auto colon = addr.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == addr.size())
      throw CapabilityError("remote backend address must be host:port, got '" + addr + "'");
    int port = 0;
    try {
      port = std::stoi(addr.substr(colon + 1));
    } catch (const std::exception&) {
      throw CapabilityError("invalid port in remote backend address '" + addr + "'");
    }
    return std::make_unique<RemoteBackend>(addr.substr(0, colon), port);
  }
  throw CapabilityError("unknown backend '" + std::string(spec) +
                        "' (expected mock, local:<command>, or remote:<host>:<port>)");
}

std::string encode_feature_map(const FeatureMap& map) {
  bytes::Writer w;
  w.raw("OCFM");
  w.u32(static_cast<std::uint32_t>(map.channels));
  w.u32(static_cast<std::uint32_t>(map.height));
  w.u32(static_cast<std::uint32_t>(map.width));
  for (double v : map.values) w.f64(v);
  return w.take();
}

FeatureMap decode_feature_map(std::string_view data) {
  bytes::Reader r(data);
  if (r.raw(4) != "OCFM") throw ParseError("not a feature tensor file");
  FeatureMap map;
  map.channels = static_cast<int>(r.u32());
  map.height = static_cast<int>(r.u32());
  map.width = static_cast<int>(r.u32());
  const std::size_t n = static_cast<std::size_t>(map.channels) * map.height * map.width;
  if (r.remaining() != n * 8) throw ParseError("feature tensor payload size mismatch");
  map.values.resize(n);
  for (auto& v : map.values) v = r.f64();
  return map;
}

FeatureCache::FeatureCache(std::filesystem::path root, std::string backend_version)
    : root_(std::move(root)), version_(std::move(backend_version)) {
  for (char& ch : version_)
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '.' && ch != '_')
      ch = '_';
}

std::filesystem::path FeatureCache::directory() const { return root_ / version_; }

std::filesystem::path FeatureCache::file_for(ImageId image_id, const std::string& tap,
                                             int timestep) const {
  return directory() / (std::to_string(image_id) + "_" + tap + "_t" + std::to_string(timestep) +
                        ".feat");
}

std::optional<FeatureMap> FeatureCache::get(ImageId image_id, const std::string& tap,
                                            int timestep) const {
  std::lock_guard lock(mutex_);
  std::ifstream in(file_for(image_id, tap, timestep), std::ios::binary);
  if (!in) return std::nullopt;
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_feature_map(data);
}

void FeatureCache::put(ImageId image_id, const std::string& tap, int timestep,
                       const FeatureMap& map) {
  std::lock_guard lock(mutex_);
  std::filesystem::create_directories(directory());
  const auto file = file_for(image_id, tap, timestep);
  const bool existed = std::filesystem::exists(file);
  {
    std::ofstream out(file, std::ios::binary);
    const std::string data = encode_feature_map(map);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw IoError("cannot write feature tensor " + file.string());
  }
  if (existed) return;
  const auto index = directory() / "index.csv";
  const bool fresh = !std::filesystem::exists(index);
  std::ofstream idx(index, std::ios::app);
  if (fresh) idx << "image_id,tap,timestep,backend_version,file\n";
  idx << image_id << ',' << tap << ',' << timestep << ',' << version_ << ','
      << file.filename().string() << '\n';
  if (!idx) throw IoError("cannot update feature index " + index.string());
}

}  // namespace occaug
