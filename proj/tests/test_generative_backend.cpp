// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>
#include <thread>

#include <unistd.h>

#include "occaug/backend_wire.hpp"
#include "occaug/error.hpp"
#include "occaug/generative_backend.hpp"
#include "test_support.hpp"

using namespace occaug;

namespace {

// The mock's projection parameters, regenerated with std::mt19937_64 and a
// hand-written Box-Muller transform.
struct MockParams {
  double w[8][3];
  double b[8];
};

MockParams oracle_params() {
  std::mt19937_64 eng(0x0cc1);
  auto unit = [&] { return static_cast<double>(eng() >> 11) / 9007199254740992.0; };
  auto normal = [&] {
    double u1 = unit();
    while (u1 <= 0.0) u1 = unit();
    const double u2 = unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  };
  MockParams p{};
  for (auto& row : p.w)
    for (double& v : row) v = 0.5 * normal();
  for (double& v : p.b) v = 0.5 * normal();
  return p;
}

FeatureMap oracle_features(const Image& img) {
  const MockParams p = oracle_params();
  FeatureMap fm{8, img.height() / 8, img.width() / 8, {}};
  fm.values.resize(static_cast<std::size_t>(8 * fm.height * fm.width));
  for (int k = 0; k < 8; ++k)
    for (int by = 0; by < fm.height; ++by)
      for (int bx = 0; bx < fm.width; ++bx) {
        double v = p.b[k];
        for (int c = 0; c < 3; ++c) {
          double mean = 0;
          for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) mean += img.at(c, by * 8 + y, bx * 8 + x);
          v += p.w[k][c] * (mean / 64.0 / 255.0);
        }
        fm.values[(static_cast<std::size_t>(k) * fm.height + by) * fm.width + bx] = v;
      }
  return fm;
}

void check_close(const FeatureMap& a, const FeatureMap& b) {
  REQUIRE(a.channels == b.channels);
  REQUIRE(a.height == b.height);
  REQUIRE(a.width == b.width);
  for (std::size_t i = 0; i < a.values.size(); ++i)
    CHECK(a.values[i] == doctest::Approx(b.values[i]).epsilon(1e-12));
}

}  // namespace

TEST_CASE("mock capabilities") {
  MockBackend m;
  const CapabilityReport caps = describe_capabilities(m);
  CHECK(caps.backend == "mock");
  CHECK(caps.dims_multiple == 8);
  REQUIRE(caps.find_tap("mid") != nullptr);
  CHECK(caps.find_tap("mid")->channels == 8);
  CHECK(caps.find_tap("mid")->downsample == 8);
  CHECK(caps.find_tap("up") == nullptr);
  CHECK(CapabilityReport::from_json(caps.to_json()) == caps);
  CHECK_THROWS_AS(CapabilityReport::from_json("{\"backend\": 1"), ParseError);
}

TEST_CASE("mock inpainting follows its published rule") {
  MockBackend m;
  std::mt19937_64 gen(41);
  for (int trial = 0; trial < 20; ++trial) {
    const Image img = testing::random_image(gen, 8 * (1 + gen() % 4), 8 * (1 + gen() % 4));
    const BinaryMask mask = testing::random_mask(gen, img.width(), img.height(), 0.2);
    const std::uint64_t seed = gen();
    const Image out = m.inpaint({img, mask, "A class of x", seed, 1});
    CHECK(out == testing::mock_inpaint_oracle(img, mask, seed));
    CHECK(out == m.inpaint({img, mask, "A class of x", seed, 1}));
  }
  const Image img(16, 16, 3, 90);
  CHECK(m.inpaint({img, BinaryMask(16, 16), "", 1, 1}) == img);
  // Full mask: no ring, fill around 128.
  const Image full = m.inpaint({img, BinaryMask(16, 16, true), "", 1, 1});
  for (auto v : full.bytes()) CHECK((v >= 127 && v <= 129));
}

TEST_CASE("mock inpainting rejects unsupported requests") {
  MockBackend m;
  CHECK_THROWS_AS(m.inpaint({Image(12, 16), BinaryMask(12, 16), "", 0, 1}), CapabilityError);
  CHECK_THROWS_AS(m.inpaint({Image(16, 16, 1), BinaryMask(16, 16), "", 0, 1}), CapabilityError);
  CHECK_THROWS_AS(m.inpaint({Image(16, 16), BinaryMask(8, 16), "", 0, 1}), CapabilityError);
  CHECK_THROWS_AS(m.inpaint({Image(16, 16), BinaryMask(16, 16), "", 0, 0}), CapabilityError);
}

TEST_CASE("mock features follow the pooled projection rule") {
  MockBackend m;
  std::mt19937_64 gen(42);
  const MockParams p = oracle_params();
  for (int k = 0; k < 8; ++k) {
    CHECK(m.bias(k) == p.b[k]);
    for (int c = 0; c < 3; ++c) CHECK(m.weight(k, c) == p.w[k][c]);
  }
  for (int trial = 0; trial < 10; ++trial) {
    const Image img = testing::random_image(gen, 8 * (1 + gen() % 5), 8 * (1 + gen() % 5));
    const FeatureMap fm = m.extract_features({img, "", 100, "mid", 0});
    check_close(fm, oracle_features(img));
    CHECK(fm.finite());
  }
  // Zero image maps to the bias in every cell.
  const FeatureMap zero = m.extract_features({Image(16, 8), "", 0, "mid", 0});
  for (int k = 0; k < 8; ++k)
    for (int y = 0; y < zero.height; ++y)
      for (int x = 0; x < zero.width; ++x) CHECK(zero.at(k, y, x) == p.b[k]);
}

TEST_CASE("mock features respond to the input and to occlusion") {
  MockBackend m;
  std::mt19937_64 gen(43);
  const Image img = testing::random_image(gen, 32, 32);
  Image shifted = img;
  for (auto& v : shifted.bytes()) v = static_cast<std::uint8_t>(v / 2);
  CHECK_FALSE(m.extract_features({img, "", 100, "mid", 0}) ==
              m.extract_features({shifted, "", 100, "mid", 0}));

  // Same image outside a region; one copy has the region blacked out.
  Image occluded = img;
  for (int c = 0; c < 3; ++c)
    for (int y = 8; y < 16; ++y)
      for (int x = 8; x < 16; ++x) occluded.at(c, y, x) = 0;
  CHECK_FALSE(m.extract_features({img, "", 100, "mid", 0}) ==
              m.extract_features({occluded, "", 100, "mid", 0}));
}

TEST_CASE("feature request validation") {
  MockBackend m;
  try {
    m.extract_features({Image(16, 16), "", 100, "down2", 0});
    FAIL("expected CapabilityError");
  } catch (const CapabilityError& e) {
    CHECK(std::string(e.what()).find("mid") != std::string::npos);
  }
  CHECK_THROWS_AS(m.extract_features({Image(16, 16), "", 1000, "mid", 0}), CapabilityError);
  CHECK_THROWS_AS(m.extract_features({Image(16, 16), "", -1, "mid", 0}), CapabilityError);
}

TEST_CASE("backend parameters stay frozen across calls") {
  MockBackend m;
  const auto before = m.parameter_checksum();
  std::mt19937_64 gen(44);
  for (int i = 0; i < 5; ++i) {
    const Image img = testing::random_image(gen, 16, 16);
    m.inpaint({img, testing::random_mask(gen, 16, 16, 0.3), "p", gen(), 1});
    m.extract_features({img, "", 100, "mid", 0});
  }
  CHECK(m.parameter_checksum() == before);
  CHECK(MockBackend().parameter_checksum() == before);
}

TEST_CASE("backend specs") {
  CHECK(dynamic_cast<MockBackend*>(make_backend("mock").get()) != nullptr);
  CHECK_THROWS_AS(make_backend("gpu"), CapabilityError);
  CHECK_THROWS_AS(make_backend("local:"), CapabilityError);
  CHECK_THROWS_AS(make_backend("remote:nohost"), CapabilityError);
  CHECK_THROWS_AS(make_backend("remote:host:port"), CapabilityError);
}

TEST_CASE("wire frames round-trip through the request handler") {
  MockBackend m;
  std::mt19937_64 gen(45);
  const Image img = testing::random_image(gen, 24, 16);
  const BinaryMask mask = testing::random_mask(gen, 24, 16, 0.3);
  const InpaintRequest ir{img, mask, "A class of cat", 99, 3};
  CHECK(wire::decode_image_response(wire::handle_request(m, wire::encode_inpaint(ir))) ==
        m.inpaint(ir));
  const FeatureRequest fr{img, "", 50, "mid", 0};
  CHECK(wire::decode_features_response(wire::handle_request(m, wire::encode_features(fr))) ==
        m.extract_features(fr));
  CHECK(wire::decode_capabilities_response(
            wire::handle_request(m, wire::encode_simple(wire::Op::Capabilities))) ==
        m.capabilities());
  CHECK(wire::decode_checksum_response(
            wire::handle_request(m, wire::encode_simple(wire::Op::Checksum))) ==
        m.parameter_checksum());

  // Backend failures come back as typed errors.
  const FeatureRequest bad{img, "", 50, "nope", 0};
  CHECK_THROWS_AS(
      wire::decode_features_response(wire::handle_request(m, wire::encode_features(bad))),
      CapabilityError);
  CHECK_THROWS_AS(wire::decode_image_response(wire::handle_request(m, "junk")), Error);
}

TEST_CASE("framed stream server answers over pipes") {
  MockBackend m;
  int to_server[2], from_server[2];
  REQUIRE(::pipe(to_server) == 0);
  REQUIRE(::pipe(from_server) == 0);
  std::thread server([&] {
    wire::serve_stream(m, to_server[0], from_server[1]);
    ::close(from_server[1]);
  });
  auto call = [&](const std::string& frame) {
    const std::uint32_t n = static_cast<std::uint32_t>(frame.size());
    unsigned char len[4] = {static_cast<unsigned char>(n), static_cast<unsigned char>(n >> 8),
                            static_cast<unsigned char>(n >> 16),
                            static_cast<unsigned char>(n >> 24)};
    REQUIRE(::write(to_server[1], len, 4) == 4);
    REQUIRE(::write(to_server[1], frame.data(), n) == static_cast<ssize_t>(n));
    unsigned char hdr[4];
    std::size_t got = 0;
    while (got < 4) got += static_cast<std::size_t>(::read(from_server[0], hdr + got, 4 - got));
    const std::uint32_t rn = hdr[0] | (hdr[1] << 8) | (hdr[2] << 16) | (std::uint32_t(hdr[3]) << 24);
    std::string out(rn, '\0');
    got = 0;
    while (got < rn) got += static_cast<std::size_t>(::read(from_server[0], out.data() + got, rn - got));
    return out;
  };
  CHECK(wire::decode_checksum_response(call(wire::encode_simple(wire::Op::Checksum))) ==
        m.parameter_checksum());
  std::mt19937_64 gen(46);
  const Image img = testing::random_image(gen, 16, 16);
  const FeatureRequest fr{img, "", 10, "mid", 0};
  CHECK(wire::decode_features_response(call(wire::encode_features(fr))) == m.extract_features(fr));
  ::close(to_server[1]);
  server.join();
  ::close(to_server[0]);
  ::close(from_server[0]);
}

TEST_CASE("remote backend over loopback HTTP") {
  MockBackend m;
  wire::HttpServer server(m);
  int port = 0;
  try {
    port = server.bind("127.0.0.1", 0);
  } catch (const Error& e) {
    MESSAGE("loopback unavailable: " << e.what());
    return;
  }
  server.start();
  {
    RemoteBackend remote("127.0.0.1", port);
    CHECK(remote.capabilities() == m.capabilities());
    CHECK(remote.parameter_checksum() == m.parameter_checksum());
    std::mt19937_64 gen(47);
    const Image img = testing::random_image(gen, 16, 16);
    const BinaryMask mask = testing::random_mask(gen, 16, 16, 0.4);
    CHECK(remote.inpaint({img, mask, "p", 5, 1}) == m.inpaint({img, mask, "p", 5, 1}));
    CHECK_THROWS_AS(remote.extract_features({img, "", 10, "bad", 0}), CapabilityError);
  }
  server.stop();
}

TEST_CASE("unreachable remote backend raises BackendError") {
  // Port 1 on loopback is essentially never listening.
  CHECK_THROWS_AS(RemoteBackend("127.0.0.1", 1), BackendError);
}

TEST_CASE("feature cache keys on image, tap, timestep and version") {
  const auto dir = testing::temp_dir("featcache");
  std::mt19937_64 gen(48);
  FeatureMap fm{2, 3, 4, testing::random_vector(gen, 24)};
  CHECK(decode_feature_map(encode_feature_map(fm)) == fm);
  CHECK_THROWS_AS(decode_feature_map("xyz"), ParseError);

  FeatureCache cache(dir, "mock-1");
  CHECK(cache.directory() == dir / "mock-1");
  CHECK(cache.get(1, "mid", 100) == std::nullopt);
  cache.put(1, "mid", 100, fm);
  CHECK(cache.get(1, "mid", 100) == fm);
  CHECK(cache.get(1, "mid", 50) == std::nullopt);
  CHECK(cache.get(2, "mid", 100) == std::nullopt);
  CHECK(FeatureCache(dir, "mock-2").get(1, "mid", 100) == std::nullopt);
  CHECK(FeatureCache(dir, "mock-1").get(1, "mid", 100) == fm);
  CHECK(std::filesystem::exists(cache.directory() / "index.csv"));
}
