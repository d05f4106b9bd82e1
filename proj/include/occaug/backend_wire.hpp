// SPDX-License-Identifier: Apache-2.0
#pragma once

// Binary request/response frames shared by the local-process and remote
// backend adapters. All integers are little-endian.
//
// Request:  "OCAG" u8 op, then
//   op 1 inpaint:   image, str mask_rle, str prompt, u64 seed, u32 steps
//   op 2 features:  image, str prompt, i32 timestep, str tap, u64 seed
//   op 3 capabilities, op 4 checksum: no payload
// Response: "OCAR" u8 status (0 ok, 1 capability error, 2 backend error), then
//   status != 0:    str message
//   op 1:           image
//   op 2:           u32 c, u32 h, u32 w, f64[c*h*w]
//   op 3:           str capability JSON
//   op 4:           u64 checksum
// image = u32 width, u32 height, u32 channels, planar bytes
// str   = u32 length, bytes
// mask_rle is the COCO RLE string of the mask (its size is the image size).

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>

#include "occaug/generative_backend.hpp"

namespace occaug::wire {

enum class Op : std::uint8_t { Inpaint = 1, Features = 2, Capabilities = 3, Checksum = 4 };

std::string encode_inpaint(const InpaintRequest& request);
std::string encode_features(const FeatureRequest& request);
std::string encode_simple(Op op);

Image decode_image_response(std::string_view frame);
FeatureMap decode_features_response(std::string_view frame);
CapabilityReport decode_capabilities_response(std::string_view frame);
std::uint64_t decode_checksum_response(std::string_view frame);

// Server side: decodes one request, runs it on the backend, and encodes the
// response. Backend exceptions become error responses.
std::string handle_request(GenerativeBackend& backend, std::string_view frame);

// Serves u32-length-prefixed frames from in_fd to out_fd until in_fd closes.
void serve_stream(GenerativeBackend& backend, int in_fd, int out_fd);

// HTTP endpoint POST /v1/call carrying one frame per request.
class HttpServer {
 public:
  explicit HttpServer(GenerativeBackend& backend);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  void listen();  // blocks until stop()
  void start();   // listen() on a background thread
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace occaug::wire
