// SPDX-License-Identifier: Apache-2.0
#include "occaug/backend_wire.hpp"

#include "bytes.hpp"
#include "occaug/error.hpp"

namespace occaug::wire {

namespace {

constexpr std::string_view kRequestMagic = "OCAG";
constexpr std::string_view kResponseMagic = "OCAR";

enum Status : std::uint8_t { kOk = 0, kCapability = 1, kBackend = 2 };

void put_image(bytes::Writer& w, const Image& img) {
  w.u32(static_cast<std::uint32_t>(img.width()));
  w.u32(static_cast<std::uint32_t>(img.height()));
  w.u32(static_cast<std::uint32_t>(img.channels()));
  w.raw({reinterpret_cast<const char*>(img.bytes().data()), img.bytes().size()});
}

Image get_image(bytes::Reader& r) {
  const int width = static_cast<int>(r.u32());
  const int height = static_cast<int>(r.u32());
  const int channels = static_cast<int>(r.u32());
  if (width <= 0 || height <= 0 || channels <= 0 || width > 1 << 16 || height > 1 << 16 ||
      channels > 16)
    throw ParseError("frame carries invalid image dimensions");
  Image img(width, height, channels);
  const auto payload = r.raw(img.bytes().size());
  std::copy(payload.begin(), payload.end(), reinterpret_cast<char*>(img.bytes().data()));
  return img;
}

bytes::Reader open_response(std::string_view frame, Op expected) {
  bytes::Reader r(frame);
  if (r.raw(4) != kResponseMagic) throw BackendError("backend replied with an invalid frame");
  const auto op = static_cast<Op>(r.u8());
  if (op != expected) throw BackendError("backend replied to the wrong operation");
  const std::uint8_t status = r.u8();
  if (status == kCapability) throw CapabilityError(r.str());
  if (status != kOk) throw BackendError(r.str());
  return r;
}

std::string error_response(Op op, Status status, std::string_view message) {
  bytes::Writer w;
  w.raw(kResponseMagic);
  w.u8(static_cast<std::uint8_t>(op));
  w.u8(status);
  w.str(message);
  return w.take();
}

bytes::Writer ok_response(Op op) {
  bytes::Writer w;
  w.raw(kResponseMagic);
  w.u8(static_cast<std::uint8_t>(op));
  w.u8(kOk);
  return w;
}

}  // namespace

std::string encode_inpaint(const InpaintRequest& request) {
  bytes::Writer w;
  w.raw(kRequestMagic);
  w.u8(static_cast<std::uint8_t>(Op::Inpaint));
  put_image(w, request.image);
  w.str(rle_counts_to_string(encode_rle(request.mask).counts));
  w.str(request.prompt);
  w.u64(request.seed);
  w.u32(static_cast<std::uint32_t>(request.steps));
  return w.take();
}

std::string encode_features(const FeatureRequest& request) {
  bytes::Writer w;
  w.raw(kRequestMagic);
  w.u8(static_cast<std::uint8_t>(Op::Features));
  put_image(w, request.image);
  w.str(request.prompt);
  w.i32(request.timestep);
  w.str(request.tap);
  w.u64(request.seed);
  return w.take();
}

std::string encode_simple(Op op) {
  bytes::Writer w;
  w.raw(kRequestMagic);
  w.u8(static_cast<std::uint8_t>(op));
  return w.take();
}

Image decode_image_response(std::string_view frame) {
  auto r = open_response(frame, Op::Inpaint);
  return get_image(r);
}

FeatureMap decode_features_response(std::string_view frame) {
  auto r = open_response(frame, Op::Features);
  FeatureMap map;
  map.channels = static_cast<int>(r.u32());
  map.height = static_cast<int>(r.u32());
  map.width = static_cast<int>(r.u32());
  const std::size_t n = static_cast<std::size_t>(map.channels) * map.height * map.width;
  if (r.remaining() != n * 8) throw BackendError("feature response payload size mismatch");
  map.values.resize(n);
  for (auto& v : map.values) v = r.f64();
  return map;
}

CapabilityReport decode_capabilities_response(std::string_view frame) {
  auto r = open_response(frame, Op::Capabilities);
  return CapabilityReport::from_json(r.str());
}

std::uint64_t decode_checksum_response(std::string_view frame) {
  auto r = open_response(frame, Op::Checksum);
  return r.u64();
}

std::string handle_request(GenerativeBackend& backend, std::string_view frame) {
  Op op = Op::Capabilities;
  try {
    bytes::Reader r(frame);
    if (r.raw(4) != kRequestMagic) throw ParseError("bad request magic");
    op = static_cast<Op>(r.u8());
    switch (op) {
      case Op::Inpaint: {
        InpaintRequest req;
        req.image = get_image(r);
        const auto counts = rle_counts_from_string(r.str());
        req.mask = decode_rle(Rle{req.image.width(), req.image.height(), counts});
        req.prompt = r.str();
        req.seed = r.u64();
        req.steps = static_cast<int>(r.u32());
        auto w = ok_response(op);
        put_image(w, backend.inpaint(req));
        return w.take();
      }
      case Op::Features: {
        FeatureRequest req;
        req.image = get_image(r);
        req.prompt = r.str();
        req.timestep = r.i32();
        req.tap = r.str();
        req.seed = r.u64();
        const FeatureMap map = backend.extract_features(req);
        auto w = ok_response(op);
        w.u32(static_cast<std::uint32_t>(map.channels));
        w.u32(static_cast<std::uint32_t>(map.height));
        w.u32(static_cast<std::uint32_t>(map.width));
        for (double v : map.values) w.f64(v);
        return w.take();
      }
      case Op::Capabilities: {
        auto w = ok_response(op);
        w.str(backend.capabilities().to_json());
        return w.take();
      }
      case Op::Checksum: {
        auto w = ok_response(op);
        w.u64(backend.parameter_checksum());
        return w.take();
      }
    }
    throw ParseError("unknown request op " + std::to_string(static_cast<int>(op)));
  } catch (const CapabilityError& e) {
    return error_response(op, kCapability, e.what());
  } catch (const std::exception& e) {
    return error_response(op, kBackend, e.what());
  }
}

}  // namespace occaug::wire
