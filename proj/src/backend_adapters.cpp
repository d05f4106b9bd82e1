// SPDX-License-Identifier: Apache-2.0
#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <mutex>
#include <thread>

#include <httplib.h>

#include "occaug/backend_wire.hpp"
#include "occaug/error.hpp"
#include "occaug/generative_backend.hpp"

namespace occaug {

namespace {

void write_all(int fd, const char* data, std::size_t n) {
  while (n > 0) {
    const ssize_t w = ::write(fd, data, n);
    if (w < 0 && errno == EINTR) continue;
    if (w <= 0) throw BackendError(std::string("backend process write failed: ") + std::strerror(errno));
    data += w;
    n -= static_cast<std::size_t>(w);
  }
}

void read_all(int fd, char* data, std::size_t n) {
  while (n > 0) {
    const ssize_t r = ::read(fd, data, n);
    if (r < 0 && errno == EINTR) continue;
    if (r == 0) throw BackendError("backend process closed its output");
    if (r < 0) throw BackendError(std::string("backend process read failed: ") + std::strerror(errno));
    data += r;
    n -= static_cast<std::size_t>(r);
  }
}

}  // namespace

LocalProcessBackend::LocalProcessBackend(std::string command) : command_(std::move(command)) {
  // A dead child must surface as a read/write error rather than SIGPIPE.
  ::signal(SIGPIPE, SIG_IGN);
  int in_pipe[2];
  int out_pipe[2];
  if (::pipe(in_pipe) != 0 || ::pipe(out_pipe) != 0)
    throw BackendError("cannot create pipes for backend process");
  pid_ = ::fork();
  if (pid_ < 0) throw BackendError("cannot fork backend process");
  if (pid_ == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  ::fcntl(to_child_, F_SETFD, FD_CLOEXEC);
  ::fcntl(from_child_, F_SETFD, FD_CLOEXEC);
  try {
    caps_ = wire::decode_capabilities_response(call(wire::encode_simple(wire::Op::Capabilities)));
  } catch (const Error& e) {
    throw BackendError("backend process '" + command_ + "' is unavailable: " + e.what());
  }
}

LocalProcessBackend::~LocalProcessBackend() {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  if (pid_ > 0) {
    int status = 0;
    ::waitpid(pid_, &status, 0);
  }
}

std::string LocalProcessBackend::call(const std::string& frame) const {
  std::lock_guard lock(mutex_);
  char header[4];
  const auto n = static_cast<std::uint32_t>(frame.size());
  for (int i = 0; i < 4; ++i) header[i] = static_cast<char>((n >> (8 * i)) & 0xff);
  write_all(to_child_, header, 4);
  write_all(to_child_, frame.data(), frame.size());
  read_all(from_child_, header, 4);
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(static_cast<unsigned char>(header[i])) << (8 * i);
  std::string reply(len, '\0');
  read_all(from_child_, reply.data(), len);
  return reply;
}

Image LocalProcessBackend::inpaint(const InpaintRequest& request) {
  check_request(caps_, request);
  return wire::decode_image_response(call(wire::encode_inpaint(request)));
}

FeatureMap LocalProcessBackend::extract_features(const FeatureRequest& request) {
  check_request(caps_, request);
  return wire::decode_features_response(call(wire::encode_features(request)));
}

CapabilityReport LocalProcessBackend::capabilities() const { return caps_; }

std::uint64_t LocalProcessBackend::parameter_checksum() const {
  return wire::decode_checksum_response(call(wire::encode_simple(wire::Op::Checksum)));
}

RemoteBackend::RemoteBackend(std::string host, int port) : host_(std::move(host)), port_(port) {
  caps_ = wire::decode_capabilities_response(call(wire::encode_simple(wire::Op::Capabilities)));
}

std::string RemoteBackend::call(const std::string& frame) const {
  httplib::Client client(host_, port_);
  client.set_connection_timeout(5);
  client.set_read_timeout(600);
  auto res = client.Post("/v1/call", frame, "application/octet-stream");
  if (!res)
    throw BackendError("cannot reach backend at " + host_ + ":" + std::to_string(port_) + ": " +
                       httplib::to_string(res.error()));
  if (res->status != 200)
    throw BackendError("backend at " + host_ + ":" + std::to_string(port_) + " returned HTTP " +
                       std::to_string(res->status));
  return res->body;
}

Image RemoteBackend::inpaint(const InpaintRequest& request) {
  check_request(caps_, request);
  return wire::decode_image_response(call(wire::encode_inpaint(request)));
}

FeatureMap RemoteBackend::extract_features(const FeatureRequest& request) {
  check_request(caps_, request);
  return wire::decode_features_response(call(wire::encode_features(request)));
}

CapabilityReport RemoteBackend::capabilities() const { return caps_; }

std::uint64_t RemoteBackend::parameter_checksum() const {
  return wire::decode_checksum_response(call(wire::encode_simple(wire::Op::Checksum)));
}

}  // namespace occaug

namespace occaug::wire {

void serve_stream(GenerativeBackend& backend, int in_fd, int out_fd) {
  while (true) {
    char header[4];
    std::size_t got = 0;
    while (got < 4) {
      const ssize_t r = ::read(in_fd, header + got, 4 - got);
      if (r < 0 && errno == EINTR) continue;
      if (r <= 0) {
        if (got == 0) return;  // clean shutdown
        throw BackendError("truncated frame header on input");
      }
      got += static_cast<std::size_t>(r);
    }
    std::uint32_t len = 0;
    for (int i = 0; i < 4; ++i)
      len |= static_cast<std::uint32_t>(static_cast<unsigned char>(header[i])) << (8 * i);
    std::string frame(len, '\0');
    read_all(in_fd, frame.data(), len);
    const std::string reply = handle_request(backend, frame);
    const auto n = static_cast<std::uint32_t>(reply.size());
    for (int i = 0; i < 4; ++i) header[i] = static_cast<char>((n >> (8 * i)) & 0xff);
    write_all(out_fd, header, 4);
    write_all(out_fd, reply.data(), reply.size());
  }
}

struct HttpServer::Impl {
  GenerativeBackend& backend;
  httplib::Server server;
  std::mutex call_mutex;
  std::thread thread;
};

HttpServer::HttpServer(GenerativeBackend& backend) : impl_(new Impl{backend, {}, {}, {}}) {
  impl_->server.Post("/v1/call", [this](const httplib::Request& req, httplib::Response& res) {
    std::string reply;
    {
      std::lock_guard lock(impl_->call_mutex);
      reply = handle_request(impl_->backend, req.body);
    }
    res.set_content(reply, "application/octet-stream");
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw BackendError("cannot bind HTTP server on " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port))
    throw BackendError("cannot bind HTTP server on " + host + ":" + std::to_string(port));
  return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::start() {
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void HttpServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace occaug::wire
