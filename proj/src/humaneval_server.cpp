// Copyright 2026 The sigverify Authors
// SPDX-License-Identifier: Apache-2.0

#include <cctype>
#include <fstream>
#include <sstream>

// Eigen (via the library headers) must come first: httplib pulls in
// <resolv.h>, whose _res macro collides with Eigen identifiers.
#include "sigverify/error.hpp"
#include "sigverify/humaneval.hpp"

#include <httplib.h>

namespace sigverify::humaneval {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct Server::Impl {
  Session& session;
  httplib::Server http;
  explicit Impl(Session& s) : session(s) {}
};

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& msg) {
  send_json(res, status, json{{"error", msg}});
}

/// Maps library errors onto HTTP status codes.
template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const NotFoundError& e) {
    send_error(res, 404, e.what());
  } catch (const ConflictError& e) {
    send_error(res, 409, e.what());
  } catch (const ValidationError& e) {
    send_error(res, 400, e.what());
  } catch (const json::exception& e) {
    send_error(res, 400, std::string("malformed request: ") + e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, e.what());
  }
}

std::string content_type(const fs::path& p) {
  std::string ext = p.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".tif" || ext == ".tiff") return "image/tiff";
  if (ext == ".bmp") return "image/bmp";
  return "application/octet-stream";
}

}  // namespace

Server::Server(Session& session, std::optional<fs::path> static_dir)
    : impl_(std::make_unique<Impl>(session)) {
  auto& http = impl_->http;
  Session& s = session;

  http.Get(R"(/session/([^/]+)/next)", [&s](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, s.next(req.matches[1])); });
  });

  http.Post(R"(/session/([^/]+)/vote)", [&s](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = json::parse(req.body);
      const std::string pair_id = body.at("pair_id");
      const Decision d = parse_decision(body.at("decision").get<std::string>());
      send_json(res, 200, s.vote(req.matches[1], pair_id, d));
    });
  });

  http.Get("/progress", [&s](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, s.progress()); });
  });

  http.Get("/export", [&s](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] {
      res.status = 200;
      res.set_content(s.export_csv(), "text/csv");
    });
  });

  http.Get(R"(/image/([^/]+)/([^/]+))", [&s](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const fs::path p = s.image_path(req.matches[1], req.matches[2]);
      std::ifstream is(p, std::ios::binary);
      if (!is) throw NotFoundError("image file missing");
      std::stringstream ss;
      ss << is.rdbuf();
      res.status = 200;
      res.set_content(ss.str(), content_type(p));
    });
  });

  if (static_dir && !http.set_mount_point("/", static_dir->string())) {
    throw IoError("static directory not found: " + static_dir->string());
  }
}

Server::~Server() { stop(); }

int Server::bind(const std::string& host, int port) {
  auto& http = impl_->http;
  const int bound = port == 0 ? http.bind_to_any_port(host) : (http.bind_to_port(host, port) ? port : -1);
  if (bound <= 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void Server::listen() { impl_->http.listen_after_bind(); }

void Server::stop() {
  if (impl_ && impl_->http.is_running()) impl_->http.stop();
}

}  // namespace sigverify::humaneval
