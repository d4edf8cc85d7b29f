// Copyright The arbilomod contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "arbilomod/session.hpp"

namespace arbilomod
{

struct HttpReply
{
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

// Field payload: "ALMF", n as uint32, min and max as float32 (16 bytes, little endian),
// then the (n+1)^2 lattice values as float64, row-major with x running fastest. Center
// nodes of the crossed mesh are not sampled.
constexpr char kFieldMagic[4] = {'A', 'L', 'M', 'F'};
std::string encode_field(const Mesh &mesh, const Vector &field);

struct DecodedField
{
  std::uint32_t n = 0;
  float min = 0.0f, max = 0.0f;
  std::vector<double> values;
};
DecodedField decode_field(const std::string &bytes);

// HTTP facade over one session. Mutations (geometry edits, solves) run one at a time and
// are rejected with 409 while another is in flight; reads use the last published
// snapshot.
class Service
{
public:
  explicit Service(std::unique_ptr<Session> session);

  HttpReply put_geometry(const std::string &body);
  HttpReply post_solve(const std::string &body);
  HttpReply get_field(const std::string &mu);
  HttpReply get_indicators() const;
  HttpReply get_status() const;

  const Session &session() const { return *session_; }

private:
  struct Snapshot
  {
    nlohmann::json status;
    nlohmann::json indicators;
    std::map<double, std::string> fields;
  };
  void publish(std::map<double, std::string> fields = {});

  std::unique_ptr<Session> session_;
  std::mutex mutate_;
  mutable std::mutex snapshot_mutex_;
  std::shared_ptr<const Snapshot> snapshot_;
  std::vector<double> indicators_;
  double indicators_mu_ = 0.0;
};

// Binds the service routes to a socket.
class HttpServer
{
public:
  explicit HttpServer(Service &service);
  ~HttpServer();
  HttpServer(const HttpServer &) = delete;
  HttpServer &operator=(const HttpServer &) = delete;

  // Returns the bound port (an ephemeral one when port is 0).
  int bind(const std::string &host, int port);
  // Blocks until stop().
  void listen();
  void stop();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace arbilomod
