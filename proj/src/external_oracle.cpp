#include "patchlab/external_oracle.hpp"

#include <netdb.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <csignal>
#include <cstring>
#include <exception>
#include <json.hpp>
#include <thread>
#include <unordered_map>

#include "patchlab/base64.hpp"
#include "patchlab/error.hpp"
#include "patchlab/image_io.hpp"

namespace patchlab {
namespace {

using nlohmann::json;

class FdChannel : public LineChannel {
 public:
  FdChannel(int read_fd, int write_fd, bool owns)
      : read_fd_(read_fd), write_fd_(write_fd), owns_(owns) {}
  ~FdChannel() override { close_fds(); }

  void write_line(std::string_view line) override {
    std::string buf(line);
    buf.push_back('\n');
    std::size_t done = 0;
    while (done < buf.size()) {
      const ssize_t n = ::write(write_fd_, buf.data() + done, buf.size() - done);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("oracle write failed: ") + std::strerror(errno), 0);
      }
      done += static_cast<std::size_t>(n);
    }
  }

  bool read_line(std::string& line) override {
    for (;;) {
      const auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        line.assign(buffer_, 0, nl);
        buffer_.erase(0, nl + 1);
        return true;
      }
      char chunk[1 << 16];
      const ssize_t n = ::read(read_fd_, chunk, sizeof chunk);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("oracle read failed: ") + std::strerror(errno), 0);
      }
      if (n == 0) {
        if (buffer_.empty()) return false;
        line = std::move(buffer_);
        buffer_.clear();
        return true;
      }
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 protected:
  void close_fds() {
    if (!owns_) return;
    if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
    if (read_fd_ >= 0) ::close(read_fd_);
    read_fd_ = write_fd_ = -1;
  }

 private:
  int read_fd_;
  int write_fd_;
  bool owns_;
  std::string buffer_;
};

class SubprocessChannel final : public FdChannel {
 public:
  SubprocessChannel(int read_fd, int write_fd, pid_t pid)
      : FdChannel(read_fd, write_fd, true), pid_(pid) {}
  ~SubprocessChannel() override {
    // Closing stdin asks the peer to exit; reap it afterwards.
    close_fds();
    int status = 0;
    ::waitpid(pid_, &status, 0);
  }

 private:
  pid_t pid_;
};

std::vector<double> scores_from(const json& j, const char* key, std::size_t k) {
  auto v = j.at(key).get<std::vector<double>>();
  if (v.size() != k) {
    throw ProtocolError(std::string(key) + " has " + std::to_string(v.size()) +
                        " values, peer advertised k=" + std::to_string(k));
  }
  return v;
}

}  // namespace

std::unique_ptr<LineChannel> fd_channel(int read_fd, int write_fd) {
  return std::make_unique<FdChannel>(read_fd, write_fd, false);
}

std::unique_ptr<LineChannel> spawn_subprocess(const std::string& command) {
  std::signal(SIGPIPE, SIG_IGN);
  int to_child[2];
  int from_child[2];
  if (::pipe(to_child) != 0 || ::pipe(from_child) != 0) {
    throw TransportError("pipe() failed", 0);
  }
  const pid_t pid = ::fork();
  if (pid < 0) throw TransportError("fork() failed", 0);
  if (pid == 0) {
    ::dup2(to_child[0], STDIN_FILENO);
    ::dup2(from_child[1], STDOUT_FILENO);
    ::close(to_child[0]);
    ::close(to_child[1]);
    ::close(from_child[0]);
    ::close(from_child[1]);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(to_child[0]);
  ::close(from_child[1]);
  return std::make_unique<SubprocessChannel>(from_child[0], to_child[1], pid);
}

std::unique_ptr<LineChannel> connect_tcp(const std::string& host, std::uint16_t port) {
  std::signal(SIGPIPE, SIG_IGN);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string port_text = std::to_string(port);
  if (::getaddrinfo(host.c_str(), port_text.c_str(), &hints, &res) != 0) {
    throw TransportError("cannot resolve " + host, 0);
  }
  int fd = -1;
  for (addrinfo* ai = res; ai; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw TransportError("cannot connect to " + host + ":" + port_text, 0);
  return std::make_unique<FdChannel>(fd, fd, true);
}

ExternalOracle::ExternalOracle(std::unique_ptr<LineChannel> channel,
                               std::string description, int protocol_version)
    : channel_(std::move(channel)), description_(std::move(description)) {
  std::string line;
  if (!channel_->read_line(line)) {
    throw TransportError("oracle peer closed before sending hello", 0);
  }
  try {
    const json j = json::parse(line);
    hello_.proto = j.at("proto").get<int>();
    if (hello_.proto != protocol_version) {
      throw VersionError("oracle peer speaks protocol " + std::to_string(hello_.proto) +
                         ", expected " + std::to_string(protocol_version));
    }
    hello_.k = j.at("k").get<std::size_t>();
    hello_.kind = parse_score_kind(j.value("kind", std::string("logit")));
    hello_.contrastive = j.value("contrastive", false);
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed hello: ") + e.what());
  }
  if (hello_.k == 0) throw ProtocolError("oracle peer advertised k=0");
}

std::vector<ScoredImage> ExternalOracle::evaluate(std::span<const ImageTensor> images,
                                                  bool want_contrast) {
  if (want_contrast && !hello_.contrastive) {
    throw ContractError("oracle peer did not advertise contrastive scoring");
  }
  std::lock_guard<std::mutex> lock(mutex_);
  const std::size_t batch = batches_sent_++;
  std::unordered_map<std::uint64_t, std::size_t> slot_of;
  std::vector<std::string> requests;
  requests.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const ImageTensor& img = images[i];
    const std::uint64_t id = next_id_++;
    slot_of.emplace(id, i);
    const json req = {{"id", id},
                      {"shape", {img.height(), img.width(), img.channels()}},
                      {"pixels", base64::encode_f32(img.data())},
                      {"contrast", want_contrast}};
    requests.push_back(req.dump());
  }
  // Requests are written from a separate thread so a peer that answers
  // while we are still sending cannot fill both pipes and deadlock.
  std::exception_ptr write_error;
  std::thread writer([&] {
    try {
      for (const auto& r : requests) channel_->write_line(r);
    } catch (...) {
      write_error = std::current_exception();
    }
  });
  struct Join {
    std::thread& t;
    ~Join() { t.join(); }
  } join{writer};
  try {
    std::vector<ScoredImage> out(images.size());
    std::vector<bool> filled(images.size(), false);
    std::string line;
    for (std::size_t received = 0; received < images.size(); ++received) {
      if (!channel_->read_line(line)) {
        throw TransportError("oracle peer exited during batch " + std::to_string(batch),
                             batch);
      }
      json resp;
      try {
        resp = json::parse(line);
      } catch (const json::exception& e) {
        throw ProtocolError(std::string("malformed oracle response: ") + e.what());
      }
      if (!resp.contains("id")) throw ProtocolError("oracle response without id");
      const auto it = slot_of.find(resp["id"].get<std::uint64_t>());
      if (it == slot_of.end() || filled[it->second]) {
        throw ProtocolError("oracle response id " + resp["id"].dump() +
                            " does not match an outstanding request");
      }
      if (resp.contains("error")) {
        throw ProtocolError("oracle peer error for request " + resp["id"].dump() + ": " +
                            resp["error"].dump());
      }
      ScoredImage s;
      s.base = OracleScores{scores_from(resp, "scores", hello_.k), hello_.kind};
      if (want_contrast) {
        if (!resp.contains("contrast_scores")) {
          throw ProtocolError("oracle response lacks contrast_scores");
        }
        s.contrast = OracleScores{scores_from(resp, "contrast_scores", hello_.k), hello_.kind};
      }
      out[it->second] = std::move(s);
      filled[it->second] = true;
    }
    return out;
  } catch (const TransportError& e) {
    throw TransportError(e.what(), batch);
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed oracle response: ") + e.what());
  }
}

std::unique_ptr<ExternalOracle> external_oracle_connect(std::string_view address,
                                                        int protocol_version) {
  if (address.starts_with("cmd:")) {
    std::string command(address.substr(4));
    if (command.size() >= 2 && command.front() == '"' && command.back() == '"') {
      command = command.substr(1, command.size() - 2);
    }
    return std::make_unique<ExternalOracle>(spawn_subprocess(command),
                                            std::string(address), protocol_version);
  }
  if (address.starts_with("tcp:")) {
    const std::string_view rest = address.substr(4);
    const auto colon = rest.rfind(':');
    if (colon == std::string_view::npos) {
      throw ContractError("tcp oracle address must be tcp:<host>:<port>");
    }
    const int port = std::stoi(std::string(rest.substr(colon + 1)));
    if (port <= 0 || port > 65535) throw ContractError("tcp oracle port out of range");
    return std::make_unique<ExternalOracle>(
        connect_tcp(std::string(rest.substr(0, colon)), static_cast<std::uint16_t>(port)),
        std::string(address), protocol_version);
  }
  throw ContractError("external oracle address must start with cmd: or tcp:");
}

std::size_t serve_oracle(Oracle& oracle, LineChannel& channel) {
  const json hello = {{"proto", kProtocolVersion},
                      {"k", oracle.num_categories()},
                      {"kind", score_kind_name(oracle.kind())},
                      {"contrastive", oracle.supports_contrast()},
                      {"model", oracle.describe()}};
  channel.write_line(hello.dump());
  std::size_t served = 0;
  std::string line;
  while (channel.read_line(line)) {
    if (line.empty()) continue;
    json id = nullptr;
    json resp;
    try {
      const json req = json::parse(line);
      id = req.at("id");
      const bool want_contrast = req.value("contrast", false);
      ImageTensor img;
      if (req.contains("path")) {
        img = read_image(req["path"].get<std::string>());
      } else {
        const auto shape = req.at("shape").get<std::vector<std::size_t>>();
        if (shape.size() != 3) throw ProtocolError("shape must be [H,W,C]");
        img = ImageTensor(shape[0], shape[1], shape[2],
                          base64::decode_f32(req.at("pixels").get<std::string>()));
      }
      auto scored = oracle.evaluate(std::span<const ImageTensor>(&img, 1), want_contrast);
      resp = {{"id", id}, {"scores", scored[0].base.scores}};
      if (want_contrast) resp["contrast_scores"] = scored[0].contrast.value().scores;
    } catch (const std::exception& e) {
      resp = {{"id", id}, {"error", e.what()}};
    }
    channel.write_line(resp.dump());
    ++served;
  }
  return served;
}

}  // namespace patchlab
