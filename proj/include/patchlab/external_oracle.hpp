#pragma once

// Newline-delimited JSON oracle protocol, version 1.
//
//   peer -> client  hello     {"proto":1,"k":K,"kind":"logit"|"probability",
//                              "contrastive":bool, ...}
//   client -> peer  request   {"id":N,"shape":[H,W,C],"pixels":"<b64>",
//                              "contrast":bool}
//                   or        {"id":N,"path":"<file>","contrast":bool}
//   peer -> client  response  {"id":N,"scores":[...],"contrast_scores":[...]?}
//                   or        {"id":N,"error":"<message>"}
//
// Pixels are base64 of little-endian binary32 samples in [0, 1], row-major
// H x W x C. Requests may be pipelined; responses are matched by id.

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>

#include "patchlab/oracle.hpp"

namespace patchlab {

inline constexpr int kProtocolVersion = 1;

/// Bidirectional line transport.
class LineChannel {
 public:
  virtual ~LineChannel() = default;
  /// Throws TransportError (batch index 0) on failure.
  virtual void write_line(std::string_view line) = 0;
  /// Returns false on orderly end of stream.
  virtual bool read_line(std::string& line) = 0;
};

/// Runs `/bin/sh -c command` with its stdin/stdout attached to the channel.
std::unique_ptr<LineChannel> spawn_subprocess(const std::string& command);
std::unique_ptr<LineChannel> connect_tcp(const std::string& host, std::uint16_t port);
/// Wraps an already-open pair of file descriptors (not closed on destruction).
std::unique_ptr<LineChannel> fd_channel(int read_fd, int write_fd);

struct PeerHello {
  int proto = 0;
  std::size_t k = 0;
  ScoreKind kind = ScoreKind::kLogit;
  bool contrastive = false;
};

class ExternalOracle final : public Oracle {
 public:
  /// Reads and checks the hello line. Throws VersionError on mismatch.
  ExternalOracle(std::unique_ptr<LineChannel> channel, std::string description,
                 int protocol_version = kProtocolVersion);

  std::size_t num_categories() const override { return hello_.k; }
  ScoreKind kind() const override { return hello_.kind; }
  bool supports_contrast() const override { return hello_.contrastive; }
  std::vector<ScoredImage> evaluate(std::span<const ImageTensor> images,
                                    bool want_contrast) override;
  std::string describe() const override { return description_; }
  const PeerHello& hello() const noexcept { return hello_; }

 private:
  std::unique_ptr<LineChannel> channel_;
  std::string description_;
  PeerHello hello_;
  std::mutex mutex_;
  std::uint64_t next_id_ = 1;
  std::size_t batches_sent_ = 0;
};

/// `cmd:<command>` or `tcp:<host>:<port>`.
std::unique_ptr<ExternalOracle> external_oracle_connect(std::string_view address,
                                                        int protocol_version);

/// Peer side of the protocol: sends hello, then answers requests with
/// `oracle` until the channel closes. Malformed requests get an error
/// response and the loop continues. Returns the number of requests served.
std::size_t serve_oracle(Oracle& oracle, LineChannel& channel);

}  // namespace patchlab
