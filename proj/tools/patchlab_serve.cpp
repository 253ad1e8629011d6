// Serves an in-process oracle over the line protocol, on stdio or one TCP
// connection. Used as a stand-in peer for external-oracle tests.

#include <CLI11.hpp>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstdio>
#include <iostream>
#include <memory>
#include <string>

#include "patchlab/external_oracle.hpp"
#include "patchlab/oracle.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Serve an oracle over the patchlab line protocol", "patchlab_serve"};
  std::string spec;
  int port = -1;
  app.add_option("oracle", spec, "Oracle spec, e.g. builtin:linear:<file>")->required();
  app.add_option("--listen", port, "Accept one TCP connection on 127.0.0.1:<port> (0: any free)");
  CLI11_PARSE(app, argc, argv);

  try {
    std::unique_ptr<patchlab::Oracle> oracle = patchlab::make_oracle(spec);
    if (port < 0) {
      auto channel = patchlab::fd_channel(STDIN_FILENO, STDOUT_FILENO);
      patchlab::serve_oracle(*oracle, *channel);
      return 0;
    }
    const int server = ::socket(AF_INET, SOCK_STREAM, 0);
    const int yes = 1;
    ::setsockopt(server, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    if (::bind(server, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
        ::listen(server, 1) != 0) {
      std::perror("listen");
      return 1;
    }
    socklen_t len = sizeof addr;
    ::getsockname(server, reinterpret_cast<sockaddr*>(&addr), &len);
    // The bound port, so callers passing 0 can connect.
    std::cout << ntohs(addr.sin_port) << std::endl;
    const int conn = ::accept(server, nullptr, nullptr);
    ::close(server);
    if (conn < 0) {
      std::perror("accept");
      return 1;
    }
    auto channel = patchlab::fd_channel(conn, conn);
    patchlab::serve_oracle(*oracle, *channel);
    ::close(conn);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "patchlab_serve: " << e.what() << "\n";
    return 1;
  }
}
