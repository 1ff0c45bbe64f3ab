#include "client.hpp"

#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <stdexcept>

#include <boost/asio.hpp>

extern char** environ;

namespace client {

namespace asio = boost::asio;
using tcp = asio::ip::tcp;

struct LineClient::Impl {
  asio::io_context io;
  tcp::socket socket{io};
  asio::streambuf buffer;
};

LineClient::LineClient(const std::string& host, std::uint16_t port) : impl_(std::make_unique<Impl>()) {
  impl_->socket.connect(tcp::endpoint(asio::ip::make_address(host), port));
}

LineClient::~LineClient() = default;

void LineClient::send_raw(const std::string& text) { asio::write(impl_->socket, asio::buffer(text)); }

nlohmann::json LineClient::read_message() {
  asio::read_until(impl_->socket, impl_->buffer, '\n');
  std::istream in(&impl_->buffer);
  std::string line;
  std::getline(in, line);
  return nlohmann::json::parse(line);
}

nlohmann::json LineClient::request(const std::string& op, const nlohmann::json& payload) {
  const int id = next_id_++;
  nlohmann::json msg{{"op", op}, {"request_id", id}, {"payload", payload}};
  send_raw(msg.dump() + "\n");
  while (true) {
    nlohmann::json reply = read_message();
    if (reply.contains("request_id") && reply["request_id"] == id) return reply;
    pushes_.push_back(std::move(reply));
  }
}

nlohmann::json LineClient::wait_push(const std::string& op) {
  for (const auto& p : pushes_) {
    if (p.value("op", "") == op) return p;
  }
  while (true) {
    nlohmann::json msg = read_message();
    pushes_.push_back(msg);
    if (msg.value("op", "") == op) return msg;
  }
}

namespace {

std::vector<char*> c_args(const std::vector<std::string>& argv) {
  std::vector<char*> out;
  for (const auto& a : argv) out.push_back(const_cast<char*>(a.c_str()));
  out.push_back(nullptr);
  return out;
}

}  // namespace

ChildProcess::ChildProcess(const std::vector<std::string>& argv) {
  int fds[2];
  if (pipe(fds) != 0) throw std::runtime_error("pipe failed");
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, fds[1], STDOUT_FILENO);
  posix_spawn_file_actions_addclose(&actions, fds[0]);
  auto args = c_args(argv);
  const int rc = posix_spawn(&pid_, args[0], &actions, nullptr, args.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  close(fds[1]);
  fd_ = fds[0];
  if (rc != 0) throw std::runtime_error("posix_spawn failed for " + argv[0]);
}

ChildProcess::~ChildProcess() {
  if (pid_ > 0) {
    kill(pid_, SIGTERM);
    int status = 0;
    waitpid(pid_, &status, 0);
  }
  if (fd_ >= 0) close(fd_);
}

std::string ChildProcess::read_line() {
  while (true) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    char chunk[512];
    const ssize_t n = read(fd_, chunk, sizeof chunk);
    if (n <= 0) {
      std::string rest;
      rest.swap(buffer_);
      return rest;
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

int run_command(const std::vector<std::string>& argv, std::string* output) {
  int fds[2];
  if (pipe(fds) != 0) throw std::runtime_error("pipe failed");
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, fds[1], STDOUT_FILENO);
  posix_spawn_file_actions_adddup2(&actions, fds[1], STDERR_FILENO);
  posix_spawn_file_actions_addclose(&actions, fds[0]);
  auto args = c_args(argv);
  pid_t pid = -1;
  const int rc = posix_spawn(&pid, args[0], &actions, nullptr, args.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  close(fds[1]);
  if (rc != 0) {
    close(fds[0]);
    throw std::runtime_error("posix_spawn failed for " + argv[0]);
  }
  std::string text;
  char chunk[4096];
  ssize_t n;
  while ((n = read(fds[0], chunk, sizeof chunk)) > 0) text.append(chunk, static_cast<std::size_t>(n));
  close(fds[0]);
  int status = 0;
  waitpid(pid, &status, 0);
  if (output) *output = std::move(text);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace client
