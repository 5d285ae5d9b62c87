#pragma once
// Adapter that drives an external annotator process over newline-
// delimited JSON: one {"image_id", "queries": [...]} request per line on
// the child's stdin, one {"boxes": [[x0,y0,x1,y1], ...], "scores":
// [[per-query...], ...]} response per line on its stdout. Lets a real
// neural annotator be plugged into the pipeline without linking it in.

#include <json.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "ovpipe/annotate.hpp"

namespace ovpipe {

class ExternAnnotator : public Annotator {
 public:
  // Starts `command` via /bin/sh -c.
  explicit ExternAnnotator(const std::string& command) {
    int to_child[2];
    int from_child[2];
    if (pipe(to_child) != 0 || pipe(from_child) != 0) {
      throw std::runtime_error("extern annotator: pipe() failed");
    }
    pid_ = fork();
    if (pid_ < 0) {
      throw std::runtime_error("extern annotator: fork() failed");
    }
    if (pid_ == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    to_child_ = fdopen(to_child[1], "w");
    from_child_ = fdopen(from_child[0], "r");
    if (!to_child_ || !from_child_) {
      throw std::runtime_error("extern annotator: fdopen() failed");
    }
  }

  ExternAnnotator(const ExternAnnotator&) = delete;
  ExternAnnotator& operator=(const ExternAnnotator&) = delete;

  ~ExternAnnotator() override {
    if (to_child_) fclose(to_child_);
    if (from_child_) fclose(from_child_);
    if (pid_ > 0) {
      int status = 0;
      waitpid(pid_, &status, 0);
    }
  }

  std::vector<BoxCandidate> annotate(
      const ImageRecord& image,
      const std::vector<std::string>& queries) override {
    std::lock_guard<std::mutex> lock(mutex_);
    const nlohmann::json request{{"image_id", image.id}, {"queries", queries}};
    const std::string line = request.dump();
    if (std::fputs(line.c_str(), to_child_) == EOF ||
        std::fputc('\n', to_child_) == EOF || std::fflush(to_child_) != 0) {
      throw std::runtime_error("extern annotator: write failed");
    }
    std::string response = read_line();
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(response);
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string("extern annotator: bad response: ") +
                               e.what());
    }
    const auto& boxes = j.at("boxes");
    const auto& scores = j.at("scores");
    if (boxes.size() != scores.size()) {
      throw std::runtime_error("extern annotator: boxes/scores length mismatch");
    }
    std::vector<BoxCandidate> out;
    out.reserve(boxes.size());
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      BoxCandidate c;
      c.box = boxes[i].get<Box>();
      c.scores = scores[i].get<std::vector<double>>();
      out.push_back(std::move(c));
    }
    return out;
  }

 private:
  std::string read_line() {
    std::string line;
    int ch;
    while ((ch = std::fgetc(from_child_)) != EOF && ch != '\n') {
      line.push_back(static_cast<char>(ch));
    }
    if (line.empty() && ch == EOF) {
      throw std::runtime_error("extern annotator: child closed its output");
    }
    return line;
  }

  pid_t pid_ = -1;
  std::FILE* to_child_ = nullptr;
  std::FILE* from_child_ = nullptr;
  std::mutex mutex_;
};

}  // namespace ovpipe
