#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "photobook/game.hpp"

namespace testing {

inline std::filesystem::path fixtures() { return PHOTOBOOK_FIXTURES; }

/// Scratch directory removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("photobook-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline photobook::RoundAssignment assignment(int round_no, photobook::ImageSet a, photobook::ImageSet b) {
  photobook::RoundAssignment r;
  r.round_no = round_no;
  r.images_a = std::move(a);
  r.images_b = std::move(b);
  r.truth = photobook::derive_truth(r.images_a, r.images_b);
  return r;
}

/// Three rounds: shared {x,y}, shared {}, shared {x,y,z}.
inline photobook::GameSpec small_game(const std::string& id = "g1") {
  photobook::GameSpec g;
  g.game_id = id;
  g.source = photobook::GameSource::Fixture;
  g.rounds.push_back(assignment(1, {"x.jpg", "y.jpg", "a1.jpg"}, {"y.jpg", "b1.jpg", "x.jpg"}));
  g.rounds.push_back(assignment(2, {"a2.jpg", "a3.jpg", "a4.jpg"}, {"b2.jpg", "b3.jpg", "b4.jpg"}));
  g.rounds.push_back(assignment(3, {"x.jpg", "y.jpg", "z.jpg"}, {"z.jpg", "x.jpg", "y.jpg"}));
  return g;
}

}  // namespace testing
