#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace lesionbench {

inline constexpr std::string_view kToolkitVersion = "0.3.0";

namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kIo = 1;
inline constexpr int kValidation = 2;
}  // namespace exit_code

// key=value record written next to every output as `<out>.manifest.txt`.
struct RunManifest {
  std::string subcommand;
  std::vector<std::pair<std::string, std::string>> arguments;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::uint64_t>> input_digests;
  std::string version{kToolkitVersion};
  std::string timestamp;

  std::string to_text() const;
};

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

// Worker count from LESIONBENCH_THREADS, defaulting to 1.
std::size_t worker_threads_from_env();

// Entry point of the `lesionbench` executable; args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lesionbench
