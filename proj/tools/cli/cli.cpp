#include "cli.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <memory>

#include "commands.hpp"
#include "seasonet/errors.hpp"
#include "seasonet/evaluation.hpp"
#include "seasonet/version.hpp"

namespace seasonet::cli {

std::string tool_version() { return SEASONET_VERSION_STRING; }

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(ParseError::Kind::kIo, 0, "cannot open '" + path.string() + "'");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
  std::string hex;
  char h[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(h, sizeof h, "%02x", md[i]);
    hex += h;
  }
  return hex;
}

RunManifest::RunManifest(std::string command, std::vector<std::string> argv)
    : command_(std::move(command)), argv_(std::move(argv)), t0_(std::chrono::steady_clock::now()) {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  started_utc_ = buf;
}

void RunManifest::add_input(const std::filesystem::path& path) {
  if (std::filesystem::is_directory(path)) {
    for (const auto& e : std::filesystem::recursive_directory_iterator(path)) {
      if (e.is_regular_file()) inputs_[e.path().string()] = sha256_file(e.path());
    }
  } else {
    inputs_[path.string()] = sha256_file(path);
  }
}

void RunManifest::add_output(const std::filesystem::path& path) { outputs_.push_back(path.string()); }

void RunManifest::mark(const std::string& phase) {
  marks_.emplace_back(phase, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count());
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json j;
  j["command"] = command_;
  j["argv"] = argv_;
  j["config"] = config_;
  j["inputs"] = nlohmann::json::object();
  for (const auto& [p, d] : inputs_) j["inputs"][p] = {{"sha256", d}};
  j["outputs"] = outputs_;
  j["seed"] = has_seed_ ? nlohmann::json(seed_) : nlohmann::json(nullptr);
  j["version"] = tool_version();
  nlohmann::json t;
  t["started_utc"] = started_utc_;
  for (const auto& [k, v] : marks_) t[k + "_s"] = v;
  t["wall_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  j["timings"] = t;
  return j;
}

void RunManifest::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  eval::write_text(dir / "run_manifest.json", to_json().dump(2) + "\n");
}

namespace {

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kUsage;
  if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const CoverageError*>(&e) ||
      dynamic_cast<const AlignmentError*>(&e) || dynamic_cast<const DimensionError*>(&e) ||
      dynamic_cast<const InsufficientHistoryError*>(&e) || dynamic_cast<const OutOfRangeError*>(&e) ||
      dynamic_cast<const CorruptionError*>(&e) || dynamic_cast<const DegenerateInputError*>(&e) ||
      dynamic_cast<const InvariantError*>(&e)) {
    return kData;
  }
  return kRuntime;
}

const char* label_for(int code) {
  switch (code) {
    case kUsage: return "usage error";
    case kData: return "data error";
    default: return "error";
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Monthly temperature forecasting with circular-padded UNet/UNet++ models", "seasonet"};
  app.set_version_flag("--version", tool_version());
  app.require_subcommand(1);
  Context ctx{out, err, args, {}};
  register_commands(app, ctx);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << tool_version() << "\n";
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "seasonet: usage error: " << e.what() << "\n";
    return kUsage;
  }
  if (!ctx.action) {
    err << "seasonet: usage error: no command given\n";
    return kUsage;
  }
  try {
    ctx.action();
  } catch (const CLI::ParseError& e) {
    err << "seasonet: usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    const int code = exit_code_for(e);
    err << "seasonet: " << label_for(code) << ": " << e.what() << "\n";
    return code;
  }
  return kOk;
}

}  // namespace seasonet::cli
