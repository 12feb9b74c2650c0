#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include "core/errors.hpp"
#include "core/importance.hpp"
#include "core/ingest.hpp"
#include "core/regions.hpp"
#include "json.hpp"

namespace httplib {
class Server;
}

namespace wxskill::service {

namespace fs = std::filesystem;

struct Response {
  int status = 200;
  std::string body;  // JSON
};

using Query = std::map<std::string, std::string>;

// Read-only view of a verified bundle. Requests are answered from memory.
class Bundle {
 public:
  /// Verifies the manifest first; a tampered or invalid bundle is refused.
  static Bundle open(const fs::path& dir);

  Response handle(std::string_view path, const Query& query = {}) const;

  const fs::path& dir() const { return dir_; }

 private:
  Response stations() const;
  Response station(const std::string& id) const;
  Response regions() const;
  Response error_cells(const Query& q) const;
  Response correlations() const;
  Response importance(const Query& q) const;
  Response glyphs(const Query& q) const;

  fs::path dir_;
  std::vector<ingest::StationMeta> stations_;
  std::vector<regions::StationProfile> profiles_;
  std::vector<regions::AssignmentRow> assignment_;
  Table zscores_;
  nlohmann::ordered_json dendrogram_;
  std::vector<errors::ErrorCell> cells_;
  std::vector<errors::CorrelationResult> correlations_;
  std::vector<importance::ImportanceRow> importance_;
  nlohmann::ordered_json geometry_;
};

/// HTTP front end for a bundle: GET /api/... plus optional static files.
class Server {
 public:
  Server(std::shared_ptr<const Bundle> bundle, std::optional<fs::path> static_dir = {});
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds (port 0 picks a free one), serves on a background thread, and
  /// returns the bound port.
  int start(const std::string& host, int port);
  void stop();
  /// Blocks until stop() is called from elsewhere.
  void wait();

 private:
  std::shared_ptr<const Bundle> bundle_;
  std::unique_ptr<httplib::Server> http_;
  std::thread thread_;
};

/// Splits "path?query", percent-decodes, and dispatches to Bundle::handle.
Response handle_url(const Bundle& bundle, std::string_view path_and_query);

/// Port from WXSKILL_PORT when set and valid, otherwise `fallback`.
int port_from_env(int fallback);

}  // namespace wxskill::service
