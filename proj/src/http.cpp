#include "turneval/http.hpp"

#include <httplib.h>

#include "turneval/errors.hpp"

namespace turneval {

HttpResponse post_json(const std::string& url, const std::string& body,
                       const std::map<std::string, std::string>& headers,
                       std::chrono::seconds timeout) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw DataError("URL needs a scheme: " + url);
  const auto path_begin = url.find('/', scheme_end + 3);
  const std::string base = url.substr(0, path_begin);
  const std::string path = path_begin == std::string::npos ? "/" : url.substr(path_begin);

  httplib::Client client(base);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);

  httplib::Headers hdrs;
  for (const auto& [k, v] : headers) hdrs.emplace(k, v);
  auto res = client.Post(path, hdrs, body, "application/json");
  if (!res) {
    throw TransientError("POST " + url + " failed: " + httplib::to_string(res.error()));
  }
  return {res->status, res->body};
}

}  // namespace turneval
