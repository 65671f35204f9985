#pragma once

#include <chrono>
#include <map>
#include <string>

namespace turneval {

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// POSTs a JSON body to `url` (http:// or https://). Connection-level
/// failures throw TransientError; any HTTP status is returned to the caller.
HttpResponse post_json(const std::string& url, const std::string& body,
                       const std::map<std::string, std::string>& headers = {},
                       std::chrono::seconds timeout = std::chrono::seconds(60));

}  // namespace turneval
