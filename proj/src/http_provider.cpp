#include <cstdlib>

#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "xlcw/errors.hpp"
#include "xlcw/translation.hpp"

namespace xlcw {

HttpProvider::HttpProvider(HttpProviderConfig config) : config_(std::move(config)) {
  if (config_.base_url.empty()) throw ProviderError("http provider: base_url is empty");
}

std::string HttpProvider::translate(const std::string& text, const std::string& source_language,
                                    const std::string& target_language) {
  count_call();
  httplib::Client client(config_.base_url);
  client.set_connection_timeout(config_.timeout);
  client.set_read_timeout(config_.timeout);

  nlohmann::json body{{"q", text}, {"source", source_language}, {"target", target_language}};
  if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
    body["api_key"] = key;
  }
  const auto response = client.Post(config_.path, body.dump(), "application/json");
  if (!response) {
    throw ProviderError(fmt::format("http provider: request to {} failed ({})", config_.base_url,
                                    httplib::to_string(response.error())));
  }
  if (response->status != 200) {
    throw ProviderError(fmt::format("http provider: status {}", response->status));
  }
  try {
    return nlohmann::json::parse(response->body).at("translatedText").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ProviderError(fmt::format("http provider: malformed response ({})", e.what()));
  }
}

}  // namespace xlcw
