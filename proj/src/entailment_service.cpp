#include "semuq/clustering.hpp"

#include <httplib.h>
#include <json.hpp>

namespace semuq {

ServiceBackend::ServiceBackend(BackendConfig config)
  : config_(std::move(config))
  , template_(config_.prompt_template.empty() ? kDefaultEntailmentTemplate : config_.prompt_template)
{
  if (config_.retries < 1)
    throw ParameterError("entailment service retries must be at least 1");
  const std::string& url = config_.endpoint;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw ParameterError("entailment endpoint must be an absolute http URL, got '" + url + "'");
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
}

Verdict ServiceBackend::judge(std::string_view question,
                              const Candidate& premise,
                              const Candidate& hypothesis) const
{
  auto with_question = [&](std::string_view answer) {
    if (!config_.concatenate_question || question.empty())
      return std::string(answer);
    return std::string(question) + " " + std::string(answer);
  };
  const nlohmann::json request = { { "question", std::string(question) },
                                   { "text1", with_question(premise.text) },
                                   { "text2", with_question(hypothesis.text) },
                                   { "template", template_ } };
  const std::string body = request.dump();

  httplib::Client client(scheme_host_port_);
  client.set_connection_timeout(5);
  client.set_read_timeout(30);

  std::string last_failure;
  for (int attempt = 1; attempt <= config_.retries; ++attempt) {
    auto res = client.Post(path_, body, "application/json");
    if (!res) {
      last_failure = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_failure = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200)
      throw ProtocolError("entailment service answered HTTP " + std::to_string(res->status), res->body);

    nlohmann::json reply;
    try {
      reply = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception&) {
      throw ProtocolError("entailment service reply is not JSON", res->body);
    }
    if (!reply.is_object() || !reply.contains("verdict") || !reply["verdict"].is_string())
      throw ProtocolError("entailment service reply lacks a string 'verdict'", res->body);
    return parse_verdict(reply["verdict"].get<std::string>());
  }
  throw TransportError("entailment service at " + config_.endpoint + " failed after " +
                       std::to_string(config_.retries) + " attempts: " + last_failure);
}

} // namespace semuq
