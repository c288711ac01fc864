#pragma once

/**
 * TokenModel backed by an HTTP logits server.
 *
 * Wire protocol (JSON over HTTP POST <endpoint>/v1/next_logprobs):
 *   request  {"context": [int], "prompt_tag": string, "hints": [string]}
 *            ("hints" is only sent when the particle carries hints)
 *   response {"logprobs": [float | null; vocab_size]}   (null = -inf)
 *
 * Responses are re-normalized client-side and cached per
 * (context, prompt_tag, hints) for the lifetime of the adapter.
 */

#include <map>
#include <mutex>
#include <string>
#include <tuple>

#include <httplib.h>
#include <json.hpp>

#include "steersmc/error.hpp"
#include "steersmc/token_model.hpp"

namespace steersmc {

class RemoteModel final : public TokenModel {
 public:
  static constexpr const char* kPath = "/v1/next_logprobs";

  /// Probes the endpoint with an empty-context query; throws RemoteUnavailable
  /// when it cannot be reached and ProtocolError when the reply is malformed.
  RemoteModel(std::string endpoint, Vocabulary vocab, int timeout_seconds = 30)
      : endpoint_(std::move(endpoint)), vocab_(std::move(vocab)), timeout_s_(timeout_seconds) {
    (void)next_logprobs({});
  }

  const Vocabulary& vocabulary() const override { return vocab_; }
  std::string_view kind() const override { return "remote"; }
  const std::string& endpoint() const noexcept { return endpoint_; }

  std::vector<double> next_logprobs(const ModelQuery& q) const override {
    check_context(q.context);
    Key key{TokenSeq(q.context.begin(), q.context.end()), std::string(q.prompt_tag),
            hint_key(q.hints)};
    {
      std::lock_guard lock(cache_mu_);
      if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    auto lp = fetch(q);
    std::lock_guard lock(cache_mu_);
    return cache_.emplace(std::move(key), std::move(lp)).first->second;
  }

  std::size_t requests_made() const {
    std::lock_guard lock(cache_mu_);
    return requests_;
  }

 private:
  using Key = std::tuple<TokenSeq, std::string, std::string>;

  std::vector<double> fetch(const ModelQuery& q) const {
    nlohmann::json body{{"context", TokenSeq(q.context.begin(), q.context.end())},
                        {"prompt_tag", std::string(q.prompt_tag)}};
    if (!q.hints.empty())
      body["hints"] = std::vector<std::string>(q.hints.begin(), q.hints.end());

    httplib::Result res;
    {
      std::lock_guard lock(request_mu_);
      httplib::Client client(endpoint_);
      client.set_connection_timeout(timeout_s_, 0);
      client.set_read_timeout(timeout_s_, 0);
      res = client.Post(kPath, body.dump(), "application/json");
      std::lock_guard count_lock(cache_mu_);
      ++requests_;
    }
    if (!res)
      throw SteerError(ErrorKind::RemoteUnavailable,
                       endpoint_ + ": " + httplib::to_string(res.error()));
    if (res->status != 200)
      throw SteerError(ErrorKind::ProtocolError,
                       endpoint_ + " answered HTTP " + std::to_string(res->status));

    nlohmann::json reply;
    try {
      reply = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error& e) {
      throw SteerError(ErrorKind::ProtocolError, std::string("bad response body: ") + e.what());
    }
    if (!reply.is_object() || !reply.contains("logprobs") || !reply["logprobs"].is_array())
      throw SteerError(ErrorKind::ProtocolError, "response lacks a 'logprobs' list");
    const auto& arr = reply["logprobs"];
    if (arr.size() != vocab_.size())
      throw SteerError(ErrorKind::ProtocolError,
                       "expected " + std::to_string(vocab_.size()) + " logprobs, got " +
                           std::to_string(arr.size()));
    std::vector<double> lp;
    lp.reserve(arr.size());
    for (const auto& x : arr) {
      if (x.is_null()) lp.push_back(kNegInf);
      else if (x.is_number()) lp.push_back(x.get<double>());
      else throw SteerError(ErrorKind::ProtocolError, "non-numeric logprob");
    }
    const double z = log_sum_exp(lp);
    if (!std::isfinite(z)) throw SteerError(ErrorKind::ProtocolError, "distribution has no mass");
    for (double& x : lp) x -= z;
    return lp;
  }

  std::string endpoint_;
  Vocabulary vocab_;
  int timeout_s_;
  mutable std::mutex cache_mu_;
  mutable std::mutex request_mu_;
  mutable std::map<Key, std::vector<double>> cache_;
  mutable std::size_t requests_ = 0;
};

}  // namespace steersmc
