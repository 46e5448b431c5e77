#include "recexplain/service.hpp"

#include <httplib.h>

#include "recexplain/util.hpp"

namespace recexplain {

namespace {

constexpr const char* kJson = "application/json";

void reply(httplib::Response& res, int status, const nlohmann::ordered_json& body) {
    res.status = status;
    res.set_content(body.dump(), kJson);
}

void reply_error(httplib::Response& res, const Error& error) { reply(res, http_status(error.code()), error_body(error)); }

void reply_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
    nlohmann::ordered_json body;
    body["code"] = code;
    body["message"] = message;
    body["stage"] = "request";
    reply(res, status, body);
}

// Rejects anything but a JSON object body; returns nullopt after replying.
std::optional<nlohmann::json> json_body(const httplib::Request& req, httplib::Response& res) {
    const auto type = to_lower(req.get_header_value("Content-Type"));
    if (type.rfind(kJson, 0) != 0) {
        reply_error(res, 415, "unsupported_media_type", "Content-Type must be application/json");
        return std::nullopt;
    }
    try {
        auto j = nlohmann::json::parse(req.body);
        if (!j.is_object()) throw Error(ErrorCode::parse, "request body must be a JSON object", "request");
        return j;
    } catch (const nlohmann::json::exception& e) {
        reply_error(res, 400, "parse", std::string("malformed JSON: ") + e.what());
    } catch (const Error& e) {
        reply(res, 400, error_body(e));
    }
    return std::nullopt;
}

std::string required_string(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_string() || trim(j.at(key).get<std::string>()).empty()) {
        throw Error(ErrorCode::contract, std::string("'") + key + "' must be a nonempty string", "request");
    }
    return j.at(key).get<std::string>();
}

nlohmann::ordered_json blinded(const Explanation& e) {
    nlohmann::ordered_json j;
    j["id"] = e.id;
    j["recommended_id"] = e.request.recommended_id;
    j["user_id"] = e.request.user_history.user_id;
    j["text"] = e.text;
    return j;
}

template <typename Handler>
httplib::Server::Handler guarded(Handler handler) {
    return [handler](const httplib::Request& req, httplib::Response& res) {
        try {
            handler(req, res);
        } catch (const Error& e) {
            reply_error(res, e);
        } catch (const std::exception& e) {
            reply_error(res, 500, "internal", e.what());
        }
    };
}

}  // namespace

int http_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::contract:
        case ErrorCode::undefined_effect: return 422;
        case ErrorCode::parse:
        case ErrorCode::format:
        case ErrorCode::extraction:
        case ErrorCode::transport:
        case ErrorCode::no_script: return 502;
        case ErrorCode::lookup: return 404;
        case ErrorCode::io:
        case ErrorCode::empty_catalog:
        case ErrorCode::partial_index:
        case ErrorCode::config: return 500;
    }
    return 500;
}

nlohmann::ordered_json error_body(const Error& error) {
    nlohmann::ordered_json j;
    j["code"] = std::string(to_string(error.code()));
    j["message"] = error.what();
    j["stage"] = error.stage();
    return j;
}

Service::Service(Runtime& runtime) : runtime_(runtime), server_(std::make_unique<httplib::Server>()) { routes(); }

Service::~Service() { stop(); }

void Service::routes() {
    auto& s = *server_;

    s.Get("/health", guarded([this](const httplib::Request&, httplib::Response& res) {
        nlohmann::ordered_json j;
        j["status"] = "ok";
        j["items"] = runtime_.catalog().size();
        j["model_id"] = runtime_.gateway().model_id();
        j["embedding_model"] = runtime_.index().model_id();
        j["explanations"] = runtime_.explanations().size();
        j["ratings"] = runtime_.ratings().count();
        reply(res, 200, j);
    }));

    s.Get(R"(/items/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
        reply(res, 200, to_json(runtime_.catalog().at(req.matches[1])));
    }));

    s.Get(R"(/users/([^/]+)/history)", guarded([this](const httplib::Request& req, httplib::Response& res) {
        const auto& history = runtime_.history(req.matches[1]);
        auto j = to_json(history);
        for (auto& row : j["interactions"]) row["item"] = to_json(runtime_.catalog().at(row["item_id"]));
        reply(res, 200, j);
    }));

    s.Post("/explain", guarded([this](const httplib::Request& req, httplib::Response& res) {
        auto body = json_body(req, res);
        if (!body) return;
        const auto recommended_id = required_string(*body, "recommended_id");
        const auto user_id = required_string(*body, "user_id");
        auto method = ExplanationMethod::logic_scaffolding;
        if (body->contains("method")) method = parse_method(required_string(*body, "method"));
        reply(res, 200, to_json(runtime_.explain(recommended_id, user_id, method)));
    }));

    s.Get(R"(/explanations/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        auto e = runtime_.explanations().find(id);
        if (!e) throw Error(ErrorCode::lookup, "unknown explanation '" + id + "'", "request");
        const auto blind = req.get_param_value("blind");
        reply(res, 200, blind == "true" || blind == "1" ? blinded(*e) : to_json(*e));
    }));

    s.Post("/ratings", guarded([this](const httplib::Request& req, httplib::Response& res) {
        auto body = json_body(req, res);
        if (!body) return;
        if (body->contains("method")) {
            throw Error(ErrorCode::contract, "'method' is assigned by the server, not the rater", "request");
        }
        RatingRecord rating;
        try {
            rating = rating_from_json(*body);
        } catch (const Error& e) {
            throw Error(e.code(), e.what(), "request");
        }
        const auto ack = runtime_.ratings().record(std::move(rating));
        nlohmann::ordered_json j;
        j["overwritten"] = ack.overwritten;
        j["count"] = ack.count;
        reply(res, ack.overwritten ? 200 : 201, j);
    }));

    s.Get("/stats", guarded([this](const httplib::Request& req, httplib::Response& res) {
        const auto report = build_stats_report(runtime_.ratings().snapshot(), runtime_.ratings().criteria());
        if (req.get_param_value("format") == "table") {
            res.status = 200;
            res.set_content(render_table(report), "text/plain; charset=utf-8");
            return;
        }
        reply(res, 200, to_json(report));
    }));

    s.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (!res.body.empty()) return;
        reply_error(res, res.status, res.status == 404 ? "lookup" : "http", "no route for this request");
    });
}

int Service::bind(const std::string& host, int port) {
    const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (bound < 0) {
        throw Error(ErrorCode::config, "cannot listen on " + host + ":" + std::to_string(port), "serve");
    }
    return bound;
}

void Service::run() { server_->listen_after_bind(); }

void Service::stop() {
    if (server_) server_->stop();
}

bool Service::running() const { return server_->is_running(); }

}  // namespace recexplain
