#pragma once

#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "recexplain/error.hpp"
#include "recexplain/workspace.hpp"

namespace httplib {
class Server;
}

namespace recexplain {

// HTTP status for a library error code.
int http_status(ErrorCode code);

// {"code", "message", "stage"}.
nlohmann::ordered_json error_body(const Error& error);

// JSON API over a Runtime:
//   GET  /health
//   GET  /items/{id}
//   GET  /users/{id}/history
//   POST /explain              {recommended_id, user_id, method}
//   GET  /explanations/{id}    ?blind=true drops the method and provenance
//   POST /ratings              {explanation_id, rater_id, criterion, score}
//   GET  /stats                ?format=table for the text rendering
class Service {
public:
    explicit Service(Runtime& runtime);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    // Binds (port 0 picks a free port) and returns the bound port; throws
    // Error{config} when binding fails.
    int bind(const std::string& host, int port);
    // Serves until stop(); in-flight requests finish before it returns.
    void run();
    void stop();
    bool running() const;

private:
    void routes();

    Runtime& runtime_;
    std::unique_ptr<httplib::Server> server_;
};

}  // namespace recexplain
