#include "derauth/event_log.hpp"

#include "json.hpp"

#include <algorithm>
#include <ostream>
#include <sstream>

namespace derauth {

void EventLog::emit(std::uint64_t round, std::string role, std::string event, std::string state, std::string detail) {
    events_.push_back(Event{round, std::move(role), std::move(event), std::move(state), std::move(detail)});
}

std::size_t EventLog::count(const std::string& event) const {
    return static_cast<std::size_t>(
        std::count_if(events_.begin(), events_.end(), [&](const Event& e) { return e.event == event; }));
}

std::string EventLog::to_json_line(const Event& e) {
    nlohmann::ordered_json j;
    j["round"] = e.round;
    j["role"] = e.role;
    j["event"] = e.event;
    j["state"] = e.state;
    j["detail"] = e.detail;
    return j.dump();
}

void EventLog::write_jsonl(std::ostream& out) const {
    for (const auto& e : events_) {
        out << to_json_line(e) << '\n';
    }
}

std::string EventLog::to_jsonl() const {
    std::ostringstream out;
    write_jsonl(out);
    return out.str();
}

} // namespace derauth
