#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace derauth {

struct Event {
    std::uint64_t round = 0;
    std::string role;
    std::string event;
    std::string state;
    std::string detail;

    friend bool operator==(const Event&, const Event&) = default;
};

// Structured transition log, one JSON object per line:
// {"round":..,"role":..,"event":..,"state":..,"detail":..}
// Endpoint events carry the C_rt version; harness and adversary events carry
// the 0-based challenge index.
class EventLog {
public:
    void emit(std::uint64_t round, std::string role, std::string event, std::string state, std::string detail = {});
    const std::vector<Event>& events() const { return events_; }
    std::size_t count(const std::string& event) const;
    void clear() { events_.clear(); }

    void write_jsonl(std::ostream& out) const;
    std::string to_jsonl() const;
    static std::string to_json_line(const Event& e);

private:
    std::vector<Event> events_;
};

} // namespace derauth
