#ifndef FBSDELAB_EVENTS_HPP
#define FBSDELAB_EVENTS_HPP

#include <algorithm>
#include <cstdio>
#include <istream>
#include <string>
#include <ostream>
#include <stdexcept>
#include <vector>

namespace fbsde {

struct MarkedEvent {
    double time = 0.0;
    double mark = 0.0;
    int channel = 0;
};

/// Sorted realization of a marked point process on (0, T]. Ties across
/// channels (probability zero under continuous candidate times) are ordered
/// by channel index so replay is deterministic.
class EventLog {
  public:
    EventLog() = default;
    explicit EventLog(double horizon) : horizon_(horizon) {}
    EventLog(std::vector<MarkedEvent> events, double horizon)
        : events_(std::move(events)), horizon_(horizon) {
        sort_and_check();
    }

    void add(const MarkedEvent& e) {
        events_.push_back(e);
        sort_and_check();
    }

    const std::vector<MarkedEvent>& events() const { return events_; }
    double horizon() const { return horizon_; }
    std::size_t size() const { return events_.size(); }
    bool empty() const { return events_.empty(); }

    // number of events with time <= t (or < t when strict)
    std::size_t count_up_to(double t, bool strict = false) const {
        std::size_t n = 0;
        for (const auto& e : events_)
            if (strict ? e.time < t : e.time <= t)
                ++n;
            else
                break;
        return n;
    }

    std::vector<MarkedEvent> channel_events(int channel) const {
        std::vector<MarkedEvent> out;
        for (const auto& e : events_)
            if (e.channel == channel) out.push_back(e);
        return out;
    }

  private:
    void sort_and_check() {
        std::stable_sort(events_.begin(), events_.end(), [](const MarkedEvent& a, const MarkedEvent& b) {
            if (a.time != b.time) return a.time < b.time;
            return a.channel < b.channel;
        });
        double prev_per_channel[64];
        std::fill(std::begin(prev_per_channel), std::end(prev_per_channel), -1.0);
        for (const auto& e : events_) {
            if (!(e.time > 0.0)) throw std::invalid_argument("EventLog: event times must be positive");
            if (e.time > horizon_) throw std::invalid_argument("EventLog: event beyond horizon");
            if (e.channel < 0 || e.channel >= 64)
                throw std::invalid_argument("EventLog: bad channel index");
            if (e.time <= prev_per_channel[e.channel])
                throw std::invalid_argument("EventLog: times must be strictly increasing per channel");
            prev_per_channel[e.channel] = e.time;
        }
    }

    std::vector<MarkedEvent> events_;
    double horizon_ = 0.0;
};

inline void write_event_log(std::ostream& os, const EventLog& log) {
    auto fmt = [](double x) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.17g", x);
        return std::string(buf);
    };
    os << fmt(log.horizon()) << '\n';
    for (const auto& e : log.events())
        os << fmt(e.time) << ' ' << e.channel << ' ' << fmt(e.mark) << '\n';
}

inline EventLog read_event_log(std::istream& is) {
    double horizon = 0.0;
    if (!(is >> horizon)) throw std::runtime_error("read_event_log: bad header");
    std::vector<MarkedEvent> events;
    MarkedEvent e;
    while (is >> e.time >> e.channel >> e.mark) events.push_back(e);
    return EventLog(std::move(events), horizon);
}

}  // namespace fbsde

#endif
