#include "pmnc/time.hpp"

#include <cstdio>

namespace pmnc {

namespace {
const Date kEpoch1900{1900, 1, 1};
} // namespace

std::string Date::str() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", year, month, day);
    return buf;
}

Date Date::parse(const std::string& s) {
    int y = 0, m = 0, d = 0;
    if (std::sscanf(s.c_str(), "%d-%d-%d", &y, &m, &d) != 3)
        throw ConfigError("invalid date '" + s + "', expected YYYY-MM-DD");
    Date date{y, m, d};
    if (!(std::chrono::year{y} / m / d).ok())
        throw ConfigError("invalid calendar date '" + s + "'");
    return date;
}

UtcTime UtcTime::from(const Date& d, int hour) {
    auto days = (d.to_days() - kEpoch1900.to_days()).count();
    return {days * 24 + hour};
}

UtcTime UtcTime::from_hours_since(std::int64_t h, const Date& epoch, int epoch_hour) {
    return UtcTime::from(epoch, epoch_hour).plus_hours(h);
}

Date UtcTime::date() const {
    std::int64_t days = hours_since_1900 / 24;
    if (hours_since_1900 < 0 && hours_since_1900 % 24 != 0) --days;
    return Date::from_days(kEpoch1900.to_days() + std::chrono::days{days});
}

int UtcTime::hour() const {
    int h = static_cast<int>(hours_since_1900 % 24);
    return h < 0 ? h + 24 : h;
}

std::string UtcTime::str() const {
    char buf[24];
    Date d = date();
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:00Z", d.year, d.month, d.day, hour());
    return buf;
}

UtcTime UtcTime::parse(const std::string& s) {
    int y = 0, m = 0, d = 0, h = 0;
    if (std::sscanf(s.c_str(), "%d-%d-%dT%d", &y, &m, &d, &h) != 4)
        throw ConfigError("invalid timestamp '" + s + "', expected YYYY-MM-DDTHH:00Z");
    return UtcTime::from(Date{y, m, d}, h);
}

} // namespace pmnc
