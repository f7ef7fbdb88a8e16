#pragma once

#include <chrono>
#include <cstdint>
#include <string>

#include "pmnc/errors.hpp"

namespace pmnc {

/// Calendar date (UTC).
struct Date {
    int year = 1970;
    int month = 1;
    int day = 1;

    auto operator<=>(const Date&) const = default;

    std::chrono::sys_days to_days() const {
        using namespace std::chrono;
        return sys_days{std::chrono::year{year} / month / day};
    }

    static Date from_days(std::chrono::sys_days d) {
        std::chrono::year_month_day ymd{d};
        return {int(ymd.year()), int(unsigned(ymd.month())), int(unsigned(ymd.day()))};
    }

    Date next() const { return from_days(to_days() + std::chrono::days{1}); }

    std::string str() const; // YYYY-MM-DD
    static Date parse(const std::string& s);
};

/// UTC instant at whole-hour granularity (analysis timestamps).
struct UtcTime {
    std::int64_t hours_since_1900 = 0;

    auto operator<=>(const UtcTime&) const = default;

    static UtcTime from(const Date& d, int hour);
    static UtcTime from_hours_since(std::int64_t h, const Date& epoch, int epoch_hour = 0);

    UtcTime plus_hours(std::int64_t h) const { return {hours_since_1900 + h}; }

    Date date() const;
    int hour() const;
    int year() const { return date().year; }
    int month() const { return date().month; }

    std::string str() const; // YYYY-MM-DDTHH:00Z
    static UtcTime parse(const std::string& s);
};

} // namespace pmnc
