//! Seconds-since-epoch timestamps and calendar helpers.

use chrono::{DateTime, NaiveDate, Utc};

/// Seconds since the Unix epoch, UTC.
pub type Timestamp = i64;

pub const MINUTE: i64 = 60;
pub const HOUR: i64 = 60 * MINUTE;
pub const DAY: i64 = 24 * HOUR;

/// Midnight UTC at the start of `date`.
pub fn date_start(date: NaiveDate) -> Timestamp {
    date.and_hms_opt(0, 0, 0)
        .expect("midnight is always valid")
        .and_utc()
        .timestamp()
}

/// Calendar date (UTC) containing `ts`.
pub fn date_of(ts: Timestamp) -> NaiveDate {
    DateTime::<Utc>::from_timestamp(ts, 0)
        .map(|dt| dt.date_naive())
        .unwrap_or(NaiveDate::MIN)
}

/// RFC 3339 / ISO-8601 rendering with a trailing `Z`.
pub fn to_iso8601(ts: Timestamp) -> String {
    DateTime::<Utc>::from_timestamp(ts, 0)
        .map(|dt| dt.format("%Y-%m-%dT%H:%M:%SZ").to_string())
        .unwrap_or_else(|| ts.to_string())
}

pub fn parse_iso8601(s: &str) -> Option<Timestamp> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok().map(date_start)
}

/// Parses an ISO-8601 duration of the form `PnDTnHnMnS` (weeks allowed as
/// `PnW`). Plain integers are taken as seconds.
pub fn parse_duration(s: &str) -> Option<i64> {
    if let Ok(secs) = s.parse::<i64>() {
        return Some(secs);
    }
    let rest = s.strip_prefix('P').or_else(|| s.strip_prefix('p'))?;
    let mut total = 0i64;
    let mut in_time = false;
    let mut num = String::new();
    let mut seen = false;
    for c in rest.chars() {
        match c {
            '0'..='9' => num.push(c),
            'T' | 't' if num.is_empty() => in_time = true,
            _ => {
                let n: i64 = num.parse().ok()?;
                num.clear();
                let unit = match (c.to_ascii_uppercase(), in_time) {
                    ('W', false) => 7 * DAY,
                    ('D', false) => DAY,
                    ('H', true) => HOUR,
                    ('M', true) => MINUTE,
                    ('S', true) => 1,
                    _ => return None,
                };
                total = total.checked_add(n.checked_mul(unit)?)?;
                seen = true;
            }
        }
    }
    if !num.is_empty() || !seen {
        return None;
    }
    Some(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn durations() {
        assert_eq!(parse_duration("P1D"), Some(DAY));
        assert_eq!(parse_duration("PT6H"), Some(6 * HOUR));
        assert_eq!(parse_duration("P1DT30M"), Some(DAY + 30 * MINUTE));
        assert_eq!(parse_duration("P1H"), None);
        assert_eq!(parse_duration("P1DT0H30M"), Some(DAY + 30 * MINUTE));
        assert_eq!(parse_duration("P2W"), Some(14 * DAY));
        assert_eq!(parse_duration("3600"), Some(3600));
        assert_eq!(parse_duration("P"), None);
        assert_eq!(parse_duration("1D"), None);
    }

    #[test]
    fn iso_round_trip() {
        let ts = parse_iso8601("2020-11-01T12:00:00Z").unwrap();
        assert_eq!(to_iso8601(ts), "2020-11-01T12:00:00Z");
        assert_eq!(parse_iso8601("2020-11-01"), Some(ts - 12 * HOUR));
        assert_eq!(date_of(ts), NaiveDate::from_ymd_opt(2020, 11, 1).unwrap());
    }
}
