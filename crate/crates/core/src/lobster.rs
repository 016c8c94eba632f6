//! LOBSTER message-file ingestion into a four-dimensional order-flow sequence.
//!
//! Message files have six unlabeled columns: time (seconds after midnight),
//! event type, order id, size, price (×10⁴) and direction (1 buy, −1 sell).
//! The companion orderbook file holds the book after each message; its first
//! four columns are ask price, ask size, bid price and bid size at level 1.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::EventSequence;

/// Gap inserted between events that share a timestamp.
pub const TIE_JITTER: f64 = 1e-9;

/// Largest tolerated share of malformed rows.
pub const MAX_MALFORMED_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LobsterMessage {
    pub time: f64,
    pub event_type: u8,
    pub order_id: u64,
    pub size: u64,
    pub price: i64,
    pub direction: i8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MalformedRow {
    /// 1-based line number.
    pub line: usize,
    pub reason: String,
}

/// Parsed rows plus the rows that were rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedMessages {
    pub messages: Vec<LobsterMessage>,
    /// Line number of each message, aligned with `messages`.
    pub lines: Vec<usize>,
    pub malformed: Vec<MalformedRow>,
}

fn parse_row(line: &str, prev_time: f64) -> std::result::Result<LobsterMessage, String> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 6 {
        return Err(format!("expected 6 columns, found {}", fields.len()));
    }
    let time: f64 = fields[0].parse().map_err(|_| format!("bad time {:?}", fields[0]))?;
    if !time.is_finite() || time < 0.0 {
        return Err(format!("time {time} is not a nonnegative number"));
    }
    if time < prev_time {
        return Err(format!("time {time} precedes previous row ({prev_time})"));
    }
    let event_type: u8 = fields[1].parse().map_err(|_| format!("bad event type {:?}", fields[1]))?;
    if !(1..=7).contains(&event_type) {
        return Err(format!("unknown event type {event_type}"));
    }
    let order_id = fields[2].parse().map_err(|_| format!("bad order id {:?}", fields[2]))?;
    let size = fields[3].parse().map_err(|_| format!("bad size {:?}", fields[3]))?;
    let price = fields[4].parse().map_err(|_| format!("bad price {:?}", fields[4]))?;
    let direction: i8 = fields[5].parse().map_err(|_| format!("bad direction {:?}", fields[5]))?;
    if direction != 1 && direction != -1 {
        return Err(format!("direction must be 1 or -1, got {direction}"));
    }
    Ok(LobsterMessage { time, event_type, order_id, size, price, direction })
}

/// Parses a message file. Malformed rows are collected; more than 1% of
/// them is an error.
pub fn parse_messages(path: &Path) -> Result<ParsedMessages> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = ParsedMessages { messages: Vec::new(), lines: Vec::new(), malformed: Vec::new() };
    let mut prev_time = f64::NEG_INFINITY;
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_row(&line, prev_time) {
            Ok(msg) => {
                prev_time = msg.time;
                out.messages.push(msg);
                out.lines.push(n + 1);
            }
            Err(reason) => out.malformed.push(MalformedRow { line: n + 1, reason }),
        }
    }
    let total = out.messages.len() + out.malformed.len();
    if !out.malformed.is_empty() {
        let first = &out.malformed[0];
        log::warn!("{}: {} of {total} rows malformed (first at line {}: {})", path.display(), out.malformed.len(), first.line, first.reason);
        if out.malformed.len() as f64 > MAX_MALFORMED_FRACTION * total as f64 {
            return Err(Error::Malformed {
                path: path.display().to_string(),
                malformed: out.malformed.len(),
                total,
                first_line: first.line,
                first_reason: first.reason.clone(),
            });
        }
    }
    Ok(out)
}

/// Level-1 quotes after a message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BookRow {
    pub ask: i64,
    pub ask_size: i64,
    pub bid: i64,
    pub bid_size: i64,
}

pub fn read_orderbook(path: &Path) -> Result<Vec<BookRow>> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<i64> = line
            .split(',')
            .take(4)
            .map(|f| f.trim().parse::<i64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidSequence(format!("{} line {}: {e}", path.display(), n + 1)))?;
        if fields.len() < 4 {
            return Err(Error::InvalidSequence(format!("{} line {}: fewer than 4 columns", path.display(), n + 1)));
        }
        rows.push(BookRow { ask: fields[0], ask_size: fields[1], bid: fields[2], bid_size: fields[3] });
    }
    Ok(rows)
}

/// Sends messages with one of `event_types` and `direction` to `dim` (1-based).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupRule {
    pub event_types: Vec<u8>,
    pub direction: i8,
    pub dim: usize,
}

fn default_grouping() -> Vec<GroupRule> {
    vec![
        GroupRule { event_types: vec![1], direction: 1, dim: 1 },
        GroupRule { event_types: vec![2, 3, 4, 5], direction: 1, dim: 2 },
        GroupRule { event_types: vec![1], direction: -1, dim: 3 },
        GroupRule { event_types: vec![2, 3, 4, 5], direction: -1, dim: 4 },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    /// Seconds after midnight; 9:30:00.
    pub session_start: f64,
    /// Seconds after midnight; 16:00:00.
    pub session_end: f64,
    pub min_volume: u64,
    /// Book level filter; only level 1 is supported. `None` keeps all levels.
    pub level: Option<u32>,
    /// Keep every event when no orderbook file is given instead of failing.
    pub allow_missing_orderbook: bool,
    /// Keep hidden executions (type 5).
    pub include_hidden: bool,
    pub grouping: Vec<GroupRule>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            session_start: 34_200.0,
            session_end: 57_600.0,
            min_volume: 100,
            level: Some(1),
            allow_missing_orderbook: false,
            include_hidden: true,
            grouping: default_grouping(),
        }
    }
}

impl IngestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.session_start.is_finite() && self.session_end.is_finite() && self.session_start < self.session_end) {
            return Err(Error::Config(format!(
                "session_start ({}) must precede session_end ({})",
                self.session_start, self.session_end
            )));
        }
        if let Some(level) = self.level {
            if level != 1 {
                return Err(Error::Config(format!("only level 1 filtering is supported, got {level}")));
            }
        }
        if self.grouping.is_empty() {
            return Err(Error::Config("grouping must contain at least one rule".into()));
        }
        if self.grouping.iter().any(|r| r.dim == 0 || (r.direction != 1 && r.direction != -1)) {
            return Err(Error::Config("grouping dimensions are 1-based and directions are 1 or -1".into()));
        }
        Ok(())
    }

    pub fn num_dims(&self) -> usize {
        self.grouping.iter().map(|r| r.dim).max().unwrap_or(0)
    }

    /// 0-based dimension of a message, if any rule matches.
    pub fn dimension(&self, msg: &LobsterMessage) -> Option<usize> {
        if msg.event_type == 5 && !self.include_hidden {
            return None;
        }
        self.grouping
            .iter()
            .find(|r| r.direction == msg.direction && r.event_types.contains(&msg.event_type))
            .map(|r| r.dim - 1)
    }
}

/// Why messages were dropped.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub parsed: usize,
    pub malformed: usize,
    pub outside_session: usize,
    pub below_min_volume: usize,
    pub not_level1: usize,
    pub ungrouped: usize,
    pub retained: usize,
    pub counts: Vec<usize>,
}

fn is_best_quote(msg: &LobsterMessage, row: &BookRow) -> bool {
    if msg.direction == 1 {
        msg.price == row.bid
    } else {
        msg.price == row.ask
    }
}

/// Filters and groups messages into a sequence on `[0, session length]`.
///
/// A message is level 1 when its price equals the same-side best quote in the
/// book just before or just after it.
pub fn build_event_sequence(
    messages: &[LobsterMessage],
    orderbook: Option<&[BookRow]>,
    cfg: &IngestConfig,
) -> Result<(EventSequence, IngestReport)> {
    cfg.validate()?;
    if let Some(book) = orderbook {
        if book.len() != messages.len() {
            return Err(Error::Shape(format!(
                "orderbook has {} rows but there are {} messages",
                book.len(),
                messages.len()
            )));
        }
    } else if cfg.level.is_some() {
        if !cfg.allow_missing_orderbook {
            return Err(Error::Config("level filtering needs an orderbook file".into()));
        }
        log::warn!("no orderbook supplied: level filter skipped, all price levels retained");
    }
    let k = cfg.num_dims();
    let horizon = cfg.session_end - cfg.session_start;
    let mut report = IngestReport { parsed: messages.len(), counts: vec![0; k], ..Default::default() };
    let mut times = Vec::new();
    let mut dims = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for (r, msg) in messages.iter().enumerate() {
        if msg.time < cfg.session_start || msg.time >= cfg.session_end {
            report.outside_session += 1;
            continue;
        }
        let Some(dim) = cfg.dimension(msg) else {
            report.ungrouped += 1;
            continue;
        };
        if msg.size < cfg.min_volume {
            report.below_min_volume += 1;
            continue;
        }
        if let (Some(_), Some(book)) = (cfg.level, orderbook) {
            let before = r.checked_sub(1).is_some_and(|p| is_best_quote(msg, &book[p]));
            if !before && !is_best_quote(msg, &book[r]) {
                report.not_level1 += 1;
                continue;
            }
        }
        let mut t = msg.time - cfg.session_start;
        if t <= prev {
            t = prev + TIE_JITTER;
        }
        if t > horizon {
            report.outside_session += 1;
            continue;
        }
        prev = t;
        times.push(t);
        dims.push(dim);
        report.counts[dim] += 1;
    }
    report.retained = times.len();
    if times.is_empty() {
        log::warn!("no events retained after filtering");
    }
    Ok((EventSequence::new(times, dims, horizon, k)?, report))
}

/// Result of ingesting one message file.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub sequence: EventSequence,
    pub report: IngestReport,
    pub message_path: PathBuf,
}

pub fn ingest(message_path: &Path, orderbook_path: Option<&Path>, cfg: &IngestConfig) -> Result<Ingested> {
    let parsed = parse_messages(message_path)?;
    let book = orderbook_path.map(read_orderbook).transpose()?;
    let (sequence, mut report) = build_event_sequence(&parsed.messages, book.as_deref(), cfg)?;
    report.malformed = parsed.malformed.len();
    Ok(Ingested { sequence, report, message_path: message_path.to_path_buf() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_parse_field_exact() {
        let m = parse_row("34200.017459617,1,16113575,18,5853300,1", f64::NEG_INFINITY).unwrap();
        assert_eq!(m, LobsterMessage { time: 34200.017459617, event_type: 1, order_id: 16113575, size: 18, price: 5853300, direction: 1 });
        assert!(parse_row("34200.0,1,1,18,5853300,0", 0.0).unwrap_err().contains("direction"));
        assert!(parse_row("34200.0,1,1,18,5853300", 0.0).is_err());
        assert!(parse_row("34200.0,9,1,18,5853300,1", 0.0).is_err());
        assert!(parse_row("34199.0,1,1,18,5853300,1", 34200.0).is_err());
    }

    #[test]
    fn default_grouping_and_hidden_switch() {
        let mut cfg = IngestConfig::default();
        let msg = |event_type, direction| LobsterMessage { time: 0.0, event_type, order_id: 0, size: 0, price: 0, direction };
        assert_eq!(cfg.dimension(&msg(1, 1)), Some(0));
        assert_eq!(cfg.dimension(&msg(3, 1)), Some(1));
        assert_eq!(cfg.dimension(&msg(1, -1)), Some(2));
        assert_eq!(cfg.dimension(&msg(4, -1)), Some(3));
        assert_eq!(cfg.dimension(&msg(7, 1)), None);
        assert_eq!(cfg.dimension(&msg(6, -1)), None);
        assert_eq!(cfg.dimension(&msg(5, 1)), Some(1));
        cfg.include_hidden = false;
        assert_eq!(cfg.dimension(&msg(5, 1)), None);
    }
}
