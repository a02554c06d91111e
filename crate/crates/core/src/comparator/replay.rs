use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{Comparator, ComparatorQuery};
use crate::error::{Error, Result};
use crate::types::{GoalId, Verdict};

/// One log line: `query_id,first_goal_id,second_goal_id,verdict_int`, with
/// -1 standing in for an observation that is not a buffer member.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogEntry {
    pub query_id: u64,
    pub first_goal: i64,
    pub second_goal: i64,
    pub verdict: Verdict,
}

fn goal_code(id: Option<GoalId>) -> i64 {
    id.map_or(-1, |g| g.0 as i64)
}

impl LogEntry {
    pub fn for_query(query: &ComparatorQuery, verdict: Verdict) -> Self {
        Self {
            query_id: query.query_id,
            first_goal: goal_code(query.first_goal),
            second_goal: goal_code(query.second_goal),
            verdict,
        }
    }

    pub fn to_line(&self) -> String {
        format!("{},{},{},{}", self.query_id, self.first_goal, self.second_goal, self.verdict.code())
    }

    pub fn parse(line: &str) -> Option<Self> {
        let mut parts = line.trim().split(',').map(str::trim);
        let query_id = parts.next()?.parse().ok()?;
        let first_goal = parts.next()?.parse().ok()?;
        let second_goal = parts.next()?.parse().ok()?;
        let verdict = Verdict::from_code(parts.next()?.parse().ok()?)?;
        if parts.next().is_some() {
            return None;
        }
        Some(Self {
            query_id,
            first_goal,
            second_goal,
            verdict,
        })
    }
}

/// A parsed verdict log. Lines starting with `#` form the header.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayLog {
    pub header: Vec<String>,
    pub entries: Vec<LogEntry>,
}

impl ReplayLog {
    pub fn parse(text: &str) -> Result<Self> {
        let mut log = ReplayLog::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(h) = line.strip_prefix('#') {
                log.header.push(h.trim().to_string());
                continue;
            }
            let entry = LogEntry::parse(line)
                .ok_or_else(|| Error::ReplayMismatch(format!("malformed log line {}: {line:?}", n + 1)))?;
            log.entries.push(entry);
        }
        Ok(log)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    /// Value of a `key=value` pair in the header, if recorded.
    pub fn header_value(&self, key: &str) -> Option<&str> {
        self.header
            .iter()
            .flat_map(|h| h.split_whitespace())
            .find_map(|kv| kv.strip_prefix(key)?.strip_prefix('='))
    }

    pub fn verdict_at(&self, index: usize) -> Result<Verdict> {
        self.entries
            .get(index)
            .map(|e| e.verdict)
            .ok_or(Error::ReplayExhausted(index as u64))
    }
}

/// Serves recorded verdicts in order, checking each against the live query.
#[derive(Debug, Clone)]
pub struct Replay {
    log: ReplayLog,
    cursor: usize,
}

impl Replay {
    pub fn new(log: ReplayLog) -> Self {
        Self { log, cursor: 0 }
    }

    pub fn log(&self) -> &ReplayLog {
        &self.log
    }

    pub fn remaining(&self) -> usize {
        self.log.entries.len() - self.cursor
    }
}

impl Comparator for Replay {
    fn compare(&mut self, query: &ComparatorQuery) -> Result<Verdict> {
        let entry = *self
            .log
            .entries
            .get(self.cursor)
            .ok_or(Error::ReplayExhausted(query.query_id))?;
        let live = LogEntry::for_query(query, entry.verdict);
        if live != entry {
            return Err(Error::ReplayMismatch(format!(
                "log has {:?}, run asked {:?}",
                entry.to_line(),
                live.to_line()
            )));
        }
        self.cursor += 1;
        Ok(entry.verdict)
    }
}

/// Passes queries to an inner comparator and appends every verdict to a log.
pub struct Recording<C> {
    inner: C,
    path: PathBuf,
    out: BufWriter<File>,
}

impl<C: Comparator> Recording<C> {
    pub fn create(inner: C, path: &Path, header: &str) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut rec = Self {
            inner,
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        };
        rec.write(&format!("# {header}"))?;
        Ok(rec)
    }

    fn write(&mut self, line: &str) -> Result<()> {
        writeln!(self.out, "{line}")
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

impl<C: Comparator> Comparator for Recording<C> {
    fn compare(&mut self, query: &ComparatorQuery) -> Result<Verdict> {
        let v = self.inner.compare(query)?;
        self.write(&LogEntry::for_query(query, v).to_line())?;
        Ok(v)
    }

    fn compare_batch(&mut self, queries: &[ComparatorQuery]) -> Result<Vec<Verdict>> {
        let verdicts = self.inner.compare_batch(queries)?;
        let lines: Vec<String> = queries
            .iter()
            .zip(&verdicts)
            .map(|(q, &v)| LogEntry::for_query(q, v).to_line())
            .collect();
        if !lines.is_empty() {
            self.write(&lines.join("\n"))?;
        }
        Ok(verdicts)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::types::{LanguageInstruction, Observation};

    fn query(id: u64, first: Option<u64>, second: Option<u64>) -> ComparatorQuery {
        let o = Arc::new(Observation::state_vector(vec![0.0], 0, 0).unwrap());
        ComparatorQuery::new(id, o.clone(), o, LanguageInstruction::new("x").unwrap())
            .unwrap()
            .with_goals(first.map(GoalId), second.map(GoalId))
    }

    #[test]
    fn parses_log_lines() {
        let e = LogEntry::parse("42,17,3,-1").unwrap();
        assert_eq!(e.verdict, Verdict::NoDecision);
        assert_eq!((e.query_id, e.first_goal, e.second_goal), (42, 17, 3));
        assert_eq!(e.to_line(), "42,17,3,-1");
        assert!(LogEntry::parse("1,2,3,4").is_none());
        assert!(LogEntry::parse("1,2,3").is_none());
    }

    #[test]
    fn replays_in_order_then_exhausts() {
        let log = ReplayLog::parse("# seed=3 config_hash=ab\n0,-1,5,1\n1,2,5,0\n").unwrap();
        assert_eq!(log.header_value("seed"), Some("3"));
        assert_eq!(log.header_value("config_hash"), Some("ab"));
        assert_eq!(log.verdict_at(1).unwrap(), Verdict::PreferFirst);
        let mut r = Replay::new(log);
        assert_eq!(r.compare(&query(0, None, Some(5))).unwrap(), Verdict::PreferSecond);
        assert_eq!(r.compare(&query(1, Some(2), Some(5))).unwrap(), Verdict::PreferFirst);
        let err = r.compare(&query(2, Some(2), Some(5))).unwrap_err();
        assert!(err.to_string().contains("replay exhausted"));
    }

    #[test]
    fn mismatched_query_is_an_error() {
        let mut r = Replay::new(ReplayLog::parse("0,1,2,1").unwrap());
        assert!(matches!(r.compare(&query(0, Some(1), Some(3))), Err(Error::ReplayMismatch(_))));
    }

    #[test]
    fn recording_round_trips() {
        struct Fixed;
        impl Comparator for Fixed {
            fn compare(&mut self, q: &ComparatorQuery) -> Result<Verdict> {
                Ok(if q.query_id % 2 == 0 { Verdict::PreferSecond } else { Verdict::NoDecision })
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.log");
        let queries: Vec<_> = (0..4).map(|i| query(i, Some(i), None)).collect();
        let mut rec = Recording::create(Fixed, &path, "seed=1").unwrap();
        let live = rec.compare_batch(&queries).unwrap();
        drop(rec);
        let mut replay = Replay::new(ReplayLog::load(&path).unwrap());
        assert_eq!(replay.compare_batch(&queries).unwrap(), live);
    }
}
