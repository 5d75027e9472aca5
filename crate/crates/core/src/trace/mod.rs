//! Request traces.
//!
//! A [`Trace`] is an ordered list of [`Request`]s plus the catalog of item
//! names that appear in it. Item names are interned into dense [`ItemId`]s
//! assigned in lexicographic name order, so comparing ids compares names.

mod generate;

pub(crate) use generate::derive_seed;

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use generate::{
    generate_from_spec, generate_shot_noise_trace, generate_zipf_irm_trace, zipf_weights,
    GeneratorSpec, PopularityShape, ShotNoiseContent,
};

/// Dense index of an item inside one trace's catalog.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ItemId(pub u32);

impl ItemId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Request {
    /// Seconds, non-negative, non-decreasing along the trace.
    pub timestamp: f64,
    pub item: ItemId,
    /// Parsed and carried through, never read by any policy.
    pub watch_duration: Option<f64>,
}

/// A request before interning, as read from a file or produced by a generator.
#[derive(Clone, Debug, PartialEq)]
pub struct RawRequest {
    pub timestamp: f64,
    pub item: String,
    pub watch_duration: Option<f64>,
}

impl RawRequest {
    pub fn new(timestamp: f64, item: impl Into<String>) -> Self {
        Self {
            timestamp,
            item: item.into(),
            watch_duration: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    requests: Vec<Request>,
    catalog: Vec<String>,
    reordered_rows: usize,
}

impl Trace {
    /// Builds a trace from raw rows: stable-sorts by timestamp and interns names.
    ///
    /// Rows whose timestamp is smaller than the preceding row's are counted in
    /// [`Trace::reordered_rows`].
    pub fn from_raw(mut rows: Vec<RawRequest>) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            if row.item.is_empty() {
                return Err(Error::usage(format!("request {i} has an empty item id")));
            }
            if !row.timestamp.is_finite() || row.timestamp < 0.0 {
                return Err(Error::usage(format!(
                    "request {i} has invalid timestamp {}",
                    row.timestamp
                )));
            }
        }
        let reordered_rows = rows
            .windows(2)
            .filter(|w| w[1].timestamp < w[0].timestamp)
            .count();
        if reordered_rows > 0 {
            rows.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        }

        let mut names: Vec<&str> = rows.iter().map(|r| r.item.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        let lookup: BTreeMap<&str, ItemId> = names
            .iter()
            .enumerate()
            .map(|(i, n)| (*n, ItemId(i as u32)))
            .collect();
        let requests = rows
            .iter()
            .map(|r| Request {
                timestamp: r.timestamp,
                item: lookup[r.item.as_str()],
                watch_duration: r.watch_duration,
            })
            .collect();
        let catalog = names.into_iter().map(str::to_owned).collect();
        Ok(Self {
            requests,
            catalog,
            reordered_rows,
        })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn requests(&self) -> &[Request] {
        &self.requests
    }

    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    /// Item names, indexed by [`ItemId`].
    pub fn catalog(&self) -> &[String] {
        &self.catalog
    }

    pub fn catalog_size(&self) -> usize {
        self.catalog.len()
    }

    pub fn name(&self, id: ItemId) -> &str {
        &self.catalog[id.index()]
    }

    pub fn id_of(&self, name: &str) -> Option<ItemId> {
        self.catalog
            .binary_search_by(|n| n.as_str().cmp(name))
            .ok()
            .map(|i| ItemId(i as u32))
    }

    /// Number of rows that arrived out of timestamp order and were re-sorted.
    pub fn reordered_rows(&self) -> usize {
        self.reordered_rows
    }

    pub fn start_time(&self) -> f64 {
        self.requests.first().map_or(0.0, |r| r.timestamp)
    }

    pub fn end_time(&self) -> f64 {
        self.requests.last().map_or(0.0, |r| r.timestamp)
    }

    pub fn to_raw(&self) -> Vec<RawRequest> {
        self.requests
            .iter()
            .map(|r| RawRequest {
                timestamp: r.timestamp,
                item: self.name(r.item).to_owned(),
                watch_duration: r.watch_duration,
            })
            .collect()
    }

    /// Shifts all timestamps so the first request happens at time zero.
    pub fn rebased(&self) -> Trace {
        let origin = self.start_time();
        let mut out = self.clone();
        for r in &mut out.requests {
            r.timestamp -= origin;
        }
        out
    }

    /// Requests `[start, end)` as a standalone trace (a mini-scenario).
    pub fn slice(&self, start: usize, end: usize) -> Result<Trace> {
        if start > end || end > self.len() {
            return Err(Error::config(format!(
                "slice {start}..{end} out of range for trace of {} requests",
                self.len()
            )));
        }
        Trace::from_raw(self.to_raw()[start..end].to_vec())
    }

    /// Hex SHA-256 over the canonical CSV rendering; identifies a trace in reports.
    pub fn digest(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        let hash = Sha256::digest(&buf);
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let with_duration = self.requests.iter().any(|r| r.watch_duration.is_some());
        let mut w = csv::WriterBuilder::new().from_writer(out);
        let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
        if with_duration {
            w.write_record(["timestamp", "item_id", "duration"])
                .map_err(csv_err)?;
        } else {
            w.write_record(["timestamp", "item_id"]).map_err(csv_err)?;
        }
        for r in &self.requests {
            let ts = r.timestamp.to_string();
            let name = self.name(r.item);
            if with_duration {
                let d = r.watch_duration.map(|d| d.to_string()).unwrap_or_default();
                w.write_record([ts.as_str(), name, d.as_str()])
                    .map_err(csv_err)?;
            } else {
                w.write_record([ts.as_str(), name]).map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Reads a `timestamp,item_id[,duration]` CSV file.
///
/// Timestamps are kept as written; call [`Trace::rebased`] to move the origin
/// to zero.
pub fn load_trace(path: impl AsRef<Path>) -> Result<Trace> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    read_trace(file, path)
}

pub fn read_trace<R: Read>(input: R, path: &Path) -> Result<Trace> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_owned(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut records = reader.records();

    let header = match records.next() {
        None => return Ok(Trace::empty()),
        Some(h) => h.map_err(|e| parse_err(1, e.to_string()))?,
    };
    let cols: Vec<&str> = header.iter().collect();
    let with_duration = match cols.as_slice() {
        ["timestamp", "item_id"] => false,
        ["timestamp", "item_id", "duration"] => true,
        _ => {
            return Err(parse_err(
                1,
                format!(
                    "expected header `timestamp,item_id[,duration]`, found `{}`",
                    cols.join(",")
                ),
            ))
        }
    };

    let mut rows = Vec::new();
    for record in records {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() < 2 || record.len() > if with_duration { 3 } else { 2 } {
            return Err(parse_err(
                line,
                format!(
                    "expected {} fields, found {}",
                    if with_duration { 3 } else { 2 },
                    record.len()
                ),
            ));
        }
        let timestamp: f64 = record[0]
            .parse()
            .map_err(|_| parse_err(line, format!("bad timestamp `{}`", &record[0])))?;
        if !timestamp.is_finite() || timestamp < 0.0 {
            return Err(parse_err(
                line,
                format!(
                    "timestamp must be finite and non-negative, got `{}`",
                    &record[0]
                ),
            ));
        }
        let item = record[1].to_owned();
        if item.is_empty() {
            return Err(parse_err(line, "empty item_id".to_owned()));
        }
        let watch_duration = match record.get(2) {
            None | Some("") => None,
            Some(d) => Some(
                d.parse::<f64>()
                    .map_err(|_| parse_err(line, format!("bad duration `{d}`")))?,
            ),
        };
        rows.push(RawRequest {
            timestamp,
            item,
            watch_duration,
        });
    }
    let trace = Trace::from_raw(rows)?;
    if trace.reordered_rows() > 0 {
        log::warn!(
            "{}: {} rows out of timestamp order were re-sorted",
            path.display(),
            trace.reordered_rows()
        );
    }
    Ok(trace)
}

/// Arrival history of a single item.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ItemHistory {
    pub item: Option<ItemId>,
    pub arrival_times: Vec<f64>,
    /// 1-based global request positions, parallel to `arrival_times`.
    pub positions: Vec<u64>,
}

impl ItemHistory {
    pub fn new(item: ItemId) -> Self {
        Self {
            item: Some(item),
            ..Self::default()
        }
    }

    pub fn from_arrivals(times: &[f64]) -> Self {
        Self {
            item: None,
            arrival_times: times.to_vec(),
            positions: (1..=times.len() as u64).collect(),
        }
    }

    pub fn push(&mut self, timestamp: f64, position: u64) {
        self.arrival_times.push(timestamp);
        self.positions.push(position);
    }

    /// Number of requests so far (`k`).
    pub fn count(&self) -> usize {
        self.arrival_times.len()
    }

    pub fn last_arrival(&self) -> Option<f64> {
        self.arrival_times.last().copied()
    }

    /// Gaps between consecutive arrivals; `count() - 1` entries.
    pub fn inter_arrivals(&self) -> Vec<f64> {
        self.arrival_times.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Prefix of the history containing requests at or before `position`.
    pub fn up_to_position(&self, position: u64) -> ItemHistory {
        let n = self.positions.partition_point(|&p| p <= position);
        ItemHistory {
            item: self.item,
            arrival_times: self.arrival_times[..n].to_vec(),
            positions: self.positions[..n].to_vec(),
        }
    }
}

/// Per-item histories, indexed by [`ItemId`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HistoryIndex {
    histories: Vec<ItemHistory>,
}

impl HistoryIndex {
    pub fn get(&self, item: ItemId) -> Option<&ItemHistory> {
        self.histories.get(item.index())
    }

    pub fn len(&self) -> usize {
        self.histories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.histories.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ItemId, &ItemHistory)> {
        self.histories
            .iter()
            .enumerate()
            .map(|(i, h)| (ItemId(i as u32), h))
    }
}

pub fn item_history_index(trace: &Trace) -> HistoryIndex {
    let mut histories: Vec<ItemHistory> = (0..trace.catalog_size())
        .map(|i| ItemHistory::new(ItemId(i as u32)))
        .collect();
    for (i, r) in trace.requests().iter().enumerate() {
        histories[r.item.index()].push(r.timestamp, i as u64 + 1);
    }
    HistoryIndex { histories }
}

/// Offline oracle answering "when is this item requested next?".
#[derive(Clone, Debug)]
pub struct FutureIndex {
    next: Vec<Option<usize>>,
    times: Vec<f64>,
}

impl FutureIndex {
    pub fn new(trace: &Trace) -> Self {
        let mut next = vec![None; trace.len()];
        let mut upcoming: Vec<Option<usize>> = vec![None; trace.catalog_size()];
        for (i, r) in trace.requests().iter().enumerate().rev() {
            next[i] = upcoming[r.item.index()];
            upcoming[r.item.index()] = Some(i);
        }
        let times = trace.requests().iter().map(|r| r.timestamp).collect();
        Self { next, times }
    }

    /// Index of the next request for the same item as request `index`.
    pub fn next_index(&self, index: usize) -> Option<usize> {
        self.next.get(index).copied().flatten()
    }

    pub fn time(&self, index: usize) -> f64 {
        self.times[index]
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Trace> {
        read_trace(text.as_bytes(), Path::new("test.csv"))
    }

    #[test]
    fn parses_simple_file() {
        let t = parse("timestamp,item_id\n0.0,a\n1.0,b\n1.0,a\n").unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.catalog(), &["a".to_owned(), "b".to_owned()]);
        assert_eq!(t.name(t.requests()[2].item), "a");
        assert_eq!(t.reordered_rows(), 0);
    }

    #[test]
    fn header_only_is_empty() {
        let t = parse("timestamp,item_id\n").unwrap();
        assert!(t.is_empty());
        assert_eq!(t.catalog_size(), 0);
    }

    #[test]
    fn out_of_order_rows_are_sorted_and_counted() {
        let t = parse("timestamp,item_id\n2.0,a\n1.0,b\n").unwrap();
        let rows: Vec<(f64, &str)> = t
            .requests()
            .iter()
            .map(|r| (r.timestamp, t.name(r.item)))
            .collect();
        assert_eq!(rows, vec![(1.0, "b"), (2.0, "a")]);
        assert_eq!(t.reordered_rows(), 1);
    }

    #[test]
    fn equal_timestamps_keep_file_order() {
        let t = parse("timestamp,item_id\n5,z\n1,y\n5,a\n5,m\n").unwrap();
        let names: Vec<&str> = t.requests().iter().map(|r| t.name(r.item)).collect();
        assert_eq!(names, vec!["y", "z", "a", "m"]);
    }

    #[test]
    fn malformed_row_names_line() {
        let err = parse("timestamp,item_id\n0.0,a\nxyz,b\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse("timestamp,item_id\n0.0,a\n1.0,\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
    }

    #[test]
    fn bad_header_is_rejected() {
        assert!(matches!(
            parse("time,item\n0,a\n"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn durations_round_trip() {
        let text = "timestamp,item_id,duration\n0,a,12.5\n1,b,\n";
        let t = parse(text).unwrap();
        assert_eq!(t.requests()[0].watch_duration, Some(12.5));
        assert_eq!(t.requests()[1].watch_duration, None);
        let mut out = Vec::new();
        t.write_csv(&mut out).unwrap();
        assert_eq!(parse(std::str::from_utf8(&out).unwrap()).unwrap(), t);
    }

    #[test]
    fn rebase_moves_origin() {
        let t = parse("timestamp,item_id\n1600000000.5,a\n1600000002.5,b\n").unwrap();
        let r = t.rebased();
        assert_eq!(r.requests()[0].timestamp, 0.0);
        assert_eq!(r.requests()[1].timestamp, 2.0);
    }

    #[test]
    fn history_index_splits_by_item() {
        let t = parse("timestamp,item_id\n0,a\n1,b\n2,a\n").unwrap();
        let idx = item_history_index(&t);
        let a = idx.get(t.id_of("a").unwrap()).unwrap();
        let b = idx.get(t.id_of("b").unwrap()).unwrap();
        assert_eq!(a.arrival_times, vec![0.0, 2.0]);
        assert_eq!(a.positions, vec![1, 3]);
        assert_eq!(b.arrival_times, vec![1.0]);
        assert!(item_history_index(&Trace::empty()).is_empty());
    }

    #[test]
    fn future_index_finds_next_request() {
        let t = parse("timestamp,item_id\n0,a\n1,b\n2,a\n3,b\n4,c\n").unwrap();
        let f = FutureIndex::new(&t);
        assert_eq!(f.next_index(0), Some(2));
        assert_eq!(f.next_index(1), Some(3));
        assert_eq!(f.next_index(2), None);
        assert_eq!(f.next_index(4), None);
    }
}
