//! Interaction corpus handling: TSV ingestion, user filtering, chronological
//! splitting and per-user consumption histories.
//!
//! Timestamps are integer seconds. A split is taken from the global time axis:
//! the last `test_window` seconds form the test set, the `valid_window` before
//! them the validation set, everything earlier the training set. Users and
//! items that never occur in the training set are pruned from the later splits
//! so evaluation never sees cold-start ids.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seconds since the epoch. The corpus format carries plain integers.
pub type Timestamp = i64;
/// A span of time in seconds.
pub type DurationSecs = i64;

pub const SECS_PER_DAY: i64 = 86_400;

/// One consumption record as read from disk. Duplicates are meaningful:
/// repeat consumption is what the frequency bins count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interaction {
    pub user: String,
    pub item: String,
    pub time: Timestamp,
}

/// Parse `user<TAB>item<TAB>timestamp` lines. Any malformed line aborts with
/// its 1-based line number; blank trailing lines are not tolerated either,
/// the format has exactly one record per line.
pub fn parse_tsv(reader: impl BufRead) -> Result<Vec<Interaction>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let mut fields = line.split('\t');
        let (user, item, time) = match (fields.next(), fields.next(), fields.next()) {
            (Some(u), Some(i), Some(t)) if fields.next().is_none() => (u, i, t),
            _ => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected 3 tab-separated fields, got {:?}", line),
                })
            }
        };
        if user.is_empty() || item.is_empty() {
            return Err(Error::Parse {
                line: lineno,
                msg: "empty user or item id".into(),
            });
        }
        let time: Timestamp = time.parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("timestamp is not an integer: {:?}", time),
        })?;
        out.push(Interaction {
            user: user.to_string(),
            item: item.to_string(),
            time,
        });
    }
    Ok(out)
}

pub fn read_interactions(path: &Path) -> Result<Vec<Interaction>> {
    let file = std::fs::File::open(path)?;
    parse_tsv(BufReader::new(file))
}

pub fn write_interactions(path: &Path, data: &[Interaction]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for rec in data {
        writeln!(w, "{}\t{}\t{}", rec.user, rec.item, rec.time)?;
    }
    w.flush()?;
    Ok(())
}

/// Drop users with fewer than `min_items` distinct items. Items that lose all
/// their interactions disappear with their users; relative order of the
/// surviving records is preserved. Applying the filter twice is a no-op.
pub fn filter_users(data: Vec<Interaction>, min_items: usize) -> Vec<Interaction> {
    let mut distinct: HashMap<&str, HashSet<&str>> = HashMap::new();
    for rec in &data {
        distinct
            .entry(rec.user.as_str())
            .or_default()
            .insert(rec.item.as_str());
    }
    let keep: HashSet<String> = distinct
        .into_iter()
        .filter(|(_, items)| items.len() >= min_items)
        .map(|(u, _)| u.to_string())
        .collect();
    data.into_iter()
        .filter(|rec| keep.contains(&rec.user))
        .collect()
}

/// Time boundaries and record counts of a chronological split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    /// Latest timestamp assigned to the training split (inclusive boundary).
    pub train_end_time: Timestamp,
    /// Latest timestamp assigned to the validation split (inclusive boundary).
    pub valid_end_time: Timestamp,
    pub train_count: usize,
    pub valid_count: usize,
    pub test_count: usize,
}

#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<Interaction>,
    pub valid: Vec<Interaction>,
    pub test: Vec<Interaction>,
    pub train_end_time: Timestamp,
    pub valid_end_time: Timestamp,
}

impl DatasetSplit {
    pub fn manifest(&self) -> SplitManifest {
        SplitManifest {
            train_end_time: self.train_end_time,
            valid_end_time: self.valid_end_time,
            train_count: self.train.len(),
            valid_count: self.valid.len(),
            test_count: self.test.len(),
        }
    }
}

/// Split on the global time axis: test takes `(max - test_window, max]`,
/// validation the `valid_window` seconds before that, training the rest.
/// Valid/test interactions whose user or item is absent from the training
/// split are discarded.
pub fn chronological_split(
    data: Vec<Interaction>,
    test_window: DurationSecs,
    valid_window: DurationSecs,
) -> Result<DatasetSplit> {
    if test_window <= 0 || valid_window < 0 {
        return Err(Error::Config(
            "test_window must be positive and valid_window non-negative".into(),
        ));
    }
    let max_time = data
        .iter()
        .map(|r| r.time)
        .max()
        .ok_or(Error::EmptyTrainingSplit)?;
    let valid_end_time = max_time - test_window;
    let train_end_time = valid_end_time - valid_window;

    let mut train = Vec::new();
    let mut valid = Vec::new();
    let mut test = Vec::new();
    for rec in data {
        if rec.time <= train_end_time {
            train.push(rec);
        } else if rec.time <= valid_end_time {
            valid.push(rec);
        } else {
            test.push(rec);
        }
    }
    if train.is_empty() {
        return Err(Error::EmptyTrainingSplit);
    }

    let train_users: HashSet<&str> = train.iter().map(|r| r.user.as_str()).collect();
    let train_items: HashSet<&str> = train.iter().map(|r| r.item.as_str()).collect();
    let seen = |rec: &Interaction| {
        train_users.contains(rec.user.as_str()) && train_items.contains(rec.item.as_str())
    };
    let valid: Vec<_> = valid.into_iter().filter(|r| seen(r)).collect();
    let test: Vec<_> = test.into_iter().filter(|r| seen(r)).collect();

    Ok(DatasetSplit {
        train,
        valid,
        test,
        train_end_time,
        valid_end_time,
    })
}

/// Dense user/item index built from the training split. Index order is first
/// appearance in the data, which makes vocabularies deterministic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    pub users: Vec<String>,
    pub items: Vec<String>,
    user_index: HashMap<String, u32>,
    item_index: HashMap<String, u32>,
}

impl Vocab {
    pub fn from_train(train: &[Interaction]) -> Vocab {
        let mut vocab = Vocab {
            users: Vec::new(),
            items: Vec::new(),
            user_index: HashMap::new(),
            item_index: HashMap::new(),
        };
        for rec in train {
            if !vocab.user_index.contains_key(&rec.user) {
                vocab
                    .user_index
                    .insert(rec.user.clone(), vocab.users.len() as u32);
                vocab.users.push(rec.user.clone());
            }
            if !vocab.item_index.contains_key(&rec.item) {
                vocab
                    .item_index
                    .insert(rec.item.clone(), vocab.items.len() as u32);
                vocab.items.push(rec.item.clone());
            }
        }
        vocab
    }

    /// Rebuild the lookup maps from explicit id lists (checkpoint loading).
    pub fn from_lists(users: Vec<String>, items: Vec<String>) -> Vocab {
        let user_index = users
            .iter()
            .enumerate()
            .map(|(i, u)| (u.clone(), i as u32))
            .collect();
        let item_index = items
            .iter()
            .enumerate()
            .map(|(i, it)| (it.clone(), i as u32))
            .collect();
        Vocab {
            users,
            items,
            user_index,
            item_index,
        }
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn user_idx(&self, id: &str) -> Result<u32> {
        self.user_index.get(id).copied().ok_or_else(|| Error::UnknownId {
            kind: "user",
            id: id.to_string(),
        })
    }

    pub fn item_idx(&self, id: &str) -> Result<u32> {
        self.item_index.get(id).copied().ok_or_else(|| Error::UnknownId {
            kind: "item",
            id: id.to_string(),
        })
    }
}

/// Interaction with vocabulary indices instead of string ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexedInteraction {
    pub user: u32,
    pub item: u32,
    pub time: Timestamp,
}

/// Index a record batch against a vocabulary. Fails on ids outside it, so
/// only apply to splits that were cold-start pruned against the same train
/// set the vocabulary came from.
pub fn index_interactions(data: &[Interaction], vocab: &Vocab) -> Result<Vec<IndexedInteraction>> {
    data.iter()
        .map(|rec| {
            Ok(IndexedInteraction {
                user: vocab.user_idx(&rec.user)?,
                item: vocab.item_idx(&rec.item)?,
                time: rec.time,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub item: u32,
    pub time: Timestamp,
}

/// One user's training-period consumption sequence, ordered by time (ties
/// keep input order), cut at the recency threshold `T`: events strictly
/// before `T` are "past", events at or after it are "recent".
#[derive(Debug, Clone)]
pub struct ConsumptionHistory {
    events: Vec<Event>,
    /// Index of the first recent event.
    cut: usize,
    /// Distinct items over the full training history, ascending.
    distinct_items: Vec<u32>,
    /// Distinct items over the past part, ascending.
    past_items: Vec<u32>,
    recent_items: HashSet<u32>,
}

impl ConsumptionHistory {
    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn past(&self) -> &[Event] {
        &self.events[..self.cut]
    }

    pub fn recent(&self) -> &[Event] {
        &self.events[self.cut..]
    }

    pub fn distinct_items(&self) -> &[u32] {
        &self.distinct_items
    }

    pub fn past_items(&self) -> &[u32] {
        &self.past_items
    }

    pub fn consumed(&self, item: u32) -> bool {
        self.distinct_items.binary_search(&item).is_ok()
    }

    pub fn consumed_recently(&self, item: u32) -> bool {
        self.recent_items.contains(&item)
    }

    pub fn last_time(&self) -> Option<Timestamp> {
        self.events.last().map(|e| e.time)
    }
}

/// Per-user histories for the whole training split, indexed by user index.
#[derive(Debug, Clone)]
pub struct Histories {
    pub t_threshold: Timestamp,
    per_user: Vec<ConsumptionHistory>,
}

impl Histories {
    pub fn user(&self, u: u32) -> &ConsumptionHistory {
        &self.per_user[u as usize]
    }

    pub fn n_users(&self) -> usize {
        self.per_user.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &ConsumptionHistory)> {
        self.per_user.iter().enumerate().map(|(u, h)| (u as u32, h))
    }
}

/// Build per-user histories from the indexed training split. `t_threshold`
/// must lie within the observed training time range.
pub fn build_histories(
    train: &[IndexedInteraction],
    n_users: usize,
    t_threshold: Timestamp,
) -> Result<Histories> {
    if train.is_empty() {
        return Err(Error::EmptyTrainingSplit);
    }
    let min_t = train.iter().map(|r| r.time).min().unwrap();
    let max_t = train.iter().map(|r| r.time).max().unwrap();
    if t_threshold < min_t || t_threshold > max_t {
        return Err(Error::Config(format!(
            "recency threshold {} outside training time range [{}, {}]",
            t_threshold, min_t, max_t
        )));
    }

    let mut events: Vec<Vec<Event>> = vec![Vec::new(); n_users];
    for rec in train {
        events[rec.user as usize].push(Event {
            item: rec.item,
            time: rec.time,
        });
    }
    let per_user = events
        .into_iter()
        .map(|mut evs| {
            evs.sort_by_key(|e| e.time); // stable: ties keep input order
            let cut = evs.partition_point(|e| e.time < t_threshold);
            let mut distinct_items: Vec<u32> = evs.iter().map(|e| e.item).collect();
            distinct_items.sort_unstable();
            distinct_items.dedup();
            let mut past_items: Vec<u32> = evs[..cut].iter().map(|e| e.item).collect();
            past_items.sort_unstable();
            past_items.dedup();
            let recent_items = evs[cut..].iter().map(|e| e.item).collect();
            ConsumptionHistory {
                events: evs,
                cut,
                distinct_items,
                past_items,
                recent_items,
            }
        })
        .collect();

    Ok(Histories {
        t_threshold,
        per_user,
    })
}

/// Fully indexed split bundle as consumed by training and evaluation.
#[derive(Debug, Clone)]
pub struct PreparedCorpus {
    pub vocab: Vocab,
    pub train: Vec<IndexedInteraction>,
    pub valid: Vec<IndexedInteraction>,
    pub test: Vec<IndexedInteraction>,
    pub train_end_time: Timestamp,
    pub valid_end_time: Timestamp,
}

impl PreparedCorpus {
    pub fn from_split(split: &DatasetSplit) -> Result<PreparedCorpus> {
        let vocab = Vocab::from_train(&split.train);
        Ok(PreparedCorpus {
            train: index_interactions(&split.train, &vocab)?,
            valid: index_interactions(&split.valid, &vocab)?,
            test: index_interactions(&split.test, &vocab)?,
            vocab,
            train_end_time: split.train_end_time,
            valid_end_time: split.valid_end_time,
        })
    }
}

/// Write a split directory: `train.tsv`, `valid.tsv`, `test.tsv`, `split.json`.
pub fn write_split_dir(dir: &Path, split: &DatasetSplit) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_interactions(&dir.join("train.tsv"), &split.train)?;
    write_interactions(&dir.join("valid.tsv"), &split.valid)?;
    write_interactions(&dir.join("test.tsv"), &split.test)?;
    let manifest = serde_json::to_string_pretty(&split.manifest())?;
    std::fs::write(dir.join("split.json"), manifest + "\n")?;
    Ok(())
}

pub fn read_split_dir(dir: &Path) -> Result<DatasetSplit> {
    let manifest: SplitManifest =
        serde_json::from_str(&std::fs::read_to_string(dir.join("split.json"))?)?;
    let split = DatasetSplit {
        train: read_interactions(&dir.join("train.tsv"))?,
        valid: read_interactions(&dir.join("valid.tsv"))?,
        test: read_interactions(&dir.join("test.tsv"))?,
        train_end_time: manifest.train_end_time,
        valid_end_time: manifest.valid_end_time,
    };
    if split.train.len() != manifest.train_count
        || split.valid.len() != manifest.valid_count
        || split.test.len() != manifest.test_count
    {
        return Err(Error::Config(format!(
            "split files disagree with split.json counts in {}",
            dir.display()
        )));
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(user: &str, item: &str, time: i64) -> Interaction {
        Interaction {
            user: user.into(),
            item: item.into(),
            time,
        }
    }

    fn days(d: i64) -> i64 {
        d * SECS_PER_DAY
    }

    #[test]
    fn parses_single_record() {
        let got = parse_tsv("u1\ti9\t1577836800".as_bytes()).unwrap();
        assert_eq!(got, vec![rec("u1", "i9", 1_577_836_800)]);
    }

    #[test]
    fn empty_input_yields_no_interactions() {
        assert!(parse_tsv("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse_tsv("u1\ti1\t5\nu2\ti2\n".as_bytes()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn non_integer_timestamp_is_rejected() {
        let err = parse_tsv("u1\ti1\tnoon".as_bytes()).unwrap_err();
        match err {
            Error::Parse { line, msg } => {
                assert_eq!(line, 1);
                assert!(msg.contains("timestamp"));
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn ingest_count_matches_line_count_at_scale() {
        // Catalog-scale smoke check: 118,323 well-formed lines in, the same
        // number of interactions out.
        let n = 118_323usize;
        let mut buf = String::new();
        for i in 0..n {
            buf.push_str(&format!("u{}\ti{}\t{}\n", i % 27_879, i % 10_429, i));
        }
        let got = parse_tsv(buf.as_bytes()).unwrap();
        assert_eq!(got.len(), n);
    }

    #[test]
    fn filter_drops_users_below_min_distinct_items() {
        // u1 has 2 distinct items (one repeated), u2 has 3.
        let data = vec![
            rec("u1", "a", 1),
            rec("u1", "a", 2),
            rec("u1", "b", 3),
            rec("u2", "a", 1),
            rec("u2", "b", 2),
            rec("u2", "c", 3),
        ];
        let kept = filter_users(data, 3);
        assert!(kept.iter().all(|r| r.user == "u2"));
        assert_eq!(kept.len(), 3);
    }

    #[test]
    fn filter_keeps_user_at_exact_threshold() {
        let data = vec![rec("u1", "a", 1), rec("u1", "b", 2)];
        assert_eq!(filter_users(data.clone(), 2), data);
    }

    #[test]
    fn split_windows_follow_the_global_max_time() {
        let data: Vec<_> = (1..=100).map(|d| rec("u", &format!("i{d}"), days(d))).collect();
        let split = chronological_split(data, days(30), days(30)).unwrap();
        let times = |v: &[Interaction]| v.iter().map(|r| r.time / SECS_PER_DAY).collect::<Vec<_>>();
        assert_eq!(times(&split.train), (1..=40).collect::<Vec<_>>());
        assert_eq!(times(&split.valid), Vec::<i64>::new()); // cold-start items pruned
        assert_eq!(split.train_end_time, days(40));
        assert_eq!(split.valid_end_time, days(70));
    }

    #[test]
    fn split_keeps_warm_valid_and_test_interactions() {
        let mut data = Vec::new();
        for d in 1..=100 {
            data.push(rec("u", "a", days(d)));
        }
        data.push(rec("u", "b", days(99))); // item unseen in train: pruned from test
        let split = chronological_split(data, days(30), days(30)).unwrap();
        assert_eq!(split.train.len(), 40);
        assert_eq!(split.valid.len(), 30);
        assert_eq!(split.test.len(), 30);
        assert!(split.test.iter().all(|r| r.item == "a"));
    }

    #[test]
    fn split_prunes_cold_start_users() {
        let mut data: Vec<_> = (1..=100).map(|d| rec("u", "a", days(d))).collect();
        data.push(rec("newcomer", "a", days(95)));
        let split = chronological_split(data, days(30), days(30)).unwrap();
        assert!(split.test.iter().all(|r| r.user == "u"));
    }

    #[test]
    fn split_with_no_training_data_is_an_error() {
        let data = vec![rec("u", "a", days(1)), rec("u", "a", days(2))];
        let err = chronological_split(data, days(30), days(30)).unwrap_err();
        assert!(matches!(err, Error::EmptyTrainingSplit));
    }

    #[test]
    fn histories_split_past_and_recent_at_threshold() {
        let vocab = Vocab::from_train(&[rec("u", "a", 5), rec("u", "b", 15)]);
        let train = index_interactions(&[rec("u", "a", 5), rec("u", "b", 15)], &vocab).unwrap();
        let hist = build_histories(&train, 1, 10).unwrap();
        let h = hist.user(0);
        assert_eq!(h.past().len(), 1);
        assert_eq!(h.recent().len(), 1);
        assert_eq!(h.past()[0].time, 5);
        assert_eq!(h.recent()[0].time, 15);
    }

    #[test]
    fn event_exactly_at_threshold_counts_as_recent() {
        let vocab = Vocab::from_train(&[rec("u", "a", 5), rec("u", "b", 10)]);
        let train = index_interactions(&[rec("u", "a", 5), rec("u", "b", 10)], &vocab).unwrap();
        let hist = build_histories(&train, 1, 10).unwrap();
        assert_eq!(hist.user(0).recent().len(), 1);
        assert!(hist.user(0).consumed_recently(vocab.item_idx("b").unwrap()));
    }

    #[test]
    fn threshold_outside_train_range_is_rejected() {
        let vocab = Vocab::from_train(&[rec("u", "a", 5)]);
        let train = index_interactions(&[rec("u", "a", 5)], &vocab).unwrap();
        assert!(build_histories(&train, 1, 99).is_err());
    }

    #[test]
    fn unknown_ids_error() {
        let vocab = Vocab::from_train(&[rec("u", "a", 5)]);
        assert!(matches!(
            vocab.user_idx("ghost"),
            Err(Error::UnknownId { kind: "user", .. })
        ));
        assert!(matches!(
            vocab.item_idx("ghost"),
            Err(Error::UnknownId { kind: "item", .. })
        ));
    }

    #[test]
    fn split_dir_roundtrip_preserves_records_and_boundaries() {
        let data: Vec<_> = (1..=100)
            .flat_map(|d| vec![rec("u1", "a", days(d)), rec("u2", "b", days(d))])
            .collect();
        let split = chronological_split(data, days(30), days(30)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_split_dir(dir.path(), &split).unwrap();
        let back = read_split_dir(dir.path()).unwrap();
        assert_eq!(back.train, split.train);
        assert_eq!(back.valid, split.valid);
        assert_eq!(back.test, split.test);
        assert_eq!(back.train_end_time, split.train_end_time);
        assert_eq!(back.valid_end_time, split.valid_end_time);
    }

    proptest! {
        #[test]
        fn filter_is_idempotent(
            recs in proptest::collection::vec((0u8..12, 0u8..12, 0i64..1000), 0..160)
        ) {
            let data: Vec<_> = recs
                .iter()
                .map(|(u, i, t)| rec(&format!("u{u}"), &format!("i{i}"), *t))
                .collect();
            let once = filter_users(data, 3);
            let twice = filter_users(once.clone(), 3);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn split_partitions_by_time_and_never_leaks_cold_ids(
            recs in proptest::collection::vec((0u8..10, 0u8..10, 1i64..2000), 1..200)
        ) {
            let data: Vec<_> = recs
                .iter()
                .map(|(u, i, t)| rec(&format!("u{u}"), &format!("i{i}"), *t * SECS_PER_DAY))
                .collect();
            match chronological_split(data, days(300), days(300)) {
                Ok(split) => {
                    let max_train = split.train.iter().map(|r| r.time).max().unwrap();
                    prop_assert!(max_train <= split.train_end_time);
                    for r in &split.valid {
                        prop_assert!(r.time > split.train_end_time && r.time <= split.valid_end_time);
                    }
                    for r in &split.test {
                        prop_assert!(r.time > split.valid_end_time);
                    }
                    let users: std::collections::HashSet<_> =
                        split.train.iter().map(|r| r.user.clone()).collect();
                    let items: std::collections::HashSet<_> =
                        split.train.iter().map(|r| r.item.clone()).collect();
                    for r in split.valid.iter().chain(&split.test) {
                        prop_assert!(users.contains(&r.user) && items.contains(&r.item));
                    }
                }
                Err(Error::EmptyTrainingSplit) => {}
                Err(e) => prop_assert!(false, "unexpected error: {e}"),
            }
        }

        #[test]
        fn histories_partition_events(
            recs in proptest::collection::vec((0u8..6, 0u8..8, 0i64..500), 1..120),
            t in 0i64..500
        ) {
            let data: Vec<_> = recs
                .iter()
                .map(|(u, i, t)| rec(&format!("u{u}"), &format!("i{i}"), *t))
                .collect();
            let vocab = Vocab::from_train(&data);
            let train = index_interactions(&data, &vocab).unwrap();
            if let Ok(hist) = build_histories(&train, vocab.n_users(), t) {
                for (_, h) in hist.iter() {
                    prop_assert_eq!(h.past().len() + h.recent().len(), h.events().len());
                    prop_assert!(h.past().iter().all(|e| e.time < t));
                    prop_assert!(h.recent().iter().all(|e| e.time >= t));
                    prop_assert!(h.events().windows(2).all(|w| w[0].time <= w[1].time));
                }
            }
        }
    }
}
