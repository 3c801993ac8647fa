//! Dataset ingestion, ID mapping, de-duplication, chronological
//! leave-last-out splitting, and split persistence.
//!
//! All interactions are implicit positives. Per user, the chronologically
//! last interaction is tagged test and the second-to-last validation; users
//! with fewer than three interactions stay entirely in train. Item
//! popularity is counted over train tags only, so later popularity analysis
//! cannot leak held-out interactions.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Split tag carried by every interaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    fn to_byte(self) -> u8 {
        match self {
            Split::Train => 0,
            Split::Validation => 1,
            Split::Test => 2,
        }
    }

    fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(Split::Train),
            1 => Ok(Split::Validation),
            2 => Ok(Split::Test),
            other => Err(Error::CorruptSplit(format!("invalid split tag {other}"))),
        }
    }
}

/// One line of an input file, before ID mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct RawInteraction {
    pub user_token: String,
    pub item_token: String,
    pub rating: Option<f64>,
    pub timestamp: i64,
}

/// One interaction after ID mapping and split tagging.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interaction {
    pub user: u32,
    pub item: u32,
    pub timestamp: i64,
    pub split: Split,
}

/// Counters reported by [`build_dataset`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildStats {
    pub n_raw: usize,
    pub n_below_threshold: usize,
    pub n_duplicates_removed: usize,
    pub n_users_dropped: usize,
}

/// Table-1-style statistics of a prepared dataset.
#[derive(Debug, Clone, Serialize)]
pub struct DatasetSummary {
    pub n_users: usize,
    pub n_items: usize,
    pub n_interactions: usize,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    /// Mean interactions per user over the full lists (before splitting).
    pub avg_length_full: f64,
    /// Mean per-user train-sequence length (after splitting).
    pub avg_length_train: f64,
}

/// An immutable, split-tagged interaction dataset.
///
/// Interactions are stored grouped by user id and time-sorted within each
/// user. The derived fields (offsets, popularity, per-user train sets) are
/// rebuilt deterministically from the interaction list, so equality over all
/// fields is well-defined for round-trip tests.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionDataset {
    n_users: usize,
    n_items: usize,
    interactions: Vec<Interaction>,
    user_tokens: Vec<String>,
    item_tokens: Vec<String>,
    user_offsets: Vec<usize>,
    item_popularity: Vec<u32>,
    user_train_items: Vec<Vec<u32>>,
}

impl InteractionDataset {
    fn finalize(
        n_users: usize,
        n_items: usize,
        interactions: Vec<Interaction>,
        user_tokens: Vec<String>,
        item_tokens: Vec<String>,
    ) -> Result<Self> {
        if interactions.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if user_tokens.len() != n_users || item_tokens.len() != n_items {
            return Err(Error::CorruptSplit(
                "token table sizes disagree with counts".into(),
            ));
        }
        let mut user_offsets = vec![0usize; n_users + 1];
        let mut item_popularity = vec![0u32; n_items];
        let mut user_train_items: Vec<Vec<u32>> = vec![Vec::new(); n_users];
        let mut prev_user = 0u32;
        for (k, it) in interactions.iter().enumerate() {
            if (it.user as usize) >= n_users || (it.item as usize) >= n_items {
                return Err(Error::CorruptSplit(format!("interaction {k} out of range")));
            }
            if it.user < prev_user {
                return Err(Error::CorruptSplit(
                    "interactions not grouped by user".into(),
                ));
            }
            prev_user = it.user;
            user_offsets[it.user as usize + 1] = k + 1;
            if it.split == Split::Train {
                item_popularity[it.item as usize] += 1;
                user_train_items[it.user as usize].push(it.item);
            }
        }
        // Users with no interactions keep the previous offset.
        for u in 1..=n_users {
            if user_offsets[u] == 0 {
                user_offsets[u] = user_offsets[u - 1];
            }
        }
        for items in &mut user_train_items {
            items.sort_unstable();
            items.dedup();
        }
        Ok(InteractionDataset {
            n_users,
            n_items,
            interactions,
            user_tokens,
            item_tokens,
            user_offsets,
            item_popularity,
            user_train_items,
        })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    /// All interactions of one user, time-sorted.
    pub fn user_interactions(&self, user: usize) -> &[Interaction] {
        &self.interactions[self.user_offsets[user]..self.user_offsets[user + 1]]
    }

    /// Sorted, de-duplicated train items of one user.
    pub fn user_train_items(&self, user: usize) -> &[u32] {
        &self.user_train_items[user]
    }

    pub fn test_item(&self, user: usize) -> Option<u32> {
        self.user_interactions(user)
            .iter()
            .find(|it| it.split == Split::Test)
            .map(|it| it.item)
    }

    pub fn validation_item(&self, user: usize) -> Option<u32> {
        self.user_interactions(user)
            .iter()
            .find(|it| it.split == Split::Validation)
            .map(|it| it.item)
    }

    /// Per-item interaction counts over the train split.
    pub fn item_popularity(&self) -> &[u32] {
        &self.item_popularity
    }

    pub fn user_token(&self, user: usize) -> &str {
        &self.user_tokens[user]
    }

    pub fn item_token(&self, item: usize) -> &str {
        &self.item_tokens[item]
    }

    /// (user, positive item) pairs over the train split, in storage order.
    pub fn train_pairs(&self) -> Vec<(u32, u32)> {
        self.interactions
            .iter()
            .filter(|it| it.split == Split::Train)
            .map(|it| (it.user, it.item))
            .collect()
    }

    pub fn summary(&self) -> DatasetSummary {
        let count = |s: Split| self.interactions.iter().filter(|it| it.split == s).count();
        let n_train = count(Split::Train);
        let n_validation = count(Split::Validation);
        let n_test = count(Split::Test);
        DatasetSummary {
            n_users: self.n_users,
            n_items: self.n_items,
            n_interactions: self.interactions.len(),
            n_train,
            n_validation,
            n_test,
            avg_length_full: self.interactions.len() as f64 / self.n_users as f64,
            avg_length_train: n_train as f64 / self.n_users as f64,
        }
    }
}

/// Parses MovieLens "UserID::MovieID::Rating::Timestamp" lines.
///
/// The whole file is scanned; if any line is malformed the load fails,
/// reporting the malformed-line count and the first offending line number.
pub fn load_movielens(path: impl AsRef<Path>) -> Result<Vec<RawInteraction>> {
    load_delimited(path.as_ref(), "::", false)
}

/// Parses a 4-column ratings CSV: `user,item,rating,timestamp`.
///
/// The first line is treated as a header and skipped iff its timestamp field
/// does not parse as an integer; otherwise it is data.
pub fn load_amazon_csv(path: impl AsRef<Path>) -> Result<Vec<RawInteraction>> {
    load_delimited(path.as_ref(), ",", true)
}

fn load_delimited(path: &Path, sep: &str, header_rule: bool) -> Result<Vec<RawInteraction>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut malformed = 0usize;
    let mut first_bad: Option<(usize, String)> = None;
    for (idx, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        if idx == 0 && header_rule {
            let looks_like_header = line
                .split(sep)
                .nth(3)
                .is_none_or(|ts| ts.trim().parse::<i64>().is_err());
            if looks_like_header {
                continue;
            }
        }
        match parse_line(line, sep) {
            Ok(rec) => records.push(rec),
            Err(detail) => {
                malformed += 1;
                if first_bad.is_none() {
                    first_bad = Some((idx + 1, detail));
                }
            }
        }
    }
    if let Some((first_line, detail)) = first_bad {
        return Err(Error::MalformedInput {
            path: path.display().to_string(),
            count: malformed,
            first_line,
            detail,
        });
    }
    Ok(records)
}

fn parse_line(line: &str, sep: &str) -> std::result::Result<RawInteraction, String> {
    let fields: Vec<&str> = line.split(sep).collect();
    if fields.len() != 4 {
        return Err(format!("expected 4 fields, got {}", fields.len()));
    }
    let user_token = fields[0].trim();
    let item_token = fields[1].trim();
    if user_token.is_empty() || item_token.is_empty() {
        return Err("empty user or item token".into());
    }
    let rating_field = fields[2].trim();
    let rating = if rating_field.is_empty() {
        None
    } else {
        Some(
            rating_field
                .parse::<f64>()
                .map_err(|_| format!("bad rating '{rating_field}'"))?,
        )
    };
    let timestamp: i64 = fields[3]
        .trim()
        .parse()
        .map_err(|_| format!("bad timestamp '{}'", fields[3].trim()))?;
    if timestamp < 0 {
        return Err(format!("negative timestamp {timestamp}"));
    }
    Ok(RawInteraction {
        user_token: user_token.to_string(),
        item_token: item_token.to_string(),
        rating,
        timestamp,
    })
}

/// Maps tokens to contiguous ids (first-appearance order), de-duplicates
/// (user, item) pairs keeping the earliest occurrence, sorts each user's
/// interactions by (timestamp, file order), and tags the leave-last-out
/// split.
///
/// `min_rating_threshold` drops interactions rated strictly below it;
/// unrated interactions always pass. By default everything is an implicit
/// positive.
pub fn build_dataset(
    raw: &[RawInteraction],
    min_rating_threshold: Option<f64>,
) -> Result<(InteractionDataset, BuildStats)> {
    let mut stats = BuildStats {
        n_raw: raw.len(),
        ..BuildStats::default()
    };
    let distinct_raw_users = {
        let mut set: Vec<&str> = raw.iter().map(|r| r.user_token.as_str()).collect();
        set.sort_unstable();
        set.dedup();
        set.len()
    };

    let kept: Vec<&RawInteraction> = raw
        .iter()
        .filter(|r| match (min_rating_threshold, r.rating) {
            (Some(th), Some(rating)) => rating >= th,
            _ => true,
        })
        .collect();
    stats.n_below_threshold = raw.len() - kept.len();
    if kept.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for r in &kept {
        if r.timestamp < 0 {
            return Err(Error::Config(format!(
                "negative timestamp for user '{}'",
                r.user_token
            )));
        }
    }

    // IDs by first appearance over the filtered sequence.
    let mut user_ids: HashMap<&str, u32> = HashMap::new();
    let mut item_ids: HashMap<&str, u32> = HashMap::new();
    let mut user_tokens = Vec::new();
    let mut item_tokens = Vec::new();
    for r in &kept {
        user_ids.entry(&r.user_token).or_insert_with(|| {
            user_tokens.push(r.user_token.clone());
            (user_tokens.len() - 1) as u32
        });
        item_ids.entry(&r.item_token).or_insert_with(|| {
            item_tokens.push(r.item_token.clone());
            (item_tokens.len() - 1) as u32
        });
    }
    stats.n_users_dropped = distinct_raw_users - user_tokens.len();

    // De-duplicate on (user, item), keeping the earliest (timestamp, file
    // order).
    let mut earliest: HashMap<(u32, u32), (i64, usize)> = HashMap::new();
    for (order, r) in kept.iter().enumerate() {
        let key = (
            user_ids[r.user_token.as_str()],
            item_ids[r.item_token.as_str()],
        );
        let candidate = (r.timestamp, order);
        earliest
            .entry(key)
            .and_modify(|best| {
                if candidate < *best {
                    *best = candidate;
                }
            })
            .or_insert(candidate);
    }
    stats.n_duplicates_removed = kept.len() - earliest.len();

    let n_users = user_tokens.len();
    let n_items = item_tokens.len();
    let mut per_user: Vec<Vec<(i64, usize, u32)>> = vec![Vec::new(); n_users];
    for (&(user, item), &(ts, order)) in &earliest {
        per_user[user as usize].push((ts, order, item));
    }

    let mut interactions = Vec::with_capacity(earliest.len());
    for (user, list) in per_user.iter_mut().enumerate() {
        list.sort_unstable();
        let n = list.len();
        for (k, &(ts, _, item)) in list.iter().enumerate() {
            let split = if n >= 3 && k == n - 1 {
                Split::Test
            } else if n >= 3 && k == n - 2 {
                Split::Validation
            } else {
                Split::Train
            };
            interactions.push(Interaction {
                user: user as u32,
                item,
                timestamp: ts,
                split,
            });
        }
    }

    let dataset =
        InteractionDataset::finalize(n_users, n_items, interactions, user_tokens, item_tokens)?;
    Ok((dataset, stats))
}

const SPLIT_MAGIC: &[u8; 8] = b"TRPLDS1\0";

#[derive(Serialize, Deserialize)]
struct TokenTrailer {
    user_tokens: Vec<String>,
    item_tokens: Vec<String>,
}

/// Writes the binary split container: magic, little-endian u32 counts, the
/// interaction table, split tags, a JSON id-map trailer, and a trailing
/// CRC32 over everything before it.
pub fn save_split(dataset: &InteractionDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let n_users = u32::try_from(dataset.n_users).expect("user count exceeds u32");
    let n_items = u32::try_from(dataset.n_items).expect("item count exceeds u32");
    let n_inter = u32::try_from(dataset.interactions.len()).expect("interaction count exceeds u32");

    let mut bytes = Vec::with_capacity(24 + 17 * dataset.interactions.len());
    bytes.extend_from_slice(SPLIT_MAGIC);
    bytes.extend_from_slice(&n_users.to_le_bytes());
    bytes.extend_from_slice(&n_items.to_le_bytes());
    bytes.extend_from_slice(&n_inter.to_le_bytes());
    for it in &dataset.interactions {
        bytes.extend_from_slice(&it.user.to_le_bytes());
        bytes.extend_from_slice(&it.item.to_le_bytes());
        bytes.extend_from_slice(&it.timestamp.to_le_bytes());
    }
    for it in &dataset.interactions {
        bytes.push(it.split.to_byte());
    }
    let trailer = serde_json::to_vec(&TokenTrailer {
        user_tokens: dataset.user_tokens.clone(),
        item_tokens: dataset.item_tokens.clone(),
    })?;
    bytes.extend_from_slice(&(trailer.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&trailer);
    let crc = crc32fast::hash(&bytes);
    bytes.extend_from_slice(&crc.to_le_bytes());
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_split(path: impl AsRef<Path>) -> Result<InteractionDataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < SPLIT_MAGIC.len() + 12 + 8 + 4 {
        return Err(Error::CorruptSplit("file too short".into()));
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::CorruptSplit(format!(
            "checksum mismatch: stored {stored:#010x}, computed {computed:#010x}"
        )));
    }

    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        if pos + n > body.len() {
            return Err(Error::CorruptSplit(format!("truncated at byte {pos}")));
        }
        let s = &body[pos..pos + n];
        pos += n;
        Ok(s)
    };

    if take(8)? != SPLIT_MAGIC {
        return Err(Error::CorruptSplit("bad magic".into()));
    }
    let n_users = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let n_items = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let n_inter = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;

    let table = take(16 * n_inter)?;
    let tags = take(n_inter)?;
    let mut interactions = Vec::with_capacity(n_inter);
    for k in 0..n_inter {
        let row = &table[16 * k..16 * (k + 1)];
        interactions.push(Interaction {
            user: u32::from_le_bytes(row[0..4].try_into().unwrap()),
            item: u32::from_le_bytes(row[4..8].try_into().unwrap()),
            timestamp: i64::from_le_bytes(row[8..16].try_into().unwrap()),
            split: Split::from_byte(tags[k])?,
        });
    }

    let trailer_len = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let trailer: TokenTrailer = serde_json::from_slice(take(trailer_len)?)
        .map_err(|e| Error::CorruptSplit(format!("id-map trailer: {e}")))?;
    if pos != body.len() {
        return Err(Error::CorruptSplit("trailing bytes after id-map".into()));
    }

    InteractionDataset::finalize(
        n_users,
        n_items,
        interactions,
        trailer.user_tokens,
        trailer.item_tokens,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::io::Write;
    use tempfile::tempdir;

    fn raw(user: &str, item: &str, rating: Option<f64>, ts: i64) -> RawInteraction {
        RawInteraction {
            user_token: user.into(),
            item_token: item.into(),
            rating,
            timestamp: ts,
        }
    }

    #[test]
    fn leave_last_out_worked_example() {
        // Interactions at t = [3,1,2] on items [a,b,c]: time order is
        // (b,1),(c,2),(a,3), so test = a, validation = c, train = {b}.
        let rows = vec![
            raw("u", "a", None, 3),
            raw("u", "b", None, 1),
            raw("u", "c", None, 2),
        ];
        let (ds, _) = build_dataset(&rows, None).unwrap();
        assert_eq!(ds.n_users(), 1);
        assert_eq!(ds.n_items(), 3);
        // Item ids follow first appearance: a=0, b=1, c=2.
        assert_eq!(ds.test_item(0), Some(0));
        assert_eq!(ds.validation_item(0), Some(2));
        assert_eq!(ds.user_train_items(0), &[1]);
        let ts: Vec<i64> = ds
            .user_interactions(0)
            .iter()
            .map(|it| it.timestamp)
            .collect();
        assert_eq!(ts, vec![1, 2, 3]);
    }

    #[test]
    fn short_users_stay_in_train() {
        let rows = vec![
            raw("u", "a", None, 1),
            raw("u", "b", None, 2),
            raw("v", "a", None, 5),
        ];
        let (ds, _) = build_dataset(&rows, None).unwrap();
        for it in ds.interactions() {
            assert_eq!(it.split, Split::Train);
        }
        assert_eq!(ds.test_item(0), None);
        assert_eq!(ds.validation_item(0), None);
    }

    #[test]
    fn duplicates_collapse_to_earliest() {
        let rows = vec![
            raw("u", "a", None, 9),
            raw("u", "a", None, 4),
            raw("u", "b", None, 5),
            raw("u", "c", None, 6),
            raw("u", "a", None, 4), // tie with file order 1: first one wins
        ];
        let (ds, stats) = build_dataset(&rows, None).unwrap();
        assert_eq!(stats.n_duplicates_removed, 2);
        let a = ds
            .user_interactions(0)
            .iter()
            .find(|it| it.item == 0)
            .unwrap();
        assert_eq!(a.timestamp, 4);
        assert_eq!(ds.interactions().len(), 3);
    }

    #[test]
    fn timestamp_ties_follow_file_order() {
        let rows = vec![
            raw("u", "a", None, 7),
            raw("u", "b", None, 7),
            raw("u", "c", None, 7),
        ];
        let (ds, _) = build_dataset(&rows, None).unwrap();
        let items: Vec<u32> = ds.user_interactions(0).iter().map(|it| it.item).collect();
        assert_eq!(items, vec![0, 1, 2]);
        assert_eq!(ds.test_item(0), Some(2));
        assert_eq!(ds.validation_item(0), Some(1));
    }

    #[test]
    fn rating_threshold_drops_rows_and_reports_lost_users() {
        let rows = vec![
            raw("u", "a", Some(5.0), 1),
            raw("u", "b", Some(2.0), 2),
            raw("v", "a", Some(1.0), 3),
            raw("w", "b", None, 4),
        ];
        let (ds, stats) = build_dataset(&rows, Some(3.0)).unwrap();
        assert_eq!(stats.n_below_threshold, 2);
        assert_eq!(stats.n_users_dropped, 1, "v lost every interaction");
        assert_eq!(ds.n_users(), 2);
        assert_eq!(ds.interactions().len(), 2);
    }

    #[test]
    fn popularity_counts_train_only() {
        let mut rows = Vec::new();
        // User u: 4 interactions; the last two (items c, d) become
        // validation and test, so only a and b count.
        for (i, item) in ["a", "b", "c", "d"].iter().enumerate() {
            rows.push(raw("u", item, None, i as i64));
        }
        rows.push(raw("v", "d", None, 0));
        let (ds, _) = build_dataset(&rows, None).unwrap();
        assert_eq!(ds.item_popularity(), &[1, 1, 0, 1]);
    }

    #[test]
    fn id_maps_are_stable_across_rebuilds() {
        let rows = vec![
            raw("x", "i1", None, 2),
            raw("y", "i2", None, 1),
            raw("x", "i3", None, 3),
            raw("y", "i1", None, 4),
        ];
        let (a, _) = build_dataset(&rows, None).unwrap();
        let (b, _) = build_dataset(&rows, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.user_token(0), "x");
        assert_eq!(a.item_token(2), "i3");
    }

    #[test]
    fn temporal_sanity_on_random_instances() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let mut rows = Vec::new();
            for u in 0..rng.random_range(1..8) {
                for _ in 0..rng.random_range(1..12) {
                    rows.push(raw(
                        &format!("u{u}"),
                        &format!("i{}", rng.random_range(0..15)),
                        None,
                        rng.random_range(0..1_000),
                    ));
                }
            }
            let Ok((ds, _)) = build_dataset(&rows, None) else {
                continue;
            };
            for u in 0..ds.n_users() {
                let list = ds.user_interactions(u);
                assert!(list.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
                let n_test = list.iter().filter(|it| it.split == Split::Test).count();
                let n_val = list
                    .iter()
                    .filter(|it| it.split == Split::Validation)
                    .count();
                if list.len() >= 3 {
                    assert_eq!((n_test, n_val), (1, 1));
                    assert_eq!(list[list.len() - 1].split, Split::Test);
                    assert_eq!(list[list.len() - 2].split, Split::Validation);
                } else {
                    assert_eq!((n_test, n_val), (0, 0));
                }
            }
        }
    }

    #[test]
    fn movielens_loader_parses_and_rejects() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("ratings.dat");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "1::1193::5::978300760").unwrap();
        writeln!(f, "1::661::3::978302109").unwrap();
        drop(f);
        let rows = load_movielens(&path).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0], raw("1", "1193", Some(5.0), 978300760));

        let bad = dir.path().join("bad.dat");
        std::fs::write(&bad, "1::2::3::4\nbroken line\n5::6::x::8\n").unwrap();
        let err = load_movielens(&bad).unwrap_err();
        match err {
            Error::MalformedInput {
                count, first_line, ..
            } => {
                assert_eq!(count, 2);
                assert_eq!(first_line, 2);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn empty_file_loads_empty() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("empty.dat");
        std::fs::write(&path, "").unwrap();
        assert!(load_movielens(&path).unwrap().is_empty());
    }

    #[test]
    fn csv_header_rule() {
        let dir = tempdir().unwrap();
        let with_header = dir.path().join("a.csv");
        std::fs::write(
            &with_header,
            "user,item,rating,timestamp\nA1,B7,4.0,1404691200\n",
        )
        .unwrap();
        let rows = load_amazon_csv(&with_header).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0], raw("A1", "B7", Some(4.0), 1404691200));

        let no_header = dir.path().join("b.csv");
        std::fs::write(&no_header, "A1,B7,4.0,1404691200\nA2,B9,5.0,1404691201\n").unwrap();
        assert_eq!(load_amazon_csv(&no_header).unwrap().len(), 2);
    }

    #[test]
    fn split_round_trip_and_checksum() {
        let rows = vec![
            raw("u", "a", None, 3),
            raw("u", "b", None, 1),
            raw("u", "c", None, 2),
            raw("v", "a", None, 10),
        ];
        let (ds, _) = build_dataset(&rows, None).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("data.split");
        save_split(&ds, &path).unwrap();
        assert_eq!(load_split(&path).unwrap(), ds);

        // Flip one payload byte: the checksum must catch it.
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[10] ^= 0xff;
        std::fs::write(&path, &bytes).unwrap();
        match load_split(&path) {
            Err(Error::CorruptSplit(msg)) => assert!(msg.contains("checksum")),
            other => panic!("expected checksum error, got {other:?}"),
        }
    }

    #[test]
    fn split_byte_layout_is_little_endian() {
        let rows = vec![raw("u", "a", None, 5), raw("u", "b", None, 6)];
        let (ds, _) = build_dataset(&rows, None).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("data.split");
        save_split(&ds, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        // Reassemble the exact expected image.
        let mut expected = Vec::new();
        expected.extend_from_slice(b"TRPLDS1\0");
        expected.extend_from_slice(&1u32.to_le_bytes()); // users
        expected.extend_from_slice(&2u32.to_le_bytes()); // items
        expected.extend_from_slice(&2u32.to_le_bytes()); // interactions
        for (item, ts) in [(0u32, 5i64), (1, 6)] {
            expected.extend_from_slice(&0u32.to_le_bytes());
            expected.extend_from_slice(&item.to_le_bytes());
            expected.extend_from_slice(&ts.to_le_bytes());
        }
        expected.extend_from_slice(&[0, 0]); // both train
        let trailer = serde_json::to_vec(&TokenTrailer {
            user_tokens: vec!["u".into()],
            item_tokens: vec!["a".into(), "b".into()],
        })
        .unwrap();
        expected.extend_from_slice(&(trailer.len() as u64).to_le_bytes());
        expected.extend_from_slice(&trailer);
        expected.extend_from_slice(&crc32fast::hash(&expected).to_le_bytes());
        assert_eq!(bytes, expected);

        // And the handmade image loads to the same dataset.
        let reparsed = load_split(&path).unwrap();
        assert_eq!(reparsed, ds);
    }

    #[test]
    fn summary_reports_both_average_lengths() {
        let rows = vec![
            raw("u", "a", None, 1),
            raw("u", "b", None, 2),
            raw("u", "c", None, 3),
            raw("u", "d", None, 4),
            raw("v", "a", None, 1),
            raw("v", "b", None, 2),
        ];
        let (ds, _) = build_dataset(&rows, None).unwrap();
        let s = ds.summary();
        assert_eq!(s.n_interactions, 6);
        assert_abs_diff_eq!(s.avg_length_full, 3.0);
        // u keeps 2 train rows (of 4), v keeps both.
        assert_abs_diff_eq!(s.avg_length_train, 2.0);
        assert_eq!((s.n_train, s.n_validation, s.n_test), (4, 1, 1));
    }
}
