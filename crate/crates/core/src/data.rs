//! Rating ingestion, sparse storage and train/test splitting.
//!
//! Ratings are stored once as a flat list of `(user, item, rating)` entries
//! over dense 0-based indices, plus two compressed row views: one grouped by
//! user (the item set each user rated) and one grouped by item. The ALS row
//! solves walk these views directly.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::numerics::{RngStream, StreamLabel};

pub const RATING_MIN: f64 = 0.5;
pub const RATING_MAX: f64 = 5.0;

/// Exact header line of a `ratings.csv` file.
pub const CSV_HEADER: &str = "userId,movieId,rating,timestamp";

/// One line of a rating file, keyed by external ids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatingTriple {
    pub user_id: u64,
    pub item_id: u64,
    pub rating: f64,
    pub timestamp: i64,
}

/// Supported rating file layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatingFormat {
    /// `u.data`: `user<TAB>item<TAB>rating<TAB>timestamp`, no header.
    Tab,
    /// `ratings.csv` with the [`CSV_HEADER`] line.
    Csv,
}

impl FromStr for RatingFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tab" => Ok(RatingFormat::Tab),
            "csv" => Ok(RatingFormat::Csv),
            other => Err(Error::InvalidArgument(format!(
                "unknown dataset format `{other}` (expected tab or csv)"
            ))),
        }
    }
}

fn parse_field<T: FromStr>(field: Option<&str>, what: &str, line: usize) -> Result<T> {
    let raw = field.ok_or_else(|| Error::Parse {
        line,
        message: format!("missing {what}"),
    })?;
    raw.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("bad {what} `{raw}`"),
    })
}

fn parse_record(text: &str, sep: char, line: usize) -> Result<RatingTriple> {
    let mut fields = text.split(sep);
    let user_id = parse_field(fields.next(), "user id", line)?;
    let item_id = parse_field(fields.next(), "item id", line)?;
    let rating: f64 = parse_field(fields.next(), "rating", line)?;
    let timestamp = parse_field(fields.next(), "timestamp", line)?;
    if fields.next().is_some() {
        return Err(Error::Parse {
            line,
            message: "too many fields".into(),
        });
    }
    if !rating.is_finite() || !(RATING_MIN..=RATING_MAX).contains(&rating) {
        return Err(Error::Parse {
            line,
            message: format!("rating {rating} outside [{RATING_MIN}, {RATING_MAX}]"),
        });
    }
    Ok(RatingTriple {
        user_id,
        item_id,
        rating,
        timestamp,
    })
}

/// Parses MovieLens `u.data` lines. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn parse_tab<R: BufRead>(reader: R) -> Result<Vec<RatingTriple>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let text = line.trim_end_matches('\r');
        if text.trim().is_empty() {
            continue;
        }
        out.push(parse_record(text, '\t', idx + 1)?);
    }
    if out.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(out)
}

/// Parses a `ratings.csv` file. A file holding only the header yields an
/// empty list.
pub fn parse_csv<R: BufRead>(reader: R) -> Result<Vec<RatingTriple>> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(h) => h?,
        None => String::new(),
    };
    let header = header.trim_end_matches('\r').trim_start_matches('\u{feff}');
    if header != CSV_HEADER {
        return Err(Error::Header {
            expected: CSV_HEADER.into(),
            found: header.into(),
        });
    }
    let mut out = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let text = line.trim_end_matches('\r');
        if text.trim().is_empty() {
            continue;
        }
        out.push(parse_record(text, ',', idx + 2)?);
    }
    Ok(out)
}

/// Reads a rating file from disk in the given format.
pub fn read_ratings(path: &Path, format: RatingFormat) -> Result<Vec<RatingTriple>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    match format {
        RatingFormat::Tab => parse_tab(file),
        RatingFormat::Csv => parse_csv(file),
    }
}

/// Bijection between external ids and dense indices, in order of first
/// appearance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdMap {
    ids: Vec<u64>,
    index: HashMap<u64, usize>,
}

impl IdMap {
    fn intern(&mut self, id: u64) -> usize {
        let next = self.ids.len();
        *self.index.entry(id).or_insert_with(|| {
            self.ids.push(id);
            next
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, id: u64) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn id_of(&self, index: usize) -> u64 {
        self.ids[index]
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }
}

/// An observed rating over dense indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub user: usize,
    pub item: usize,
    pub rating: f64,
}

/// Compressed rows: `row(r)` lists `(column, rating)` pairs.
#[derive(Debug, Clone, PartialEq)]
struct Rows {
    offsets: Vec<usize>,
    cells: Vec<(usize, f64)>,
}

impl Rows {
    fn build(count: usize, pairs: impl Iterator<Item = (usize, usize, f64)> + Clone) -> Rows {
        let mut offsets = vec![0usize; count + 1];
        for (r, _, _) in pairs.clone() {
            offsets[r + 1] += 1;
        }
        for r in 0..count {
            offsets[r + 1] += offsets[r];
        }
        let mut fill = offsets.clone();
        let mut cells = vec![(0usize, 0.0f64); offsets[count]];
        for (r, c, v) in pairs {
            cells[fill[r]] = (c, v);
            fill[r] += 1;
        }
        Rows { offsets, cells }
    }

    #[inline]
    fn row(&self, r: usize) -> &[(usize, f64)] {
        &self.cells[self.offsets[r]..self.offsets[r + 1]]
    }
}

/// The observed part of the rating matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRatings {
    entries: Vec<Entry>,
    by_user: Rows,
    by_item: Rows,
    users: IdMap,
    items: IdMap,
}

impl SparseRatings {
    fn assemble(entries: Vec<Entry>, users: IdMap, items: IdMap) -> SparseRatings {
        let by_user = Rows::build(users.len(), entries.iter().map(|e| (e.user, e.item, e.rating)));
        let by_item = Rows::build(items.len(), entries.iter().map(|e| (e.item, e.user, e.rating)));
        SparseRatings {
            entries,
            by_user,
            by_item,
            users,
            items,
        }
    }

    /// Builds ratings directly over a dense index space. Ids are the indices
    /// themselves; rows with no ratings are allowed.
    pub fn from_entries(n_users: usize, n_items: usize, entries: Vec<Entry>) -> Result<SparseRatings> {
        let mut seen = HashSet::with_capacity(entries.len());
        for e in &entries {
            if e.user >= n_users || e.item >= n_items {
                return Err(Error::DimensionMismatch(format!(
                    "entry ({}, {}) outside {n_users}x{n_items}",
                    e.user, e.item
                )));
            }
            if !e.rating.is_finite() {
                return Err(Error::NonFinite("rating"));
            }
            if !seen.insert((e.user, e.item)) {
                return Err(Error::DuplicatePair {
                    user: e.user as u64,
                    item: e.item as u64,
                });
            }
        }
        let mut users = IdMap::default();
        (0..n_users as u64).for_each(|id| {
            users.intern(id);
        });
        let mut items = IdMap::default();
        (0..n_items as u64).for_each(|id| {
            items.intern(id);
        });
        Ok(SparseRatings::assemble(entries, users, items))
    }

    /// Number of users (rows of the rating matrix).
    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    /// Number of items (columns of the rating matrix).
    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    /// Number of observed ratings.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    /// Items rated by user `i`, with their ratings.
    pub fn user_ratings(&self, i: usize) -> &[(usize, f64)] {
        self.by_user.row(i)
    }

    /// Users who rated item `j`, with their ratings.
    pub fn item_ratings(&self, j: usize) -> &[(usize, f64)] {
        self.by_item.row(j)
    }

    pub fn user_map(&self) -> &IdMap {
        &self.users
    }

    pub fn item_map(&self) -> &IdMap {
        &self.items
    }
}

/// Builds the sparse structure, assigning dense indices by first appearance.
pub fn build_sparse(triples: &[RatingTriple]) -> Result<SparseRatings> {
    let mut users = IdMap::default();
    let mut items = IdMap::default();
    let mut seen = HashSet::with_capacity(triples.len());
    let mut entries = Vec::with_capacity(triples.len());
    for t in triples {
        let user = users.intern(t.user_id);
        let item = items.intern(t.item_id);
        if !seen.insert((user, item)) {
            return Err(Error::DuplicatePair {
                user: t.user_id,
                item: t.item_id,
            });
        }
        entries.push(Entry {
            user,
            item,
            rating: t.rating,
        });
    }
    Ok(SparseRatings::assemble(entries, users, items))
}

/// Which side of a split an observed rating landed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fold {
    Train,
    Test,
}

impl fmt::Display for Fold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Fold::Train => "train",
            Fold::Test => "test",
        })
    }
}

/// A train/test partition of a [`SparseRatings`].
///
/// `train` keeps the index space of the source data, so test entries index
/// directly into factors trained on it.
#[derive(Debug, Clone)]
pub struct SplitPair {
    pub train: SparseRatings,
    pub test: Vec<Entry>,
    /// Fold of every source entry, aligned with `source.entries()`.
    pub folds: Vec<Fold>,
    /// Test draws returned to train because their user or item would
    /// otherwise be absent from train.
    pub repaired: usize,
}

/// Uniform random split over rating entries, followed by cold-start repair.
pub fn split(data: &SparseRatings, test_fraction: f64, seed: u64) -> Result<SplitPair> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction {test_fraction} is outside (0, 1)"
        )));
    }
    if data.is_empty() {
        return Err(Error::EmptyInput);
    }
    let total = data.len();
    let n_test = (test_fraction * total as f64).round() as usize;

    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut RngStream::derive(seed, StreamLabel::Split));
    let mut folds = vec![Fold::Train; total];
    for &idx in &order[..n_test] {
        folds[idx] = Fold::Test;
    }

    let mut user_count = vec![0usize; data.n_users()];
    let mut item_count = vec![0usize; data.n_items()];
    for (e, f) in data.entries().iter().zip(&folds) {
        if *f == Fold::Train {
            user_count[e.user] += 1;
            item_count[e.item] += 1;
        }
    }
    let mut repaired = 0;
    for (e, f) in data.entries().iter().zip(folds.iter_mut()) {
        if *f == Fold::Test && (user_count[e.user] == 0 || item_count[e.item] == 0) {
            *f = Fold::Train;
            user_count[e.user] += 1;
            item_count[e.item] += 1;
            repaired += 1;
        }
    }
    if repaired > 0 {
        log::info!("split: {repaired} cold-start test ratings returned to train");
    }

    let mut train = Vec::with_capacity(total - n_test + repaired);
    let mut test = Vec::with_capacity(n_test - repaired);
    for (e, f) in data.entries().iter().zip(&folds) {
        match f {
            Fold::Train => train.push(*e),
            Fold::Test => test.push(*e),
        }
    }
    Ok(SplitPair {
        train: SparseRatings::assemble(train, data.users.clone(), data.items.clone()),
        test,
        folds,
        repaired,
    })
}

/// Writes `user_id,item_id,rating,fold` for every source rating, in source
/// order.
pub fn write_split_manifest<W: Write>(mut w: W, data: &SparseRatings, split: &SplitPair) -> Result<()> {
    writeln!(w, "user_id,item_id,rating,fold")?;
    for (e, f) in data.entries().iter().zip(&split.folds) {
        writeln!(
            w,
            "{},{},{},{}",
            data.user_map().id_of(e.user),
            data.item_map().id_of(e.item),
            e.rating,
            f
        )?;
    }
    Ok(())
}
