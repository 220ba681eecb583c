//! Painting metadata, cleaning rules and deterministic train/test splitting.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exact, ordered manifest header.
pub const MANIFEST_HEADER: [&str; 7] = [
    "painting_id",
    "artist_id",
    "artist_name",
    "style",
    "year",
    "image_path",
    "flags",
];

/// Earliest and latest accepted production years.
pub const YEAR_RANGE: (i32, i32) = (1200, 2100);

/// Images whose mean channel spread (0..255 scale) is below this are
/// treated as black and white.
pub const MONOCHROME_THRESHOLD: f64 = 8.0;

/// The nine style classes, in their fixed index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StyleClass {
    EarlyRenaissance,
    HighRenaissance,
    Baroque,
    Realism,
    Impressionism,
    Cubism,
    AbstractArt,
    PopArt,
    Ukiyoe,
}

impl StyleClass {
    pub const COUNT: usize = 9;

    pub const ALL: [StyleClass; 9] = [
        StyleClass::EarlyRenaissance,
        StyleClass::HighRenaissance,
        StyleClass::Baroque,
        StyleClass::Realism,
        StyleClass::Impressionism,
        StyleClass::Cubism,
        StyleClass::AbstractArt,
        StyleClass::PopArt,
        StyleClass::Ukiyoe,
    ];

    /// One-based index (1..=9).
    pub fn index(self) -> usize {
        self.ordinal() + 1
    }

    /// Zero-based position, used as the classifier label.
    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        index.checked_sub(1).and_then(Self::from_ordinal)
    }

    pub fn from_ordinal(ordinal: usize) -> Option<Self> {
        Self::ALL.get(ordinal).copied()
    }

    /// Identifier used in manifests and reports.
    pub fn name(self) -> &'static str {
        match self {
            StyleClass::EarlyRenaissance => "EarlyRenaissance",
            StyleClass::HighRenaissance => "HighRenaissance",
            StyleClass::Baroque => "Baroque",
            StyleClass::Realism => "Realism",
            StyleClass::Impressionism => "Impressionism",
            StyleClass::Cubism => "Cubism",
            StyleClass::AbstractArt => "AbstractArt",
            StyleClass::PopArt => "PopArt",
            StyleClass::Ukiyoe => "Ukiyoe",
        }
    }

    /// Human-readable label for plots and legends.
    pub fn display_name(self) -> &'static str {
        match self {
            StyleClass::EarlyRenaissance => "Early Renaissance",
            StyleClass::HighRenaissance => "High Renaissance",
            StyleClass::Baroque => "Baroque",
            StyleClass::Realism => "Realism",
            StyleClass::Impressionism => "Impressionism",
            StyleClass::Cubism => "Cubism",
            StyleClass::AbstractArt => "Abstract Art",
            StyleClass::PopArt => "Pop Art",
            StyleClass::Ukiyoe => "Ukiyo-e",
        }
    }
}

impl fmt::Display for StyleClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown style class {0:?}")]
pub struct UnknownStyle(pub String);

impl FromStr for StyleClass {
    type Err = UnknownStyle;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StyleClass::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| UnknownStyle(s.to_string()))
    }
}

/// Manual cleaning flags carried by the manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PaintingFlag {
    NotPainting,
    PartialFrame,
    Sketch,
    Monochrome,
    Distorted,
}

impl PaintingFlag {
    pub const ALL: [PaintingFlag; 5] = [
        PaintingFlag::NotPainting,
        PaintingFlag::PartialFrame,
        PaintingFlag::Sketch,
        PaintingFlag::Monochrome,
        PaintingFlag::Distorted,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PaintingFlag::NotPainting => "not_painting",
            PaintingFlag::PartialFrame => "partial_frame",
            PaintingFlag::Sketch => "sketch",
            PaintingFlag::Monochrome => "monochrome",
            PaintingFlag::Distorted => "distorted",
        }
    }
}

impl FromStr for PaintingFlag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PaintingFlag::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaintingRecord {
    pub painting_id: String,
    pub artist_id: String,
    pub style: StyleClass,
    pub year: Option<i32>,
    pub image_ref: String,
    pub flags: BTreeSet<PaintingFlag>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArtistRecord {
    pub artist_id: String,
    pub name: String,
    pub primary_style: StyleClass,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub paintings: Vec<PaintingRecord>,
    pub artists: BTreeMap<String, ArtistRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RowErrorKind {
    #[error("expected {expected} fields, found {found}")]
    FieldCount { expected: usize, found: usize },
    #[error("empty {0}")]
    EmptyField(&'static str),
    #[error("duplicate painting_id {0:?}")]
    DuplicatePainting(String),
    #[error("unknown style {0:?}")]
    UnknownStyle(String),
    #[error("year {0:?} is not an integer")]
    BadYear(String),
    #[error("year {0} outside {min}..={max}", min = YEAR_RANGE.0, max = YEAR_RANGE.1)]
    YearOutOfRange(i32),
    #[error("unknown flag {0:?}")]
    UnknownFlag(String),
    #[error("artist {artist_id:?} already has style {existing}, row says {found}")]
    InconsistentStyle {
        artist_id: String,
        existing: StyleClass,
        found: StyleClass,
    },
    #[error("artist {artist_id:?} already named {existing:?}, row says {found:?}")]
    InconsistentName {
        artist_id: String,
        existing: String,
        found: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct RowError {
    /// One-based line number in the CSV text (the header is line 1).
    pub line: u64,
    pub kind: RowErrorKind,
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest is empty (no header)")]
    MissingHeader,
    #[error("missing header column {0:?}")]
    MissingColumn(&'static str),
    #[error("duplicate header column {0:?}")]
    DuplicateColumn(String),
    #[error("unexpected header {found:?}, expected {expected:?}")]
    BadHeader { found: Vec<String>, expected: String },
    #[error("{} malformed row(s); first: {}", .0.len(), .0[0])]
    Rows(Vec<RowError>),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Parses manifest CSV text. All malformed rows are collected before failing.
pub fn parse_manifest(bytes: &[u8]) -> Result<DatasetManifest, ManifestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(bytes);

    let header = reader.headers()?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(ManifestError::MissingHeader);
    }
    check_header(&header)?;

    let mut manifest = DatasetManifest::default();
    let mut seen = HashSet::new();
    let mut errors = Vec::new();

    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        match parse_row(&record, &mut manifest, &mut seen) {
            Ok(()) => {}
            Err(kind) => errors.push(RowError { line, kind }),
        }
    }

    if errors.is_empty() {
        Ok(manifest)
    } else {
        Err(ManifestError::Rows(errors))
    }
}

fn check_header(header: &csv::StringRecord) -> Result<(), ManifestError> {
    let mut names = HashSet::new();
    for col in header.iter() {
        if !names.insert(col) {
            return Err(ManifestError::DuplicateColumn(col.to_string()));
        }
    }
    for col in MANIFEST_HEADER {
        if !names.contains(col) {
            return Err(ManifestError::MissingColumn(col));
        }
    }
    if header.iter().ne(MANIFEST_HEADER.iter().copied()) {
        return Err(ManifestError::BadHeader {
            found: header.iter().map(str::to_string).collect(),
            expected: MANIFEST_HEADER.join(","),
        });
    }
    Ok(())
}

fn parse_row(
    record: &csv::StringRecord,
    manifest: &mut DatasetManifest,
    seen: &mut HashSet<String>,
) -> Result<(), RowErrorKind> {
    if record.len() != MANIFEST_HEADER.len() {
        return Err(RowErrorKind::FieldCount {
            expected: MANIFEST_HEADER.len(),
            found: record.len(),
        });
    }
    let painting_id = non_empty(&record[0], "painting_id")?;
    let artist_id = non_empty(&record[1], "artist_id")?;
    let artist_name = record[2].trim().to_string();
    let style: StyleClass = record[3]
        .trim()
        .parse()
        .map_err(|e: UnknownStyle| RowErrorKind::UnknownStyle(e.0))?;
    let year = parse_year(record[4].trim())?;
    let image_ref = record[5].trim().to_string();
    let flags = parse_flags(record[6].trim())?;

    if seen.contains(&painting_id) {
        return Err(RowErrorKind::DuplicatePainting(painting_id));
    }

    match manifest.artists.get(&artist_id) {
        Some(artist) if artist.primary_style != style => {
            return Err(RowErrorKind::InconsistentStyle {
                artist_id,
                existing: artist.primary_style,
                found: style,
            })
        }
        Some(artist) if artist.name != artist_name => {
            return Err(RowErrorKind::InconsistentName {
                artist_id,
                existing: artist.name.clone(),
                found: artist_name,
            })
        }
        Some(_) => {}
        None => {
            manifest.artists.insert(
                artist_id.clone(),
                ArtistRecord {
                    artist_id: artist_id.clone(),
                    name: artist_name,
                    primary_style: style,
                },
            );
        }
    }

    seen.insert(painting_id.clone());
    manifest.paintings.push(PaintingRecord {
        painting_id,
        artist_id,
        style,
        year,
        image_ref,
        flags,
    });
    Ok(())
}

fn non_empty(field: &str, name: &'static str) -> Result<String, RowErrorKind> {
    let field = field.trim();
    if field.is_empty() {
        Err(RowErrorKind::EmptyField(name))
    } else {
        Ok(field.to_string())
    }
}

fn parse_year(field: &str) -> Result<Option<i32>, RowErrorKind> {
    if field.is_empty() {
        return Ok(None);
    }
    let year: i32 = field
        .parse()
        .map_err(|_| RowErrorKind::BadYear(field.to_string()))?;
    if !(YEAR_RANGE.0..=YEAR_RANGE.1).contains(&year) {
        return Err(RowErrorKind::YearOutOfRange(year));
    }
    Ok(Some(year))
}

fn parse_flags(field: &str) -> Result<BTreeSet<PaintingFlag>, RowErrorKind> {
    if field.is_empty() {
        return Ok(BTreeSet::new());
    }
    field
        .split('|')
        .map(|f| {
            f.trim()
                .parse()
                .map_err(RowErrorKind::UnknownFlag)
        })
        .collect()
}

/// Serializes a manifest back to CSV with the canonical header.
pub fn write_manifest(manifest: &DatasetManifest) -> Vec<u8> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(MANIFEST_HEADER)
        .expect("writing to a Vec cannot fail");
    for p in &manifest.paintings {
        let name = manifest
            .artists
            .get(&p.artist_id)
            .map(|a| a.name.as_str())
            .unwrap_or("");
        let year = p.year.map(|y| y.to_string()).unwrap_or_default();
        let flags = p
            .flags
            .iter()
            .map(|f| f.name())
            .collect::<Vec<_>>()
            .join("|");
        writer
            .write_record([
                p.painting_id.as_str(),
                p.artist_id.as_str(),
                name,
                p.style.name(),
                year.as_str(),
                p.image_ref.as_str(),
                flags.as_str(),
            ])
            .expect("writing to a Vec cannot fail");
    }
    writer.into_inner().expect("flushing a Vec cannot fail")
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.paintings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paintings.is_empty()
    }

    pub fn painting(&self, painting_id: &str) -> Option<&PaintingRecord> {
        self.paintings.iter().find(|p| p.painting_id == painting_id)
    }

    /// Index from painting id to position in `paintings`.
    pub fn index_by_id(&self) -> BTreeMap<&str, usize> {
        self.paintings
            .iter()
            .enumerate()
            .map(|(i, p)| (p.painting_id.as_str(), i))
            .collect()
    }

    /// Keeps only paintings accepted by `keep`, dropping artists left with none.
    pub fn retain_paintings(&self, mut keep: impl FnMut(&PaintingRecord) -> bool) -> Self {
        let paintings: Vec<_> = self.paintings.iter().filter(|p| keep(p)).cloned().collect();
        let used: HashSet<&str> = paintings.iter().map(|p| p.artist_id.as_str()).collect();
        let artists = self
            .artists
            .iter()
            .filter(|(id, _)| used.contains(id.as_str()))
            .map(|(id, a)| (id.clone(), a.clone()))
            .collect();
        DatasetManifest { paintings, artists }
    }
}

/// Painting counts per style class, in class order.
pub fn class_histogram(manifest: &DatasetManifest) -> BTreeMap<StyleClass, usize> {
    let mut counts: BTreeMap<StyleClass, usize> =
        StyleClass::ALL.into_iter().map(|c| (c, 0)).collect();
    for p in &manifest.paintings {
        *counts.entry(p.style).or_default() += 1;
    }
    counts
}

/// Supplies per-image colour statistics for the monochrome rule.
pub trait ImageProbe {
    /// Mean over pixels of `max(R,G,B) - min(R,G,B)`, on a 0..255 scale.
    fn channel_spread(&self, image_ref: &str) -> Result<f64, String>;
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExclusionRule {
    Flag(PaintingFlag),
    MonochromeHeuristic { spread: f64 },
    Unreadable { reason: String },
}

impl ExclusionRule {
    pub fn label(&self) -> String {
        match self {
            ExclusionRule::Flag(flag) => flag.name().to_string(),
            ExclusionRule::MonochromeHeuristic { spread } => {
                format!("monochrome_heuristic(spread={spread:.3})")
            }
            ExclusionRule::Unreadable { reason } => format!("unreadable({reason})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exclusion {
    pub painting_id: String,
    pub rule: ExclusionRule,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExclusionReport {
    pub exclusions: Vec<Exclusion>,
}

impl ExclusionReport {
    pub fn to_csv(&self) -> Vec<u8> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record(["painting_id", "rule"])
            .expect("writing to a Vec cannot fail");
        for e in &self.exclusions {
            writer
                .write_record([e.painting_id.as_str(), e.rule.label().as_str()])
                .expect("writing to a Vec cannot fail");
        }
        writer.into_inner().expect("flushing a Vec cannot fail")
    }
}

/// Applies the cleaning rules. A painting with any manual flag is removed
/// under its first flag; otherwise, with a probe, images below
/// [`MONOCHROME_THRESHOLD`] or that cannot be read are removed.
pub fn clean(
    manifest: &DatasetManifest,
    image_probe: Option<&dyn ImageProbe>,
) -> (DatasetManifest, ExclusionReport) {
    let mut report = ExclusionReport::default();
    let cleaned = manifest.retain_paintings(|p| {
        let rule = if let Some(&flag) = p.flags.iter().next() {
            Some(ExclusionRule::Flag(flag))
        } else if let Some(probe) = image_probe {
            match probe.channel_spread(&p.image_ref) {
                Ok(spread) if spread < MONOCHROME_THRESHOLD => {
                    Some(ExclusionRule::MonochromeHeuristic { spread })
                }
                Ok(_) => None,
                Err(reason) => Some(ExclusionRule::Unreadable { reason }),
            }
        } else {
            None
        };
        match rule {
            Some(rule) => {
                report.exclusions.push(Exclusion {
                    painting_id: p.painting_id.clone(),
                    rule,
                });
                false
            }
            None => true,
        }
    });
    (cleaned, report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Subset {
    Train,
    Test,
}

impl Subset {
    pub fn name(self) -> &'static str {
        match self {
            Subset::Train => "train",
            Subset::Test => "test",
        }
    }
}

impl FromStr for Subset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Subset::Train),
            "test" => Ok(Subset::Test),
            other => Err(format!("unknown subset {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    pub assignment: BTreeMap<String, Subset>,
    pub ratio: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SplitError {
    #[error("cannot split an empty manifest")]
    Empty,
    #[error("split ratio {0} outside (0, 1)")]
    BadRatio(f64),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
}

/// Number of training items for `n` paintings, rounding half up.
pub fn train_count(n: usize, ratio: f64) -> usize {
    ((ratio * n as f64) + 0.5).floor() as usize
}

/// Uniform random split: ids are sorted, shuffled with a seeded ChaCha8
/// stream, and the first `round(ratio * n)` go to training.
pub fn split(manifest: &DatasetManifest, ratio: f64, seed: u64) -> Result<SplitAssignment, SplitError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(SplitError::BadRatio(ratio));
    }
    if manifest.is_empty() {
        return Err(SplitError::Empty);
    }
    let mut ids: Vec<&str> = manifest.paintings.iter().map(|p| p.painting_id.as_str()).collect();
    ids.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);

    let n_train = train_count(ids.len(), ratio);
    let assignment = ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let subset = if i < n_train { Subset::Train } else { Subset::Test };
            (id.to_string(), subset)
        })
        .collect();
    Ok(SplitAssignment {
        assignment,
        ratio,
        seed,
    })
}

impl SplitAssignment {
    pub fn ids(&self, subset: Subset) -> impl Iterator<Item = &str> {
        self.assignment
            .iter()
            .filter(move |(_, s)| **s == subset)
            .map(|(id, _)| id.as_str())
    }

    pub fn count(&self, subset: Subset) -> usize {
        self.ids(subset).count()
    }

    /// `painting_id,subset` rows sorted by id.
    pub fn to_csv(&self) -> Vec<u8> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record(["painting_id", "subset"])
            .expect("writing to a Vec cannot fail");
        for (id, subset) in &self.assignment {
            writer
                .write_record([id.as_str(), subset.name()])
                .expect("writing to a Vec cannot fail");
        }
        writer.into_inner().expect("flushing a Vec cannot fail")
    }

    /// Reads a split file. Ratio and seed are not stored in the file and are
    /// reconstructed as the observed train fraction and 0.
    pub fn from_csv(bytes: &[u8]) -> Result<Self, SplitError> {
        let mut reader = csv::Reader::from_reader(bytes);
        let mut assignment = BTreeMap::new();
        for record in reader.records() {
            let record = record.map_err(|e| SplitError::Parse {
                line: e.position().map(|p| p.line()).unwrap_or(0),
                message: e.to_string(),
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if record.len() != 2 {
                return Err(SplitError::Parse {
                    line,
                    message: "expected painting_id,subset".into(),
                });
            }
            let subset = record[1]
                .parse()
                .map_err(|message| SplitError::Parse { line, message })?;
            assignment.insert(record[0].to_string(), subset);
        }
        let n = assignment.len().max(1);
        let train = assignment.values().filter(|s| **s == Subset::Train).count();
        Ok(SplitAssignment {
            assignment,
            ratio: train as f64 / n as f64,
            seed: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "painting_id,artist_id,artist_name,style,year,image_path,flags\n";

    fn manifest(rows: &str) -> Result<DatasetManifest, ManifestError> {
        parse_manifest(format!("{HEADER}{rows}").as_bytes())
    }

    struct FixedProbe(BTreeMap<String, Result<f64, String>>);

    impl ImageProbe for FixedProbe {
        fn channel_spread(&self, image_ref: &str) -> Result<f64, String> {
            self.0
                .get(image_ref)
                .cloned()
                .unwrap_or_else(|| Err("no such image".into()))
        }
    }

    #[test]
    fn style_index_name_bijection() {
        for (i, class) in StyleClass::ALL.into_iter().enumerate() {
            assert_eq!(class.index(), i + 1);
            assert_eq!(StyleClass::from_index(i + 1), Some(class));
            assert_eq!(class.name().parse::<StyleClass>().unwrap(), class);
        }
        assert_eq!(StyleClass::from_index(0), None);
        assert_eq!(StyleClass::from_index(10), None);
    }

    #[test]
    fn header_only_is_empty_manifest() {
        let m = manifest("").unwrap();
        assert!(m.is_empty());
        assert!(m.artists.is_empty());
    }

    #[test]
    fn unknown_style_names_line_and_label() {
        let err = manifest("p1,a1,Ann,Baroque,1650,p1.ppm,\np2,a2,Bob,Fauvism,1905,p2.ppm,\n")
            .unwrap_err();
        match err {
            ManifestError::Rows(rows) => {
                assert_eq!(rows.len(), 1);
                assert_eq!(rows[0].line, 3);
                assert_eq!(rows[0].kind, RowErrorKind::UnknownStyle("Fauvism".into()));
                assert!(rows[0].to_string().contains("Fauvism"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_errors() {
        let missing = parse_manifest(b"painting_id,artist_id,artist_name,style,year,image_path\n");
        assert!(matches!(missing, Err(ManifestError::MissingColumn("flags"))));
        let dup = parse_manifest(
            b"painting_id,artist_id,artist_name,style,year,image_path,flags,style\n",
        );
        assert!(matches!(dup, Err(ManifestError::DuplicateColumn(c)) if c == "style"));
        let reordered =
            parse_manifest(b"artist_id,painting_id,artist_name,style,year,image_path,flags\n");
        assert!(matches!(reordered, Err(ManifestError::BadHeader { .. })));
    }

    #[test]
    fn row_errors_are_collected() {
        let err = manifest(
            "p1,a1,Ann,Baroque,16x0,p1.ppm,\n\
             p1,a1,Ann,Baroque,1650,p1.ppm,\n\
             p1,a1,Ann,Baroque,1651,p1.ppm,\n\
             p3,a1,Ann,Realism,1651,p3.ppm,\n\
             p4,a2,Bo,Realism,1000,p4.ppm,\n\
             p5,a2,Bo,Realism,,p5.ppm,blurry\n",
        )
        .unwrap_err();
        let ManifestError::Rows(rows) = err else {
            panic!("expected row errors")
        };
        let kinds: Vec<_> = rows.iter().map(|r| (r.line, r.kind.clone())).collect();
        assert_eq!(kinds[0], (2, RowErrorKind::BadYear("16x0".into())));
        assert_eq!(kinds[1], (4, RowErrorKind::DuplicatePainting("p1".into())));
        assert!(matches!(kinds[2], (5, RowErrorKind::InconsistentStyle { .. })));
        assert_eq!(kinds[3], (6, RowErrorKind::YearOutOfRange(1000)));
        assert_eq!(kinds[4], (7, RowErrorKind::UnknownFlag("blurry".into())));
    }

    #[test]
    fn flags_and_missing_year_parse() {
        let m = manifest("p1,a1,Ann,Ukiyoe,,p1.ppm,sketch|monochrome\n").unwrap();
        let p = &m.paintings[0];
        assert_eq!(p.year, None);
        assert_eq!(
            p.flags.iter().copied().collect::<Vec<_>>(),
            vec![PaintingFlag::Sketch, PaintingFlag::Monochrome]
        );
    }

    #[test]
    fn write_then_parse_is_identity() {
        let m = manifest(
            "p1,a1,\"Ann, the elder\",Ukiyoe,,p1.ppm,sketch|monochrome\n\
             p2,a2,Bob,Cubism,1910,x/p2.ppm,\n",
        )
        .unwrap();
        assert_eq!(parse_manifest(&write_manifest(&m)).unwrap(), m);
    }

    #[test]
    fn histogram_single_ukiyoe() {
        let m = manifest("p1,a1,Hokusai,Ukiyoe,1830,p1.ppm,\n").unwrap();
        let h = class_histogram(&m);
        for (class, count) in h {
            assert_eq!(count, usize::from(class == StyleClass::Ukiyoe));
        }
        let empty = class_histogram(&DatasetManifest::default());
        assert_eq!(empty.len(), 9);
        assert!(empty.values().all(|&c| c == 0));
    }

    #[test]
    fn clean_by_flag_and_probe() {
        let m = manifest(
            "p1,a1,Ann,Baroque,1650,p1.ppm,sketch\n\
             p2,a1,Ann,Baroque,1650,p2.ppm,\n\
             p3,a1,Ann,Baroque,1650,p3.ppm,\n\
             p4,a2,Bob,Realism,1850,p4.ppm,\n",
        )
        .unwrap();
        let probe = FixedProbe(
            [
                ("p2.ppm".to_string(), Ok(0.0)),
                ("p3.ppm".to_string(), Ok(120.0)),
            ]
            .into_iter()
            .collect(),
        );
        let (cleaned, report) = clean(&m, Some(&probe));
        assert_eq!(cleaned.paintings.len(), 1);
        assert_eq!(cleaned.paintings[0].painting_id, "p3");
        assert_eq!(cleaned.artists.len(), 1);
        let rules: Vec<_> = report.exclusions.iter().map(|e| e.rule.clone()).collect();
        assert_eq!(rules[0], ExclusionRule::Flag(PaintingFlag::Sketch));
        assert_eq!(rules[1], ExclusionRule::MonochromeHeuristic { spread: 0.0 });
        assert!(matches!(rules[2], ExclusionRule::Unreadable { .. }));

        let (again, report2) = clean(&cleaned, Some(&probe));
        assert_eq!(again, cleaned);
        assert!(report2.exclusions.is_empty());
    }

    #[test]
    fn clean_without_probe_keeps_unflagged() {
        let m = manifest("p1,a1,Ann,Baroque,1650,p1.ppm,\n").unwrap();
        let (cleaned, report) = clean(&m, None);
        assert_eq!(cleaned, m);
        assert!(report.exclusions.is_empty());
    }

    #[test]
    fn split_ten_items() {
        let rows: String = (0..10)
            .map(|i| format!("p{i},a1,Ann,Baroque,1650,p{i}.ppm,\n"))
            .collect();
        let m = manifest(&rows).unwrap();
        for seed in 0..5 {
            let s = split(&m, 0.9, seed).unwrap();
            assert_eq!(s.count(Subset::Train), 9);
            assert_eq!(s.count(Subset::Test), 1);
            assert_eq!(s.assignment.len(), 10);
            assert_eq!(split(&m, 0.9, seed).unwrap(), s);
        }
    }

    #[test]
    fn split_rejects_bad_inputs() {
        let m = DatasetManifest::default();
        assert_eq!(split(&m, 0.9, 1), Err(SplitError::Empty));
        let one = manifest("p1,a1,Ann,Baroque,1650,p1.ppm,\n").unwrap();
        assert_eq!(split(&one, 1.0, 1), Err(SplitError::BadRatio(1.0)));
        assert_eq!(split(&one, 0.0, 1), Err(SplitError::BadRatio(0.0)));
    }

    #[test]
    fn train_count_rounds_half_up() {
        assert_eq!(train_count(24_110, 0.9), 21_699);
        assert_eq!(train_count(5, 0.5), 3);
        assert_eq!(train_count(10, 0.9), 9);
    }

    #[test]
    fn split_csv_round_trip() {
        let rows: String = (0..7)
            .map(|i| format!("p{i},a1,Ann,Baroque,1650,p{i}.ppm,\n"))
            .collect();
        let m = manifest(&rows).unwrap();
        let s = split(&m, 0.5, 3).unwrap();
        let back = SplitAssignment::from_csv(&s.to_csv()).unwrap();
        assert_eq!(back.assignment, s.assignment);
    }
}
