//! Painting embeddings, per-artist profiles, and the Euclidean / cosine
//! metrics used to compare artists.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::manifest::{DatasetManifest, StyleClass};

/// Length of a painting embedding.
pub const EMBEDDING_DIM: usize = 512;

/// Magic bytes of the binary embedding format.
pub const EMBEDDING_MAGIC: &[u8; 4] = b"AEMB";

#[derive(Debug, Error, PartialEq)]
pub enum EmbedError {
    #[error("embedding {painting_id:?} has {found} values, expected {expected}")]
    WrongDimension {
        painting_id: String,
        expected: usize,
        found: usize,
    },
    #[error("embedding {0:?} contains a non-finite value")]
    NonFinite(String),
    #[error("vector lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("cosine similarity is undefined for a zero-norm vector{}", .0.as_deref().map(|id| format!(" ({id})")).unwrap_or_default())]
    ZeroNorm(Option<String>),
    #[error("painting {0:?} is not in the manifest")]
    UnknownPainting(String),
    #[error("need at least 2 profiles, got {0}")]
    TooFewProfiles(usize),
    #[error("embedding file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub painting_id: String,
    pub vector: Vec<f64>,
}

impl EmbeddingRecord {
    pub fn new(painting_id: impl Into<String>, vector: Vec<f64>) -> Result<Self, EmbedError> {
        let painting_id = painting_id.into();
        if vector.len() != EMBEDDING_DIM {
            return Err(EmbedError::WrongDimension {
                painting_id,
                expected: EMBEDDING_DIM,
                found: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite(painting_id));
        }
        Ok(EmbeddingRecord {
            painting_id,
            vector,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArtistProfile {
    pub artist_id: String,
    pub mean_vector: Vec<f64>,
    pub mean_year: Option<f64>,
    pub n_paintings: usize,
    pub style: StyleClass,
}

/// One profile per artist with at least one embedded painting, sorted by
/// artist id. Vectors are averaged in embedding order; years over the
/// paintings that have one.
pub fn aggregate_artists(
    embeddings: &[EmbeddingRecord],
    manifest: &DatasetManifest,
) -> Result<Vec<ArtistProfile>, EmbedError> {
    let index = manifest.index_by_id();
    struct Acc {
        sum: Vec<f64>,
        n: usize,
        year_sum: f64,
        years: usize,
    }
    let mut acc: BTreeMap<&str, Acc> = BTreeMap::new();
    for e in embeddings {
        let &i = index
            .get(e.painting_id.as_str())
            .ok_or_else(|| EmbedError::UnknownPainting(e.painting_id.clone()))?;
        let painting = &manifest.paintings[i];
        let a = acc.entry(painting.artist_id.as_str()).or_insert_with(|| Acc {
            sum: vec![0.0; e.vector.len()],
            n: 0,
            year_sum: 0.0,
            years: 0,
        });
        if a.sum.len() != e.vector.len() {
            return Err(EmbedError::LengthMismatch(a.sum.len(), e.vector.len()));
        }
        for (s, v) in a.sum.iter_mut().zip(&e.vector) {
            *s += v;
        }
        a.n += 1;
        if let Some(y) = painting.year {
            a.year_sum += f64::from(y);
            a.years += 1;
        }
    }
    Ok(acc
        .into_iter()
        .map(|(artist_id, a)| {
            let style = manifest
                .artists
                .get(artist_id)
                .map(|r| r.primary_style)
                .unwrap_or_else(|| {
                    manifest
                        .paintings
                        .iter()
                        .find(|p| p.artist_id == artist_id)
                        .map(|p| p.style)
                        .expect("artist came from a manifest painting")
                });
            ArtistProfile {
                artist_id: artist_id.to_string(),
                mean_vector: a.sum.iter().map(|s| s / a.n as f64).collect(),
                mean_year: (a.years > 0).then(|| a.year_sum / a.years as f64),
                n_paintings: a.n,
                style,
            }
        })
        .collect())
}

/// `sqrt(sum (q_i - p_i)^2)`.
pub fn euclidean(p: &[f64], q: &[f64]) -> Result<f64, EmbedError> {
    if p.len() != q.len() {
        return Err(EmbedError::LengthMismatch(p.len(), q.len()));
    }
    Ok(p.iter()
        .zip(q)
        .map(|(a, b)| (b - a) * (b - a))
        .sum::<f64>()
        .sqrt())
}

/// `(A . B) / (|A| |B|)`, clamped to [-1, 1]. Zero-norm inputs are an error.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, EmbedError> {
    if a.len() != b.len() {
        return Err(EmbedError::LengthMismatch(a.len(), b.len()));
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(EmbedError::ZeroNorm(None));
    }
    // sqrt(na * nb) makes power-of-two rescaling exact; fall back to the
    // separate roots when the product leaves the normal range
    let product = na * nb;
    let denom = if product.is_normal() {
        product.sqrt()
    } else {
        na.sqrt() * nb.sqrt()
    };
    Ok((dot / denom).clamp(-1.0, 1.0))
}

/// `1 - cosine_similarity`, so that minimizing distance maximizes similarity.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64, EmbedError> {
    cosine_similarity(a, b).map(|s| 1.0 - s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Euclidean,
    Cosine,
}

impl Metric {
    pub fn eval(self, a: &[f64], b: &[f64]) -> Result<f64, EmbedError> {
        match self {
            Metric::Euclidean => euclidean(a, b),
            Metric::Cosine => cosine_similarity(a, b),
        }
    }

    fn identity(self) -> f64 {
        match self {
            Metric::Euclidean => 0.0,
            Metric::Cosine => 1.0,
        }
    }
}

/// Symmetric `n x n` matrix of `metric` over profile mean vectors; each
/// unordered pair is computed once and mirrored.
pub fn pairwise(profiles: &[ArtistProfile], metric: Metric) -> Result<Vec<Vec<f64>>, EmbedError> {
    let n = profiles.len();
    if n < 2 {
        return Err(EmbedError::TooFewProfiles(n));
    }
    if metric == Metric::Cosine {
        if let Some(p) = profiles.iter().find(|p| p.mean_vector.iter().all(|&v| v == 0.0)) {
            return Err(EmbedError::ZeroNorm(Some(p.artist_id.clone())));
        }
    }
    let mut m = vec![vec![metric.identity(); n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = metric.eval(&profiles[i].mean_vector, &profiles[j].mean_vector)?;
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    Ok(m)
}

/// `painting_id,f0,...,f{dim-1}` CSV. Values use the shortest decimal form
/// that reads back to the same `f64`.
pub fn write_embeddings_csv(records: &[EmbeddingRecord]) -> String {
    let dim = records.first().map(|r| r.vector.len()).unwrap_or(EMBEDDING_DIM);
    let mut out = String::from("painting_id");
    for i in 0..dim {
        out.push_str(&format!(",f{i}"));
    }
    out.push('\n');
    for r in records {
        out.push_str(&csv_field(&r.painting_id));
        for v in &r.vector {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Reads an id column followed by any number of numeric columns.
pub fn read_feature_csv(bytes: &[u8]) -> Result<Vec<(String, Vec<f64>)>, EmbedError> {
    let mut reader = csv::Reader::from_reader(bytes);
    let width = reader
        .headers()
        .map_err(|e| EmbedError::Format(e.to_string()))?
        .len();
    if width < 2 {
        return Err(EmbedError::Format("need an id column and at least one feature".into()));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| EmbedError::Format(e.to_string()))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != width {
            return Err(EmbedError::Format(format!(
                "line {line}: {} fields, expected {width}",
                record.len()
            )));
        }
        let values = record
            .iter()
            .skip(1)
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| EmbedError::Format(format!("line {line}: bad number {f:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push((record[0].to_string(), values));
    }
    Ok(rows)
}

/// Reads the `painting_id,f0,...,f511` CSV.
pub fn read_embeddings_csv(bytes: &[u8]) -> Result<Vec<EmbeddingRecord>, EmbedError> {
    let mut reader = csv::Reader::from_reader(bytes);
    let header = reader
        .headers()
        .map_err(|e| EmbedError::Format(e.to_string()))?
        .clone();
    let expected_ok = header.len() == EMBEDDING_DIM + 1
        && &header[0] == "painting_id"
        && header
            .iter()
            .skip(1)
            .enumerate()
            .all(|(i, h)| h == format!("f{i}"));
    if !expected_ok {
        return Err(EmbedError::Format(format!(
            "header must be painting_id,f0,...,f{}",
            EMBEDDING_DIM - 1
        )));
    }
    read_feature_csv(bytes)?
        .into_iter()
        .map(|(id, v)| EmbeddingRecord::new(id, v))
        .collect()
}

/// `AEMB`, u32 count, u32 dim, then per record u32 id length, UTF-8 id and
/// `f32[dim]`, all little-endian.
pub fn write_embeddings_binary(records: &[EmbeddingRecord]) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + records.len() * (EMBEDDING_DIM * 4 + 16));
    out.extend_from_slice(EMBEDDING_MAGIC);
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    out.extend_from_slice(&(EMBEDDING_DIM as u32).to_le_bytes());
    for r in records {
        out.extend_from_slice(&(r.painting_id.len() as u32).to_le_bytes());
        out.extend_from_slice(r.painting_id.as_bytes());
        for &v in &r.vector {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn read_embeddings_binary(bytes: &[u8]) -> Result<Vec<EmbeddingRecord>, EmbedError> {
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8], EmbedError> {
        let end = pos
            .checked_add(n)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| EmbedError::Format(format!("truncated at byte {pos}")))?;
        let s = &bytes[pos..end];
        pos = end;
        Ok(s)
    };
    let u32_at = |b: &[u8]| u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize;

    if take(4)? != EMBEDDING_MAGIC {
        return Err(EmbedError::Format("bad magic, expected AEMB".into()));
    }
    let count = u32_at(take(4)?);
    let dim = u32_at(take(4)?);
    if dim != EMBEDDING_DIM {
        return Err(EmbedError::Format(format!("dimension {dim}, expected {EMBEDDING_DIM}")));
    }
    let mut records = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let id_len = u32_at(take(4)?);
        let id = std::str::from_utf8(take(id_len)?)
            .map_err(|e| EmbedError::Format(format!("painting id: {e}")))?
            .to_string();
        let raw = take(dim * 4)?;
        let vector = raw
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        records.push(EmbeddingRecord::new(id, vector)?);
    }
    if pos != bytes.len() {
        return Err(EmbedError::Format(format!("{} trailing bytes", bytes.len() - pos)));
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::parse_manifest;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(i: usize) -> Vec<f64> {
        let mut v = vec![0.0; EMBEDDING_DIM];
        v[i] = 1.0;
        v
    }

    fn manifest() -> DatasetManifest {
        parse_manifest(
            b"painting_id,artist_id,artist_name,style,year,image_path,flags\n\
              p1,leo,Leonardo,HighRenaissance,1503,p1.ppm,\n\
              p2,leo,Leonardo,HighRenaissance,,p2.ppm,\n\
              p3,cim,Cimabue,EarlyRenaissance,,p3.ppm,\n",
        )
        .unwrap()
    }

    #[test]
    fn two_unit_vectors_average() {
        let m = manifest();
        let e = vec![
            EmbeddingRecord::new("p1", unit(0)).unwrap(),
            EmbeddingRecord::new("p2", unit(1)).unwrap(),
            EmbeddingRecord::new("p3", unit(2)).unwrap(),
        ];
        let profiles = aggregate_artists(&e, &m).unwrap();
        assert_eq!(profiles.len(), 2);
        assert_eq!(profiles[0].artist_id, "cim");
        assert_eq!(profiles[0].mean_year, None);
        let leo = &profiles[1];
        assert_eq!(leo.n_paintings, 2);
        assert_eq!(leo.mean_year, Some(1503.0));
        assert_eq!(leo.style, StyleClass::HighRenaissance);
        assert_eq!(&leo.mean_vector[..3], &[0.5, 0.5, 0.0]);
    }

    #[test]
    fn unknown_painting_rejected() {
        let e = vec![EmbeddingRecord::new("nope", unit(0)).unwrap()];
        assert_eq!(
            aggregate_artists(&e, &manifest()),
            Err(EmbedError::UnknownPainting("nope".into()))
        );
    }

    #[test]
    fn record_dimension_enforced() {
        assert!(matches!(
            EmbeddingRecord::new("x", vec![0.0; 3]),
            Err(EmbedError::WrongDimension { found: 3, .. })
        ));
        let mut v = unit(0);
        v[4] = f64::NAN;
        assert!(EmbeddingRecord::new("x", v).is_err());
    }

    #[test]
    fn euclidean_cases() {
        assert_eq!(euclidean(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(euclidean(&[1.5, -2.0], &[1.5, -2.0]).unwrap(), 0.0);
        assert!(euclidean(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn cosine_cases() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let a = [0.3, -1.2, 2.5];
        assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        let a3: Vec<f64> = a.iter().map(|v| v * 3.0).collect();
        assert!((cosine_similarity(&a, &a3).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]),
            Err(EmbedError::ZeroNorm(None))
        );
        assert!((cosine_distance(&[1.0, 0.0], &[0.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
    }

    fn profile(id: &str, v: Vec<f64>) -> ArtistProfile {
        ArtistProfile {
            artist_id: id.into(),
            mean_vector: v,
            mean_year: None,
            n_paintings: 1,
            style: StyleClass::Baroque,
        }
    }

    #[test]
    fn pairwise_identical_profiles() {
        let ps = vec![profile("a", vec![1.0, 2.0]), profile("b", vec![1.0, 2.0])];
        let m = pairwise(&ps, Metric::Cosine).unwrap();
        for row in &m {
            for &v in row {
                assert!((v - 1.0).abs() < 1e-15);
            }
        }
        let e = pairwise(&ps, Metric::Euclidean).unwrap();
        assert_eq!(e, vec![vec![0.0, 0.0], vec![0.0, 0.0]]);
    }

    #[test]
    fn pairwise_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ps: Vec<_> = (0..3)
            .map(|i| profile(&format!("a{i}"), (0..16).map(|_| rng.random_range(-1.0..1.0)).collect()))
            .collect();
        for metric in [Metric::Euclidean, Metric::Cosine] {
            let m = pairwise(&ps, metric).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    assert_eq!(m[i][j], m[j][i]);
                    if i == j {
                        continue;
                    }
                    let (a, b) = (&ps[i].mean_vector, &ps[j].mean_vector);
                    let oracle = match metric {
                        Metric::Euclidean => {
                            let mut s = 0.0;
                            for k in 0..a.len() {
                                s += (a[k] - b[k]).powi(2);
                            }
                            s.sqrt()
                        }
                        Metric::Cosine => {
                            let (mut d, mut x, mut y) = (0.0, 0.0, 0.0);
                            for k in 0..a.len() {
                                d += a[k] * b[k];
                                x += a[k] * a[k];
                                y += b[k] * b[k];
                            }
                            d / (x.sqrt() * y.sqrt())
                        }
                    };
                    assert!((m[i][j] - oracle).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn pairwise_errors() {
        let one = vec![profile("a", vec![1.0])];
        assert_eq!(pairwise(&one, Metric::Cosine), Err(EmbedError::TooFewProfiles(1)));
        let zero = vec![profile("a", vec![1.0]), profile("z", vec![0.0])];
        assert_eq!(
            pairwise(&zero, Metric::Cosine),
            Err(EmbedError::ZeroNorm(Some("z".into())))
        );
        assert!(pairwise(&zero, Metric::Euclidean).is_ok());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let records: Vec<_> = (0..3)
            .map(|i| {
                EmbeddingRecord::new(
                    format!("p,{i}"),
                    (0..EMBEDDING_DIM).map(|_| rng.random::<f64>()).collect(),
                )
                .unwrap()
            })
            .collect();
        let csv = write_embeddings_csv(&records);
        assert!(csv.starts_with("painting_id,f0,f1,"));
        assert_eq!(read_embeddings_csv(csv.as_bytes()).unwrap(), records);
    }

    #[test]
    fn binary_rejects_wrong_dimension() {
        let mut bytes = EMBEDDING_MAGIC.to_vec();
        bytes.extend_from_slice(&0u32.to_le_bytes());
        bytes.extend_from_slice(&9u32.to_le_bytes());
        assert!(read_embeddings_binary(&bytes).is_err());
        let empty = write_embeddings_binary(&[]);
        assert_eq!(read_embeddings_binary(&empty).unwrap(), vec![]);
    }
}
