//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use artstyle::embed::{
    cosine_similarity, euclidean, read_embeddings_binary, write_embeddings_binary, ArtistProfile,
    EmbeddingRecord, EMBEDDING_DIM,
};
use artstyle::eval::{confusion_rates, evaluate, one_hot_prediction, top_misclassifications, Prediction};
use artstyle::fixtures::{color_dominant_dataset, reference_manifest_csv, REFERENCE_CLASS_COUNTS};
use artstyle::graph::{build_lineage, build_similarity_network, to_json, ArtistGraph};
use artstyle::manifest::{class_histogram, parse_manifest};
use artstyle::nnet::{
    decode_checkpoint, encode_checkpoint, gradient_check, init_params, train, Dataset, NetworkConfig,
    TrainConfig,
};
use artstyle::tsne::{
    conditional_affinities, kl_gradient, kl_of, knn_majority_rate, run_tsne, symmetrize, TsneConfig,
};
use artstyle::StyleClass;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let (mut checked, mut skipped) = (0usize, 0usize);
    let nets = 24;
    for seed in 0..nets {
        let blocks = rng.random_range(0..=2usize);
        let side = (1 << blocks) * rng.random_range(1..=2usize);
        let filters: Vec<usize> = (0..blocks).map(|_| rng.random_range(1..=3)).collect();
        let cfg = NetworkConfig::new(side, side, filters);
        match gradient_check(&cfg, seed, 1e-5) {
            Ok(r) => {
                worst = worst.max(r.max_relative_error);
                checked += r.params_checked;
                skipped += r.kinks_skipped;
            }
            Err(e) => return outcome(false, format!("net {seed}: {e}")),
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-4 && skipped * 100 <= checked && elapsed < Duration::from_secs(120),
        format!(
            "{nets} nets, {checked} entries, max relative error {worst:.2e} (< 1e-4), \
             {skipped} at activation kinks, {elapsed:.1?} (< 2 min)"
        ),
    )
}

fn toy_classification() -> Outcome {
    let start = Instant::now();
    let all = color_dominant_dataset(600, 32, 11);
    let idx: Vec<usize> = (0..600).collect();
    let train_set = Dataset::new(all.images.select(&idx[..480]), all.labels[..480].to_vec());
    let val_set = Dataset::new(all.images.select(&idx[480..]), all.labels[480..].to_vec());

    // empirical separation of class-mean channel intensities
    let px = 32 * 32;
    let mut sums = [[0.0; 3]; 3];
    let mut counts = [0usize; 3];
    for (i, &l) in all.labels.iter().enumerate() {
        let img = all.images.row(i);
        for c in 0..3 {
            sums[l][c] += img.iter().skip(c).step_by(3).sum::<f64>() / px as f64;
        }
        counts[l] += 1;
    }
    let separation = (0..3)
        .flat_map(|l| (0..3).filter(move |&c| c != l).map(move |c| (l, c)))
        .map(|(l, c)| (sums[l][l] - sums[l][c]) / counts[l] as f64)
        .fold(f64::INFINITY, f64::min);

    let cfg = TrainConfig {
        epochs: 20,
        seed: 1,
        ..TrainConfig::default()
    };
    let result = train(&train_set, &val_set, &cfg, &NetworkConfig::default());
    let elapsed = start.elapsed();
    match result {
        Ok(o) => {
            let best = o.history.iter().map(|r| r.val_accuracy).fold(0.0, f64::max);
            outcome(
                best >= 0.95 && separation >= 0.3 && elapsed < Duration::from_secs(300),
                format!(
                    "600 images, channel separation {separation:.3} (>= 0.3), best val accuracy {best:.4} (>= 0.95) in {} epochs, {elapsed:.1?} (< 5 min)",
                    o.history.len()
                ),
            )
        }
        Err(e) => outcome(false, e.to_string()),
    }
}

fn confusion_fixtures() -> Outcome {
    use StyleClass::*;
    // (true class, row total, wrong predictions, predicted-as)
    let cells = [
        (Realism, 401, 26, Baroque),
        (Cubism, 126, 7, AbstractArt),
        (EarlyRenaissance, 119, 13, HighRenaissance),
        (PopArt, 105, 11, AbstractArt),
        (Ukiyoe, 99, 5, AbstractArt),
    ];
    let mut preds = Vec::new();
    for (truth, total, wrong, as_class) in cells {
        for i in 0..total {
            let predicted = if i < wrong { as_class } else { truth };
            preds.push(one_hot_prediction(format!("{}-{i}", truth.name()), truth, predicted));
        }
    }
    let (_, matrix) = match evaluate(&preds) {
        Ok(v) => v,
        Err(e) => return outcome(false, e.to_string()),
    };
    let rates = confusion_rates(&matrix);
    let checks = [
        (rates[Realism.ordinal()][Baroque.ordinal()], 26.0 / 401.0),
        (rates[Cubism.ordinal()][AbstractArt.ordinal()], 7.0 / 126.0),
        (rates[EarlyRenaissance.ordinal()][HighRenaissance.ordinal()], 13.0 / 119.0),
        (rates[PopArt.ordinal()][AbstractArt.ordinal()], 11.0 / 105.0),
        (rates[Ukiyoe.ordinal()][Ukiyoe.ordinal()], 94.0 / 99.0),
    ];
    let max_err = checks.iter().map(|(got, want)| (got - want).abs()).fold(0.0, f64::max);
    let ukiyoe = rates[Ukiyoe.ordinal()][Ukiyoe.ordinal()];

    // the three inspected misclassifications, by descending confidence
    let probs = |hot: StyleClass, p: f64| {
        let mut v = [(1.0 - p) / 8.0; 9];
        v[hot.ordinal()] = p;
        v
    };
    let inspected = vec![
        Prediction::new("phoenix-and-sun", Ukiyoe, probs(AbstractArt, 0.52)).unwrap(),
        Prediction::new("gypsy-girl", Baroque, probs(Realism, 0.87)).unwrap(),
        Prediction::new("vasilyev-sketch", Realism, probs(Impressionism, 0.58)).unwrap(),
    ];
    let top: Vec<f64> = top_misclassifications(&inspected, 3).iter().map(|m| m.probability).collect();
    let order_ok = top == vec![0.87, 0.58, 0.52];

    outcome(
        max_err < 1e-12 && (ukiyoe - 0.95).abs() < 0.005 && order_ok,
        format!(
            "rates {:.4} {:.4} {:.4} {:.4}, Ukiyo-e diagonal {ukiyoe:.4}, max error {max_err:.1e} (< 1e-12), inspected order {top:?}",
            checks[0].0, checks[1].0, checks[2].0, checks[3].0
        ),
    )
}

fn tsne_gradient() -> Outcome {
    let mut worst: f64 = 0.0;
    for (k, n) in (3..=8).enumerate() {
        for dims in [2, 3] {
            let mut rng = ChaCha8Rng::seed_from_u64(k as u64 * 10 + dims as u64);
            let x: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let p = symmetrize(&conditional_affinities(&x, (n as f64 - 1.0) / 2.0).unwrap());
            let y: Vec<f64> = (0..n * dims).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = kl_gradient(&p, &y, dims).unwrap();
            let eps = 1e-6;
            let (mut diff, mut mag): (f64, f64) = (0.0, 0.0);
            for i in 0..y.len() {
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[i] += eps;
                ym[i] -= eps;
                let numeric = (kl_of(&p, &yp, dims) - kl_of(&p, &ym, dims)) / (2.0 * eps);
                diff = diff.max((numeric - g[i]).abs());
                mag = mag.max(numeric.abs()).max(g[i].abs());
            }
            worst = worst.max(diff / mag);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let x: Vec<Vec<f64>> = (0..100)
        .map(|_| (0..10).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut decreased = 0;
    for seed in 0..10 {
        let e = run_tsne(&x, &TsneConfig { seed, ..TsneConfig::default() }).unwrap();
        if e.final_kl() < e.first_post_exaggeration_kl().unwrap() {
            decreased += 1;
        }
    }
    outcome(
        worst < 1e-5 && decreased == 10,
        format!("max relative error {worst:.2e} over n = 3..8 (< 1e-5), KL decreased after exaggeration on {decreased}/10 seeds"),
    )
}

fn tsne_clustering() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let centres: Vec<Vec<f64>> = (0..3)
        .map(|c| (0..50).map(|k| if k == c { 10.0 } else { 0.0 }).collect())
        .collect();
    let mut x = Vec::new();
    let mut labels = Vec::new();
    for i in 0..150 {
        let c = i % 3;
        x.push(centres[c].iter().map(|m| m + noise.sample(&mut rng)).collect::<Vec<f64>>());
        labels.push(c);
    }
    let e = match run_tsne(&x, &TsneConfig::default()) {
        Ok(e) => e,
        Err(err) => return outcome(false, err.to_string()),
    };
    let rate = knn_majority_rate(&e, &labels, 10);
    let elapsed = start.elapsed();
    outcome(
        rate >= 0.9 && elapsed < Duration::from_secs(60),
        format!("10-NN same-cluster majority {:.1}% (>= 90%), {elapsed:.1?} (< 1 min)", rate * 100.0),
    )
}

fn distance_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst_e: f64 = 0.0;
    let mut worst_c: f64 = 0.0;
    let mut bitwise_failures = 0;
    for _ in 0..1000 {
        let a: Vec<f64> = (0..512).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..512).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut sq = 0.0;
        let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
        for i in 0..512 {
            sq += (b[i] - a[i]) * (b[i] - a[i]);
            dot += a[i] * b[i];
            na += a[i] * a[i];
            nb += b[i] * b[i];
        }
        worst_e = worst_e.max((euclidean(&a, &b).unwrap() - sq.sqrt()).abs());
        let cos = cosine_similarity(&a, &b).unwrap();
        worst_c = worst_c.max((cos - dot / (na.sqrt() * nb.sqrt())).abs());

        let k = 2f64.powi(rng.random_range(-20..=20));
        let ka: Vec<f64> = a.iter().map(|v| v * k).collect();
        if cosine_similarity(&ka, &b).unwrap().to_bits() != cos.to_bits()
            || cosine_similarity(&a, &ka).unwrap().to_bits() != 1f64.to_bits()
        {
            bitwise_failures += 1;
        }
    }
    outcome(
        worst_e < 1e-12 && worst_c < 1e-12 && bitwise_failures == 0,
        format!(
            "1000 pairs of 512-d: euclidean err {worst_e:.1e}, cosine err {worst_c:.1e} (< 1e-12), power-of-two scale bitwise failures {bitwise_failures}"
        ),
    )
}

fn oracle_edges(ps: &[ArtistProfile]) -> BTreeSet<(String, String)> {
    let mut edges = BTreeSet::new();
    for (i, a) in ps.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (j, b) in ps.iter().enumerate() {
            if i == j {
                continue;
            }
            let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
            for k in 0..a.mean_vector.len() {
                dot += a.mean_vector[k] * b.mean_vector[k];
                na += a.mean_vector[k] * a.mean_vector[k];
                nb += b.mean_vector[k] * b.mean_vector[k];
            }
            let s = (dot / (na * nb).sqrt()).clamp(-1.0, 1.0);
            let take = match best {
                None => true,
                Some((bj, bs)) => s > bs || (s == bs && b.artist_id < ps[bj].artist_id),
            };
            if take {
                best = Some((j, s));
            }
        }
        let other = &ps[best.unwrap().0].artist_id;
        let pair = if &a.artist_id < other {
            (a.artist_id.clone(), other.clone())
        } else {
            (other.clone(), a.artist_id.clone())
        };
        edges.insert(pair);
    }
    edges
}

fn is_acyclic(g: &ArtistGraph) -> bool {
    let mut indegree: BTreeMap<&str, usize> = g.nodes.iter().map(|n| (n.id.as_str(), 0)).collect();
    let mut out: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for e in &g.edges {
        *indegree.get_mut(e.dst.as_str()).unwrap() += 1;
        out.entry(&e.src).or_default().push(&e.dst);
    }
    let mut queue: VecDeque<&str> = indegree.iter().filter(|(_, &d)| d == 0).map(|(&n, _)| n).collect();
    let mut seen = 0;
    while let Some(n) = queue.pop_front() {
        seen += 1;
        for &m in out.get(n).map(Vec::as_slice).unwrap_or(&[]) {
            let d = indegree.get_mut(m).unwrap();
            *d -= 1;
            if *d == 0 {
                queue.push_back(m);
            }
        }
    }
    seen == g.nodes.len()
}

fn network_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut mismatches = 0;
    let mut year_violations = 0;
    let mut cycles = 0;
    for set in 0..200 {
        let n = rng.random_range(2..=50);
        // distinct years: a shuffled range
        let mut years: Vec<i32> = (1300..1300 + n as i32 * 3).step_by(3).collect();
        for i in (1..years.len()).rev() {
            years.swap(i, rng.random_range(0..=i));
        }
        let ps: Vec<ArtistProfile> = (0..n)
            .map(|i| ArtistProfile {
                artist_id: format!("s{set}-a{i:02}"),
                mean_vector: (0..16).map(|_| rng.random_range(-1.0..1.0)).collect(),
                mean_year: Some(f64::from(years[i])),
                n_paintings: 1,
                style: StyleClass::ALL[i % 9],
            })
            .collect();
        let g = build_similarity_network(&ps).unwrap().graph;
        let got: BTreeSet<_> = g.edges.iter().map(|e| (e.src.clone(), e.dst.clone())).collect();
        if got != oracle_edges(&ps) || got.len() != g.edges.len() {
            mismatches += 1;
        }
        let lineage = build_lineage(&ps).unwrap().graph;
        let year: BTreeMap<_, _> = ps.iter().map(|p| (p.artist_id.as_str(), p.mean_year.unwrap())).collect();
        year_violations += lineage
            .edges
            .iter()
            .filter(|e| year[e.src.as_str()] > year[e.dst.as_str()])
            .count();
        if !is_acyclic(&lineage) {
            cycles += 1;
        }
    }
    outcome(
        mismatches == 0 && year_violations == 0 && cycles == 0,
        format!("200 sets: {mismatches} oracle mismatches, {year_violations} backward lineage edges, {cycles} cyclic lineages"),
    )
}

fn manifest_accounting() -> Outcome {
    let m = match parse_manifest(reference_manifest_csv().as_bytes()) {
        Ok(m) => m,
        Err(e) => return outcome(false, e.to_string()),
    };
    let hist = class_histogram(&m);
    let classes = hist.values().filter(|&&n| n > 0).count();
    let mut cell_errors = Vec::new();
    for (class, images, artists) in REFERENCE_CLASS_COUNTS {
        let got_artists = m.artists.values().filter(|a| a.primary_style == class).count();
        if hist[&class] != images || got_artists != artists {
            cell_errors.push(class.name());
        }
    }
    outcome(
        m.len() == 24_110 && classes == 9 && m.artists.len() == 235 && cell_errors.is_empty(),
        format!(
            "{} paintings, {classes} classes, {} artists, mismatched cells {cell_errors:?}",
            m.len(),
            m.artists.len()
        ),
    )
}

fn determinism() -> Outcome {
    let mut problems = Vec::new();

    let data = color_dominant_dataset(60, 8, 4);
    let idx: Vec<usize> = (0..60).collect();
    let tr = Dataset::new(data.images.select(&idx[..45]), data.labels[..45].to_vec());
    let va = Dataset::new(data.images.select(&idx[45..]), data.labels[45..].to_vec());
    let net = NetworkConfig::new(8, 8, vec![4]);
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 8,
        seed: 7,
        ..TrainConfig::default()
    };
    let run = || {
        let o = train(&tr, &va, &cfg, &net).unwrap();
        (encode_checkpoint(&o.network.params), o.history_csv())
    };
    let (ckpt, hist) = run();
    if run() != (ckpt.clone(), hist) {
        problems.push("train rerun differs");
    }
    match decode_checkpoint(&ckpt) {
        Ok(p) if encode_checkpoint(&p) == ckpt => {}
        _ => problems.push("trained checkpoint does not re-encode identically"),
    }
    let fresh = init_params(&NetworkConfig::default(), 3).unwrap();
    if decode_checkpoint(&encode_checkpoint(&fresh)).ok().map(|p| p.tensors) != Some(fresh.tensors.clone()) {
        problems.push("checkpoint round trip not exact");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x: Vec<Vec<f64>> = (0..40)
        .map(|_| (0..12).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let ids: Vec<String> = (0..40).map(|i| format!("p{i}")).collect();
    let tcfg = TsneConfig {
        perplexity: 10.0,
        iterations: 300,
        seed: 2,
        ..TsneConfig::default()
    };
    let tsne_csv = || {
        let e = run_tsne(&x, &tcfg).unwrap();
        (e.to_csv("painting_id", &ids, &[]), e.kl_csv())
    };
    if tsne_csv() != tsne_csv() {
        problems.push("tsne rerun differs");
    }

    let profiles: Vec<ArtistProfile> = (0..30)
        .map(|i| ArtistProfile {
            artist_id: format!("a{i:02}"),
            mean_vector: (0..EMBEDDING_DIM).map(|_| rng.random_range(0.0..1.0)).collect(),
            mean_year: Some(1500.0 + i as f64),
            n_paintings: 2,
            style: StyleClass::ALL[i % 9],
        })
        .collect();
    let net_json = || to_json(&build_similarity_network(&profiles).unwrap().graph);
    if net_json() != net_json() {
        problems.push("network rerun differs");
    }

    let records: Vec<EmbeddingRecord> = (0..20)
        .map(|i| {
            let v = (0..EMBEDDING_DIM).map(|_| f64::from(rng.random::<f32>())).collect();
            EmbeddingRecord::new(format!("p{i}"), v).unwrap()
        })
        .collect();
    let bytes = write_embeddings_binary(&records);
    match read_embeddings_binary(&bytes) {
        Ok(back) if back == records && write_embeddings_binary(&back) == bytes => {}
        _ => problems.push("embedding binary round trip not exact"),
    }

    outcome(
        problems.is_empty(),
        if problems.is_empty() {
            "train/tsne/network reruns byte-identical; checkpoint and embedding binaries round-trip bit-exactly".to_string()
        } else {
            problems.join("; ")
        },
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("gradient correctness", gradient_correctness),
        ("toy classification", toy_classification),
        ("confusion fixtures", confusion_fixtures),
        ("t-sne gradient", tsne_gradient),
        ("t-sne clustering", tsne_clustering),
        ("distance oracles", distance_oracles),
        ("network oracle", network_oracle),
        ("manifest accounting", manifest_accounting),
        ("determinism and round-trips", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} [{}] {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        );
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
