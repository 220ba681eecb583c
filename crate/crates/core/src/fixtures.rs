//! Reference dataset shapes and synthetic data generators used by tests,
//! the acceptance suite and demos.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::manifest::StyleClass;
use crate::nnet::{Dataset, Tensor};

/// Images and artists per style class for the curated reference collection,
/// in class order.
pub const REFERENCE_CLASS_COUNTS: [(StyleClass, usize, usize); 9] = [
    (StyleClass::EarlyRenaissance, 1188, 21),
    (StyleClass::HighRenaissance, 1442, 25),
    (StyleClass::Baroque, 3462, 50),
    (StyleClass::Realism, 4004, 33),
    (StyleClass::Impressionism, 7788, 20),
    (StyleClass::Cubism, 1258, 14),
    (StyleClass::AbstractArt, 2927, 37),
    (StyleClass::PopArt, 1050, 24),
    (StyleClass::Ukiyoe, 991, 11),
];

fn class_years(class: StyleClass) -> (i32, i32) {
    match class {
        StyleClass::EarlyRenaissance => (1280, 1500),
        StyleClass::HighRenaissance => (1490, 1560),
        StyleClass::Baroque => (1590, 1730),
        StyleClass::Realism => (1830, 1900),
        StyleClass::Impressionism => (1860, 1920),
        StyleClass::Cubism => (1907, 1940),
        StyleClass::AbstractArt => (1910, 2000),
        StyleClass::PopArt => (1950, 2010),
        StyleClass::Ukiyoe => (1650, 1870),
    }
}

/// Manifest CSV with the reference class and artist counts. Paintings are
/// dealt round-robin to each class's artists; years are spread over the
/// class's period.
pub fn reference_manifest_csv() -> String {
    let mut out = String::from("painting_id,artist_id,artist_name,style,year,image_path,flags\n");
    for (class, images, artists) in REFERENCE_CLASS_COUNTS {
        let (lo, hi) = class_years(class);
        for i in 0..images {
            let artist = i % artists;
            let year = lo + ((i * 7 + artist * 13) % ((hi - lo) as usize + 1)) as i32;
            writeln!(
                out,
                "{c}-{i:05},{c}-a{artist:02},{d} artist {artist},{c},{year},{c}/{i:05}.ppm,",
                c = class.name(),
                d = class.display_name(),
            )
            .expect("writing to a String cannot fail");
        }
    }
    out
}

/// Three-class images whose class is the dominant colour channel.
///
/// Class `k` draws channel `k` uniformly around `0.675` and the other two
/// around `0.325` (separation 0.35 between channel means), with independent
/// per-pixel noise of half-width `0.15` so the classes are only separable
/// through colour statistics.
pub fn color_dominant_dataset(n: usize, side: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * side * side * 3);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % 3;
        labels.push(label);
        let base: [f64; 3] = std::array::from_fn(|c| {
            let mean = if c == label { 0.675 } else { 0.325 };
            mean + rng.random_range(-0.05..0.05)
        });
        for _ in 0..side * side {
            for b in base {
                let v: f64 = b + rng.random_range(-0.15..0.15);
                data.push(v.clamp(0.0, 1.0));
            }
        }
    }
    Dataset::new(Tensor::from_vec(vec![n, side, side, 3], data), labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::{class_histogram, parse_manifest};

    #[test]
    fn reference_totals() {
        let images: usize = REFERENCE_CLASS_COUNTS.iter().map(|c| c.1).sum();
        let artists: usize = REFERENCE_CLASS_COUNTS.iter().map(|c| c.2).sum();
        assert_eq!(images, 24_110);
        assert_eq!(artists, 235);
    }

    #[test]
    fn reference_manifest_parses() {
        let m = parse_manifest(reference_manifest_csv().as_bytes()).unwrap();
        let h = class_histogram(&m);
        for (class, images, _) in REFERENCE_CLASS_COUNTS {
            assert_eq!(h[&class], images);
        }
    }

    #[test]
    fn color_dataset_channel_means_separate() {
        let d = color_dominant_dataset(30, 8, 1);
        let px = 8 * 8;
        for (i, &label) in d.labels.iter().enumerate() {
            let img = &d.images.data()[i * px * 3..(i + 1) * px * 3];
            let mean = |c: usize| img.iter().skip(c).step_by(3).sum::<f64>() / px as f64;
            let dom = mean(label);
            for c in (0..3).filter(|&c| c != label) {
                assert!(dom - mean(c) >= 0.15, "weak separation in sample {i}");
            }
        }
    }
}
