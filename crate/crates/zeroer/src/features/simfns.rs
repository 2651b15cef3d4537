//! The typed similarity-function bank.
//!
//! Every function is symmetric in its two arguments and returns a value in
//! [0, 1]. String arguments arrive already canonicalized (trimmed,
//! case-folded) from ingest.

use serde::{Deserialize, Serialize};

use crate::blocking::fnv1a64;
use crate::ingest::AttrType;

/// One similarity-function descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimFn {
    ExactMatch,
    QgramJaccard,
    QgramCosine,
    LevenshteinSim,
    JaroWinkler,
    WordJaccard,
    WordCosine,
    WordContainment,
    NumericExact,
    AbsDiffSim,
    RelDiffSim,
}

impl SimFn {
    pub fn name(&self) -> &'static str {
        match self {
            SimFn::ExactMatch => "exact_match",
            SimFn::QgramJaccard => "qgram_jaccard",
            SimFn::QgramCosine => "qgram_cosine",
            SimFn::LevenshteinSim => "levenshtein_sim",
            SimFn::JaroWinkler => "jaro_winkler",
            SimFn::WordJaccard => "word_jaccard",
            SimFn::WordCosine => "word_cosine",
            SimFn::WordContainment => "word_containment",
            SimFn::NumericExact => "numeric_exact",
            SimFn::AbsDiffSim => "abs_diff_sim",
            SimFn::RelDiffSim => "rel_diff_sim",
        }
    }
}

/// Similarity functions applied per attribute type tag.
pub fn bank_for(tag: AttrType) -> &'static [SimFn] {
    match tag {
        AttrType::ShortString => &[
            SimFn::ExactMatch,
            SimFn::QgramJaccard,
            SimFn::QgramCosine,
            SimFn::LevenshteinSim,
            SimFn::JaroWinkler,
        ],
        AttrType::LongString => &[
            SimFn::WordJaccard,
            SimFn::WordCosine,
            SimFn::QgramJaccard,
            SimFn::WordContainment,
        ],
        AttrType::Numeric => &[SimFn::NumericExact, SimFn::AbsDiffSim, SimFn::RelDiffSim],
        AttrType::Categorical => &[SimFn::ExactMatch],
    }
}

pub const QGRAM_SIZE: usize = 3;

/// A cell value prepared once per (row, attribute) so the pair loop only
/// does set intersections. Gram and token sets are stored as sorted hashes.
#[derive(Debug, Clone, Default)]
pub struct PreparedValue {
    pub text: String,
    pub grams: Vec<u64>,
    pub tokens: Vec<u64>,
    pub number: Option<f64>,
}

pub fn prepare(value: &str) -> PreparedValue {
    PreparedValue {
        text: value.to_string(),
        grams: hashed_qgrams(value, QGRAM_SIZE),
        tokens: hashed_tokens(value),
        number: value.parse::<f64>().ok().filter(|x| x.is_finite()),
    }
}

fn hashed_qgrams(s: &str, q: usize) -> Vec<u64> {
    let chars: Vec<char> = s.chars().collect();
    let mut out: Vec<u64> = if chars.is_empty() {
        Vec::new()
    } else if chars.len() < q {
        vec![fnv1a64(s.as_bytes(), 1)]
    } else {
        chars
            .windows(q)
            .map(|w| {
                let g: String = w.iter().collect();
                fnv1a64(g.as_bytes(), 1)
            })
            .collect()
    };
    out.sort_unstable();
    out.dedup();
    out
}

fn hashed_tokens(s: &str) -> Vec<u64> {
    let mut out: Vec<u64> = s
        .split_whitespace()
        .map(|t| fnv1a64(t.as_bytes(), 2))
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// |A ∩ B| for two sorted deduplicated slices.
fn intersection_size(a: &[u64], b: &[u64]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

fn set_jaccard(a: &[u64], b: &[u64]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = intersection_size(a, b);
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

fn set_cosine(a: &[u64], b: &[u64]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    intersection_size(a, b) as f64 / ((a.len() as f64) * (b.len() as f64)).sqrt()
}

fn set_containment(a: &[u64], b: &[u64]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    intersection_size(a, b) as f64 / a.len().min(b.len()) as f64
}

fn levenshtein_sim(a: &str, b: &str) -> f64 {
    let la = a.chars().count();
    let lb = b.chars().count();
    if la == 0 && lb == 0 {
        return 1.0;
    }
    let dist = strsim::levenshtein(a, b);
    1.0 - dist as f64 / la.max(lb) as f64
}

/// Evaluate one similarity function on a prepared pair. Returns `None`
/// (a missing cell) when a numeric function meets an unparseable value.
pub fn evaluate(f: SimFn, a: &PreparedValue, b: &PreparedValue) -> Option<f64> {
    let v = match f {
        SimFn::ExactMatch => {
            if a.text == b.text {
                1.0
            } else {
                0.0
            }
        }
        SimFn::QgramJaccard => set_jaccard(&a.grams, &b.grams),
        SimFn::QgramCosine => set_cosine(&a.grams, &b.grams),
        SimFn::LevenshteinSim => levenshtein_sim(&a.text, &b.text),
        SimFn::JaroWinkler => strsim::jaro_winkler(&a.text, &b.text),
        SimFn::WordJaccard => set_jaccard(&a.tokens, &b.tokens),
        SimFn::WordCosine => set_cosine(&a.tokens, &b.tokens),
        SimFn::WordContainment => set_containment(&a.tokens, &b.tokens),
        SimFn::NumericExact => {
            let (x, y) = (a.number?, b.number?);
            if x == y {
                1.0
            } else {
                0.0
            }
        }
        SimFn::AbsDiffSim => {
            let (x, y) = (a.number?, b.number?);
            1.0 / (1.0 + (x - y).abs())
        }
        SimFn::RelDiffSim => {
            let (x, y) = (a.number?, b.number?);
            if x == y {
                1.0
            } else {
                (1.0 - (x - y).abs() / x.abs().max(y.abs())).max(0.0)
            }
        }
    };
    Some(v.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn ev(f: SimFn, a: &str, b: &str) -> f64 {
        evaluate(f, &prepare(a), &prepare(b)).unwrap()
    }

    #[test]
    fn identical_strings_hit_one() {
        for f in [
            SimFn::ExactMatch,
            SimFn::QgramJaccard,
            SimFn::QgramCosine,
            SimFn::LevenshteinSim,
            SimFn::JaroWinkler,
            SimFn::WordJaccard,
            SimFn::WordCosine,
            SimFn::WordContainment,
        ] {
            assert_eq!(ev(f, "casa del mar", "casa del mar"), 1.0, "{f:?}");
        }
    }

    #[test]
    fn levenshtein_one_third() {
        // "abc" vs "abd": one substitution over max length 3
        assert_abs_diff_eq!(
            ev(SimFn::LevenshteinSim, "abc", "abd"),
            1.0 - 1.0 / 3.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn numeric_similarities() {
        assert_eq!(ev(SimFn::NumericExact, "4.0", "4"), 1.0);
        assert_abs_diff_eq!(ev(SimFn::AbsDiffSim, "3", "5"), 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ev(SimFn::RelDiffSim, "8", "10"), 0.8, epsilon = 1e-12);
        assert_eq!(ev(SimFn::RelDiffSim, "0", "0"), 1.0);
        // sign flip clamps at zero
        assert_eq!(ev(SimFn::RelDiffSim, "-1", "1"), 0.0);
    }

    #[test]
    fn unparseable_numeric_is_missing() {
        assert!(evaluate(SimFn::AbsDiffSim, &prepare("12"), &prepare("n/a")).is_none());
    }

    #[test]
    fn qgram_jaccard_hand_value() {
        // grams(abcd) = {abc, bcd}; grams(abce) = {abc, bce}; |I|=1 |U|=3
        assert_abs_diff_eq!(
            ev(SimFn::QgramJaccard, "abcd", "abce"),
            1.0 / 3.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn containment_of_substring_tokens() {
        assert_eq!(
            ev(SimFn::WordContainment, "deep learning for er", "deep learning"),
            1.0
        );
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(a in "[a-c ]{0,12}", b in "[a-c ]{0,12}") {
            let pa = prepare(&a);
            let pb = prepare(&b);
            for f in [
                SimFn::ExactMatch,
                SimFn::QgramJaccard,
                SimFn::QgramCosine,
                SimFn::LevenshteinSim,
                SimFn::JaroWinkler,
                SimFn::WordJaccard,
                SimFn::WordCosine,
                SimFn::WordContainment,
            ] {
                let ab = evaluate(f, &pa, &pb).unwrap();
                let ba = evaluate(f, &pb, &pa).unwrap();
                prop_assert!((ab - ba).abs() < 1e-12);
                prop_assert!((0.0..=1.0).contains(&ab));
            }
        }

        #[test]
        fn numeric_symmetric_and_bounded(x in -1e4f64..1e4, y in -1e4f64..1e4) {
            let pa = prepare(&format!("{x}"));
            let pb = prepare(&format!("{y}"));
            for f in [SimFn::NumericExact, SimFn::AbsDiffSim, SimFn::RelDiffSim] {
                let ab = evaluate(f, &pa, &pb).unwrap();
                let ba = evaluate(f, &pb, &pa).unwrap();
                prop_assert!((ab - ba).abs() < 1e-12);
                prop_assert!((0.0..=1.0).contains(&ab));
            }
        }
    }
}
