//! Property suites: round trips, oracle equivalences, and the algebraic
//! invariants of the metrics.

mod common;

use proptest::prelude::*;

use xfid_core::corpus::{
    load_corpus, save_corpus, stratified_sample, CorpusSlice, Format, Labels, Platform, Post,
};
use xfid_core::embed::{load_matrix, save_matrix, EmbeddingMatrix};
use xfid_core::orchestrator::{artifact_checks, ArtifactViolation};
use xfid_core::parity::{logistic_gradient, logistic_loss, roc_auc, student_t_cdf};
use xfid_core::similarity::{linear_cka, pairwise_cosine};

fn arb_text() -> impl Strategy<Value = String> {
    proptest::collection::vec(
        prop_oneof![
            proptest::char::range('a', 'z'),
            proptest::char::range('A', 'Z'),
            proptest::char::range('0', '9'),
            prop_oneof![
                Just(' '),
                Just(','),
                Just('"'),
                Just('\''),
                Just('\n'),
                Just('ż'),
                Just('ó'),
                Just('ł'),
                Just('#'),
                Just('@'),
            ],
        ],
        1..40,
    )
    .prop_map(|chars| chars.into_iter().collect())
}

prop_compose! {
    fn arb_post_parts()(
        text in arb_text(),
        tgt in proptest::option::of(arb_text()),
        platform in prop_oneof![Just(Platform::Reddit), Just(Platform::Twitter)],
        label_bits in proptest::collection::vec(any::<bool>(), 5),
        non_moral in any::<bool>(),
        subcorpus in "[a-z]{1,6}",
    ) -> (String, Option<String>, Platform, Vec<bool>, bool, String) {
        (text, tgt, platform, label_bits, non_moral, subcorpus)
    }
}

fn arb_slice() -> impl Strategy<Value = CorpusSlice> {
    proptest::collection::vec(arb_post_parts(), 1..25).prop_map(|parts| {
        let posts = parts
            .into_iter()
            .enumerate()
            .map(|(i, (text, tgt, platform, bits, non_moral, subcorpus))| {
                let mut labels = Labels::default();
                if !non_moral {
                    for (f, &bit) in xfid_core::corpus::Foundation::ALL.iter().zip(&bits) {
                        labels.set(*f, bit);
                    }
                }
                Post {
                    id: format!("p{i}"),
                    text_src: text,
                    text_tgt: tgt,
                    corpus: "P".into(),
                    subcorpus,
                    platform,
                    labels,
                    non_moral,
                }
            })
            .collect();
        CorpusSlice::new("prop", posts)
    })
}

proptest! {
    #[test]
    fn corpus_round_trips_in_both_formats(slice in arb_slice()) {
        let dir = tempfile::tempdir().unwrap();
        for (format, name) in [(Format::Jsonl, "c.jsonl"), (Format::Csv, "c.csv")] {
            let path = dir.path().join(name);
            save_corpus(&slice, &path, format).unwrap();
            let loaded = load_corpus(&path, format).unwrap();
            prop_assert_eq!(&loaded.posts, &slice.posts);
        }
    }
}

fn arb_matrix() -> impl Strategy<Value = EmbeddingMatrix> {
    (1usize..5, 1usize..10)
        .prop_flat_map(|(dim, n)| {
            proptest::collection::vec(
                any::<u32>().prop_map(f32::from_bits).prop_filter("finite", |v| v.is_finite()),
                n * dim,
            )
            .prop_map(move |data| {
                let ids = (0..n).map(|i| format!("r{i}")).collect();
                EmbeddingMatrix::new(ids, data, dim).unwrap()
            })
        })
}

proptest! {
    #[test]
    fn matrix_round_trip_is_bit_exact(m in arb_matrix()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.emb");
        save_matrix(&path, &m).unwrap();
        let loaded = load_matrix(&path).unwrap();
        prop_assert_eq!(loaded.ids(), m.ids());
        let a: Vec<u32> = m.data().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u32> = loaded.data().iter().map(|v| v.to_bits()).collect();
        prop_assert_eq!(a, b);
    }
}

/// O(m*n) pairwise comparison, the independent AUC definition.
fn brute_force_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0f64;
    let mut pairs = 0.0f64;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

fn arb_auc_instance() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..50)
        .prop_flat_map(|n| {
            (
                proptest::collection::vec((0u8..=10).prop_map(|s| s as f64 / 10.0), n),
                proptest::collection::vec(any::<bool>(), n),
            )
        })
        .prop_filter("both classes", |(_, labels)| {
            labels.iter().any(|&l| l) && labels.iter().any(|&l| !l)
        })
}

proptest! {
    #[test]
    fn rank_auc_equals_brute_force((scores, labels) in arb_auc_instance()) {
        let rank = roc_auc(&scores, &labels).unwrap();
        let brute = brute_force_auc(&scores, &labels);
        prop_assert!((rank - brute).abs() <= 1e-12, "rank {rank} vs brute {brute}");
    }

    #[test]
    fn auc_complement_under_label_negation((scores, labels) in arb_auc_instance()) {
        let auc = roc_auc(&scores, &labels).unwrap();
        let negated: Vec<bool> = labels.iter().map(|&l| !l).collect();
        let flipped = roc_auc(&scores, &negated).unwrap();
        prop_assert!((auc + flipped - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn auc_invariant_under_increasing_transforms((scores, labels) in arb_auc_instance()) {
        let auc = roc_auc(&scores, &labels).unwrap();
        let affine: Vec<f64> = scores.iter().map(|s| 3.0 * s + 1.0).collect();
        let expo: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
        prop_assert_eq!(auc, roc_auc(&affine, &labels).unwrap());
        prop_assert_eq!(auc, roc_auc(&expo, &labels).unwrap());
    }
}

prop_compose! {
    fn arb_logistic_point()(
        m in 2usize..10,
        d in 1usize..4,
    )(
        rows in proptest::collection::vec(
            proptest::collection::vec(-2.0f32..2.0, d), m),
        labels in proptest::collection::vec(any::<bool>(), m),
        w in proptest::collection::vec(-1.0f64..1.0, d),
        b in -1.0f64..1.0,
        lambda in prop_oneof![Just(0.0), Just(0.01)],
    ) -> (Vec<Vec<f32>>, Vec<bool>, Vec<f64>, f64, f64) {
        (rows, labels, w, b, lambda)
    }
}

proptest! {
    #[test]
    fn gradient_matches_central_differences((rows, labels, w, b, lambda) in arb_logistic_point()) {
        let views: Vec<&[f32]> = rows.iter().map(|r| r.as_slice()).collect();
        let (gw, gb) = logistic_gradient(&views, &labels, &w, b, lambda);

        let h = 1e-5;
        let mut fd = Vec::with_capacity(w.len() + 1);
        for i in 0..w.len() {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[i] += h;
            wm[i] -= h;
            fd.push(
                (logistic_loss(&views, &labels, &wp, b, lambda)
                    - logistic_loss(&views, &labels, &wm, b, lambda))
                    / (2.0 * h),
            );
        }
        fd.push(
            (logistic_loss(&views, &labels, &w, b + h, lambda)
                - logistic_loss(&views, &labels, &w, b - h, lambda))
                / (2.0 * h),
        );

        let analytic: Vec<f64> = gw.iter().copied().chain(std::iter::once(gb)).collect();
        let scale = analytic.iter().fold(1.0f64, |acc, g| acc.max(g.abs()));
        for (a, f) in analytic.iter().zip(&fd) {
            prop_assert!((a - f).abs() / scale < 1e-5, "analytic {a} vs fd {f}");
        }
    }
}

proptest! {
    #[test]
    fn stratified_sample_respects_proportions(slice in arb_slice(), frac in 0.1f64..1.0, seed in any::<u64>()) {
        let n = ((slice.len() as f64 * frac) as usize).max(1).min(slice.len());
        let sample = stratified_sample(&slice, n, seed).unwrap();
        prop_assert_eq!(sample.len(), n);

        let key = |p: &Post| (p.labels.any(), p.non_moral);
        let mut strata: Vec<(bool, bool)> = slice.posts.iter().map(key).collect();
        strata.sort_unstable();
        strata.dedup();
        for s in strata {
            let total = slice.posts.iter().filter(|p| key(p) == s).count();
            let got = sample.posts.iter().filter(|p| key(p) == s).count();
            let exact = n as f64 * total as f64 / slice.len() as f64;
            prop_assert!(
                (got as f64 - exact).abs() < 1.0 + 1e-9,
                "stratum {s:?}: {got} vs exact {exact}"
            );
        }
    }

    #[test]
    fn t_cdf_symmetry(t in -30.0f64..30.0, df in 1usize..60) {
        let s = student_t_cdf(t, df) + student_t_cdf(-t, df);
        prop_assert!((s - 1.0).abs() < 1e-10, "sum {s}");
    }
}

fn matrix_from_rows(ids_prefix: &str, rows: &[Vec<f32>]) -> EmbeddingMatrix {
    let dim = rows[0].len();
    let ids = (0..rows.len()).map(|i| format!("{ids_prefix}{i}")).collect();
    let data = rows.iter().flatten().copied().collect();
    EmbeddingMatrix::new(ids, data, dim).unwrap()
}

prop_compose! {
    fn arb_aligned_pair()(
        n in 4usize..20,
        d1 in 1usize..5,
        d2 in 1usize..5,
    )(
        x in proptest::collection::vec(proptest::collection::vec(-3.0f32..3.0, d1), n),
        y in proptest::collection::vec(proptest::collection::vec(-3.0f32..3.0, d2), n),
    ) -> (EmbeddingMatrix, EmbeddingMatrix) {
        (matrix_from_rows("a", &x), matrix_from_rows("a", &y))
    }
}

proptest! {
    #[test]
    fn cka_is_symmetric_and_scale_invariant((x, y) in arb_aligned_pair()) {
        // Boundary-heavy generation can produce constant columns; those are
        // legitimately degenerate and out of scope here.
        let xy = match linear_cka(&x, &y) {
            Err(xfid_core::similarity::MetricError::DegenerateInput) => return Ok(()),
            r => r.unwrap().value,
        };
        let yx = linear_cka(&y, &x).unwrap().value;
        prop_assert!((xy - yx).abs() <= 1e-12, "{xy} vs {yx}");

        // f32 storage rounds the scaled entries, so the tolerance is looser
        // than for exactly representable scalings.
        let scaled_rows: Vec<Vec<f32>> = y.rows().map(|r| r.iter().map(|v| v * 2.5).collect()).collect();
        let y_scaled = matrix_from_rows("a", &scaled_rows);
        let with_scale = linear_cka(&x, &y_scaled).unwrap().value;
        prop_assert!((xy - with_scale).abs() <= 1e-6, "{xy} vs scaled {with_scale}");
    }
}

prop_compose! {
    fn arb_cosine_pair()(
        n in 1usize..15,
        d in 1usize..6,
    )(
        x in proptest::collection::vec(proptest::collection::vec(0.1f32..3.0, d), n),
        y in proptest::collection::vec(proptest::collection::vec(0.1f32..3.0, d), n),
        scales in proptest::collection::vec(0.5f32..4.0, n),
    ) -> (EmbeddingMatrix, EmbeddingMatrix, Vec<f32>) {
        (matrix_from_rows("c", &x), matrix_from_rows("c", &y), scales)
    }
}

proptest! {
    #[test]
    fn cosine_symmetric_and_row_scale_invariant((x, y, scales) in arb_cosine_pair()) {
        let fwd = pairwise_cosine(&x, &y).unwrap();
        let rev = pairwise_cosine(&y, &x).unwrap();
        prop_assert_eq!(&fwd, &rev);

        let scaled_rows: Vec<Vec<f32>> = y
            .rows()
            .zip(&scales)
            .map(|(r, &s)| r.iter().map(|v| v * s).collect())
            .collect();
        let y_scaled = matrix_from_rows("c", &scaled_rows);
        let scaled = pairwise_cosine(&x, &y_scaled).unwrap();
        for (a, b) in fwd.iter().zip(&scaled) {
            prop_assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
    }
}

proptest! {
    // Token-preserving pairs must never be flagged, whatever the
    // surrounding text does.
    #[test]
    fn artifact_checks_have_no_false_positives(
        words_src in proptest::collection::vec("[a-z]{1,8}", 1..8),
        words_tgt in proptest::collection::vec("[a-ząęłóżź]{1,8}", 1..8),
        tags in proptest::collection::vec("#[A-Za-z0-9_]{1,6}", 0..3),
        mentions in proptest::collection::vec("@[A-Za-z0-9_]{1,6}", 0..3),
        with_url in any::<bool>(),
    ) {
        let mut src = words_src.join(" ");
        let mut tgt = words_tgt.join(" ");
        for t in tags.iter().chain(&mentions) {
            src.push_str(&format!(" {t}"));
            tgt.push_str(&format!(" {t}"));
        }
        if with_url {
            src.push_str(" https://example.com/x_1");
            tgt.push_str(" https://example.com/x_1");
        }
        let violations = artifact_checks(&src, &tgt, Platform::Twitter);
        let unexpected: Vec<&ArtifactViolation> = violations
            .iter()
            // Random Polish words may collide into src hashtags only if '#'
            // appears, which the alphabet above forbids.
            .collect();
        prop_assert!(unexpected.is_empty(), "{unexpected:?} on src={src} tgt={tgt}");
    }
}
