//! ROC/AUC against the exhaustive pairwise (Mann-Whitney) oracle.

use patchgroup_core::data::Label;
use patchgroup_core::metrics::roc_auc;
use patchgroup_core::rng::StreamKey;
use rand::Rng;

/// Brute force over every (positive, negative) pair; ties count one half.
fn pairwise_auc(scored: &[(f64, Label)]) -> f64 {
    let pos: Vec<f64> = scored.iter().filter(|(_, l)| *l == Label::Msi).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = scored.iter().filter(|(_, l)| *l == Label::Mss).map(|(s, _)| *s).collect();
    let mut wins = 0.0;
    for &p in &pos {
        for &n in &neg {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    wins / (pos.len() as f64 * neg.len() as f64)
}

fn trapezoid(points: &[patchgroup_core::metrics::RocPoint]) -> f64 {
    let mut area = 0.0;
    for w in points.windows(2) {
        area += (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0;
    }
    area
}

#[test]
fn auc_equals_pairwise_oracle_on_random_instances() {
    let mut rng = StreamKey::new(1234).rng();
    for trial in 0..1000 {
        let n = rng.gen_range(2..=200usize);
        // force ties in about half the trials by quantizing scores
        let quantize = trial % 2 == 0;
        let mut scored: Vec<(f64, Label)> = (0..n)
            .map(|_| {
                let mut s: f64 = rng.gen();
                if quantize {
                    s = (s * 8.0).floor() / 8.0;
                }
                let l = if rng.gen::<bool>() { Label::Msi } else { Label::Mss };
                (s, l)
            })
            .collect();
        // both classes must be present
        scored[0].1 = Label::Msi;
        if n > 1 {
            scored[1].1 = Label::Mss;
        } else {
            continue;
        }
        let (points, auc) = roc_auc(&scored).unwrap();
        let want = pairwise_auc(&scored);
        assert!(
            (auc - want).abs() <= 1e-12,
            "trial {trial}: auc {auc} vs pairwise {want}"
        );
        // curve endpoints and monotonicity
        assert_eq!((points[0].fpr, points[0].tpr), (0.0, 0.0));
        let last = points.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        for w in points.windows(2) {
            assert!(w[1].fpr >= w[0].fpr);
            assert!(w[1].tpr >= w[0].tpr);
        }
        // trapezoid over the emitted points equals the statistic
        assert!((trapezoid(&points) - want).abs() <= 1e-12);
    }
}

#[test]
fn documented_hand_case() {
    let scored = vec![
        (0.9, Label::Msi),
        (0.6, Label::Msi),
        (0.7, Label::Mss),
        (0.2, Label::Mss),
    ];
    let (_, auc) = roc_auc(&scored).unwrap();
    assert_eq!(auc, 0.75, "3 wins, 0 ties over 4 pairs");
    assert_eq!(pairwise_auc(&scored), 0.75);
}

#[test]
fn accuracy_is_invariant_under_monotone_transforms() {
    use patchgroup_core::metrics::accuracy;
    let mut rng = StreamKey::new(77).rng();
    for _ in 0..500 {
        let n = rng.gen_range(1..=50usize);
        let scored: Vec<(f64, Label)> = (0..n)
            .map(|_| {
                (rng.gen::<f64>(), if rng.gen::<bool>() { Label::Msi } else { Label::Mss })
            })
            .collect();
        let t: f64 = rng.gen();
        // strictly increasing map applied to scores and threshold alike
        let g = |x: f64| x * x * x + 2.0 * x;
        let transformed: Vec<(f64, Label)> =
            scored.iter().map(|&(s, l)| (g(s), l)).collect();
        let a = accuracy(&scored, t).unwrap();
        let b = accuracy(&transformed, g(t)).unwrap();
        assert_eq!(a, b);
    }
}
