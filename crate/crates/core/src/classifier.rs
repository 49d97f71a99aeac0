//! Two-phase immune classification against trained memory pools.
//!
//! Phase one counts, per class, the antibodies whose affinity with the test
//! feature reaches `tau_match` (C). Classes with at least `c_min` matches
//! qualify for phase two, which averages those affinities (avidity). The
//! decision is the qualified class with the largest `S = C/|pool| + avidity`
//! (or raw `C + avidity`). When nothing qualifies the result is a no-match,
//! and the feature may seed a new class pool.

use std::fmt::Write as _;
use std::path::Path;

use crate::clonal::{affinity, Antibody, MemoryPool, PoolSet};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierConfig {
    pub tau_match: f64,
    pub c_min: usize,
    /// Use the raw count C instead of `C / |pool|` in the combined score.
    pub raw_count: bool,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            tau_match: 0.6,
            c_min: 1,
            raw_count: false,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau_match) {
            return Err(Error::Config(format!("tau_match {} outside [0,1]", self.tau_match)));
        }
        if self.c_min == 0 {
            return Err(Error::Config("c_min must be at least 1".into()));
        }
        Ok(())
    }
}

fn qualified<'a>(test_feature: &Tensor, pool: &'a MemoryPool, tau_match: f64) -> Result<Vec<(&'a Antibody, f64)>> {
    let mut out = Vec::new();
    for ab in pool.members() {
        let a = affinity(test_feature, &ab.feature)?;
        if a >= tau_match {
            out.push((ab, a));
        }
    }
    Ok(out)
}

/// Number of antibodies in `pool` whose affinity with `test_feature` reaches
/// `tau_match`.
pub fn phase1_count(test_feature: &Tensor, pool: &MemoryPool, tau_match: f64) -> Result<usize> {
    Ok(qualified(test_feature, pool, tau_match)?.len())
}

/// Mean affinity between `test_feature` and the qualified antibodies.
pub fn phase2_avidity<'a>(test_feature: &Tensor, qualified: impl IntoIterator<Item = &'a Antibody>) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for ab in qualified {
        total += affinity(test_feature, &ab.feature)?;
        n += 1;
    }
    if n == 0 {
        return Err(Error::UndefinedAvidity);
    }
    Ok(total / n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassScore {
    pub label: usize,
    pub count: usize,
    pub pool_size: usize,
    /// Present only for classes with `count ≥ c_min`.
    pub avidity: Option<f64>,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    /// `None` means no class reached `c_min` matches.
    pub predicted: Option<usize>,
    /// One entry per pool, ascending label.
    pub classes: Vec<ClassScore>,
}

impl Decision {
    pub fn is_no_match(&self) -> bool {
        self.predicted.is_none()
    }

    pub fn class(&self, label: usize) -> Option<&ClassScore> {
        self.classes.iter().find(|c| c.label == label)
    }
}

pub fn classify(test_feature: &Tensor, pools: &PoolSet, config: &ClassifierConfig) -> Result<Decision> {
    config.validate()?;
    let mut classes = Vec::with_capacity(pools.len());
    let mut best: Option<(usize, f64)> = None;
    for pool in pools.iter() {
        let matches = qualified(test_feature, pool, config.tau_match)?;
        let count = matches.len();
        let (avidity, score) = if count >= config.c_min {
            let avidity = phase2_avidity(test_feature, matches.iter().map(|(ab, _)| *ab))?;
            let count_term = if config.raw_count {
                count as f64
            } else {
                count as f64 / pool.len() as f64
            };
            (Some(avidity), Some(count_term + avidity))
        } else {
            (None, None)
        };
        // Pools iterate by ascending label, so a strict comparison keeps the
        // lower label on ties.
        if let Some(s) = score {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((pool.class_label(), s));
            }
        }
        classes.push(ClassScore {
            label: pool.class_label(),
            count,
            pool_size: pool.len(),
            avidity,
            score,
        });
    }
    Ok(Decision {
        predicted: best.map(|(l, _)| l),
        classes,
    })
}

/// Header of the decision record file.
pub const DECISION_HEADER: &str = "test_id,predicted,class,count,pool_size,avidity,score";

/// One CSV line per (test, class): test id, predicted class or `NOMATCH`,
/// then that class's C, pool size, avidity and combined score (empty when
/// the class did not qualify).
pub fn decisions_to_csv<'a>(records: impl IntoIterator<Item = (&'a str, &'a Decision)>) -> String {
    let mut s = String::from(DECISION_HEADER);
    s.push('\n');
    for (id, d) in records {
        let predicted = d.predicted.map_or_else(|| "NOMATCH".to_string(), |p| p.to_string());
        for c in &d.classes {
            let opt = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.6}"));
            let _ = writeln!(
                s,
                "{id},{predicted},{},{},{},{},{}",
                c.label,
                c.count,
                c.pool_size,
                opt(c.avidity),
                opt(c.score)
            );
        }
    }
    s
}

pub fn write_decisions<'a>(records: impl IntoIterator<Item = (&'a str, &'a Decision)>, path: &Path) -> Result<()> {
    std::fs::write(path, decisions_to_csv(records)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clonal::CloneConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pool_of(label: usize, features: &[Tensor]) -> MemoryPool {
        let mut p = MemoryPool::new(label, features.len().max(1)).unwrap();
        p.update_memory(features.iter().map(|f| Antibody {
            feature: f.clone(),
            class_label: label,
            affinity_score: 1.0,
        }))
        .unwrap();
        p
    }

    fn random_vec(d: usize, r: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_fn(&[d], |_| r.random_range(-1.0..1.0))
    }

    fn cos01(a: &Tensor, b: &Tensor) -> f64 {
        let dot: f64 = a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum();
        let na = a.data().iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.data().iter().map(|x| x * x).sum::<f64>().sqrt();
        (1.0 + dot / (na * nb)) / 2.0
    }

    #[test]
    fn self_match_counts() {
        let t = Tensor::vector(vec![1.0, 2.0, 3.0]);
        let p = pool_of(0, &[t.clone(), Tensor::vector(vec![-1.0, -2.0, -3.0])]);
        assert_eq!(phase1_count(&t, &p, 1.0 - 1e-12).unwrap(), 1);
        assert_eq!(phase1_count(&t, &p, 0.0).unwrap(), 2);
        assert_eq!(phase1_count(&t, &MemoryPool::new(0, 3).unwrap(), 0.0).unwrap(), 0);
    }

    #[test]
    fn count_matches_linear_scan() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let feats: Vec<Tensor> = (0..10).map(|_| random_vec(12, &mut r)).collect();
        let p = pool_of(0, &feats);
        let t = random_vec(12, &mut r);
        for tau in [0.3, 0.5, 0.55, 0.7] {
            let oracle = feats.iter().filter(|f| cos01(&t, f) >= tau).count();
            assert_eq!(phase1_count(&t, &p, tau).unwrap(), oracle);
        }
    }

    #[test]
    fn avidity_examples() {
        let t = Tensor::vector(vec![1.0, 0.0]);
        let same = pool_of(0, std::slice::from_ref(&t));
        assert!((phase2_avidity(&t, same.members()).unwrap() - 1.0).abs() < 1e-15);

        // cos = 0.6 → affinity 0.8; cos = 0.2 → affinity 0.6.
        let a = Tensor::vector(vec![0.6, 0.8]);
        let b = Tensor::vector(vec![0.2, 0.96f64.sqrt()]);
        let p = pool_of(0, &[a, b]);
        assert!((phase2_avidity(&t, p.members()).unwrap() - 0.7).abs() < 1e-12);

        assert!(matches!(phase2_avidity(&t, []), Err(Error::UndefinedAvidity)));
    }

    #[test]
    fn avidity_matches_recompute() {
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let feats: Vec<Tensor> = (0..10).map(|_| random_vec(16, &mut r)).collect();
        let p = pool_of(0, &feats);
        let t = random_vec(16, &mut r);
        let oracle = feats.iter().map(|f| cos01(&t, f)).sum::<f64>() / 10.0;
        assert!((phase2_avidity(&t, p.members()).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn exact_member_wins() {
        let t = Tensor::vector(vec![1.0, 0.0, 0.0]);
        let mut pools = PoolSet::new();
        pools.insert(pool_of(0, &[Tensor::vector(vec![0.0, 1.0, 0.0]), Tensor::vector(vec![0.0, 0.0, 1.0])]));
        pools.insert(pool_of(1, &[t.clone(), Tensor::vector(vec![0.0, 1.0, 0.0])]));
        let cfg = ClassifierConfig {
            tau_match: 0.75,
            ..ClassifierConfig::default()
        };
        let d = classify(&t, &pools, &cfg).unwrap();
        assert_eq!(d.predicted, Some(1));
        assert!((d.class(1).unwrap().score.unwrap() - (0.5 + 1.0)).abs() < 1e-12);
        assert_eq!(d.class(0).unwrap().avidity, None);
    }

    #[test]
    fn nothing_above_threshold_is_no_match() {
        let mut pools = PoolSet::new();
        pools.insert(pool_of(0, &[Tensor::vector(vec![0.0, 1.0])]));
        pools.insert(pool_of(1, &[Tensor::vector(vec![-1.0, 0.0])]));
        let d = classify(&Tensor::vector(vec![1.0, 0.0]), &pools, &ClassifierConfig::default()).unwrap();
        assert!(d.is_no_match());
        assert!(d.classes.iter().all(|c| c.count == 0 && c.score.is_none()));
    }

    #[test]
    fn ties_go_to_lower_label() {
        let v = Tensor::vector(vec![1.0, 1.0]);
        let mut pools = PoolSet::new();
        pools.insert(pool_of(4, std::slice::from_ref(&v)));
        pools.insert(pool_of(2, std::slice::from_ref(&v)));
        let d = classify(&v, &pools, &ClassifierConfig::default()).unwrap();
        assert_eq!(d.predicted, Some(2));
    }

    #[test]
    fn matches_brute_force_over_three_classes() {
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let mut pools = PoolSet::new();
        let mut raw: Vec<(usize, Vec<Tensor>)> = Vec::new();
        for label in 0..3 {
            let feats: Vec<Tensor> = (0..6).map(|_| random_vec(8, &mut r)).collect();
            pools.insert(pool_of(label, &feats));
            raw.push((label, feats));
        }
        let cfg = ClassifierConfig {
            tau_match: 0.55,
            c_min: 2,
            raw_count: false,
        };
        for _ in 0..50 {
            let t = random_vec(8, &mut r);
            let mut best: Option<(usize, f64)> = None;
            for (label, feats) in &raw {
                let affs: Vec<f64> = feats.iter().map(|f| cos01(&t, f)).filter(|&a| a >= 0.55).collect();
                if affs.len() >= 2 {
                    let s = affs.len() as f64 / 6.0 + affs.iter().sum::<f64>() / affs.len() as f64;
                    if best.is_none_or(|(_, b)| s > b + 1e-12) {
                        best = Some((*label, s));
                    }
                }
            }
            let d = classify(&t, &pools, &cfg).unwrap();
            assert_eq!(d.predicted, best.map(|b| b.0));
        }
    }

    #[test]
    fn raw_count_mode() {
        let v = Tensor::vector(vec![1.0, 0.0]);
        let mut pools = PoolSet::new();
        pools.insert(pool_of(0, &[v.clone(), v.clone(), v.clone()]));
        let cfg = ClassifierConfig {
            raw_count: true,
            ..ClassifierConfig::default()
        };
        let d = classify(&v, &pools, &cfg).unwrap();
        assert!((d.class(0).unwrap().score.unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn no_match_then_new_class() {
        let mut r = ChaCha8Rng::seed_from_u64(4);
        let mut pools = PoolSet::new();
        pools.insert(pool_of(0, &[Tensor::vector(vec![1.0, 0.0, 0.0, 0.0])]));
        let novel = Tensor::vector(vec![0.0, 0.0, 1.0, 0.2]);
        let cfg = ClassifierConfig {
            tau_match: 0.95,
            ..ClassifierConfig::default()
        };
        assert!(classify(&novel, &pools, &cfg).unwrap().is_no_match());
        let clone_cfg = CloneConfig {
            memory_capacity: 5,
            sigma: 0.01,
            ..CloneConfig::default()
        };
        pools.init_new_class(&novel, 9, &clone_cfg, &mut r).unwrap();
        assert_eq!(classify(&novel, &pools, &cfg).unwrap().predicted, Some(9));
    }

    #[test]
    fn decision_records() {
        let v = Tensor::vector(vec![1.0, 0.0]);
        let mut pools = PoolSet::new();
        pools.insert(pool_of(0, std::slice::from_ref(&v)));
        pools.insert(pool_of(1, &[Tensor::vector(vec![-1.0, 0.0])]));
        let d = classify(&v, &pools, &ClassifierConfig::default()).unwrap();
        let none = classify(&Tensor::vector(vec![0.0, 1.0]), &pools, &ClassifierConfig { tau_match: 0.9, ..Default::default() }).unwrap();
        let csv = decisions_to_csv([("a", &d), ("b", &none)]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], DECISION_HEADER);
        assert_eq!(lines[1], "a,0,0,1,1,1.000000,2.000000");
        assert_eq!(lines[2], "a,0,1,0,1,,");
        assert!(lines[3].starts_with("b,NOMATCH,0,0,1,,"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn vecs(n: usize, d: usize) -> impl Strategy<Value = Vec<Tensor>> {
            prop::collection::vec(
                prop::collection::vec(-1.0f64..1.0, d)
                    .prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
                    .prop_map(Tensor::vector),
                n,
            )
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn count_monotone_in_threshold(feats in vecs(8, 5), t in vecs(1, 5), lo in 0.0f64..1.0, hi in 0.0f64..1.0) {
                let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
                let p = pool_of(0, &feats);
                prop_assert!(phase1_count(&t[0], &p, hi).unwrap() <= phase1_count(&t[0], &p, lo).unwrap());
            }

            #[test]
            fn classify_scale_invariant(a in vecs(4, 5), b in vecs(4, 5), t in vecs(1, 5), c in 0.01f64..50.0) {
                let mut pools = PoolSet::new();
                pools.insert(pool_of(0, &a));
                pools.insert(pool_of(1, &b));
                let cfg = ClassifierConfig::default();
                let d1 = classify(&t[0], &pools, &cfg).unwrap();
                let d2 = classify(&t[0].scale(c), &pools, &cfg).unwrap();
                prop_assert_eq!(d1.predicted, d2.predicted);
                for (x, y) in d1.classes.iter().zip(&d2.classes) {
                    prop_assert_eq!(x.count, y.count);
                }
            }

            #[test]
            fn single_qualified_class_wins(a in vecs(3, 4), t in vecs(1, 4)) {
                let mut pools = PoolSet::new();
                pools.insert(pool_of(0, &a));
                pools.insert(pool_of(1, &[t[0].scale(-1.0)]));
                let cfg = ClassifierConfig { tau_match: 0.01, ..Default::default() };
                let d = classify(&t[0], &pools, &cfg).unwrap();
                // Class 1 holds only the antipode (affinity 0), class 0 always qualifies at τ = 0.01
                // unless every member is also antipodal.
                if d.class(0).unwrap().count > 0 {
                    prop_assert_eq!(d.predicted, Some(0));
                }
            }
        }
    }
}
