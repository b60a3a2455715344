//! Welch's t-test, Benjamini–Hochberg adjustment, and the CDAT
//! appropriateness gate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{mean, sample_variance, t_two_sided_p};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GateError {
    #[error("statistical degeneracy: {0}")]
    Degenerate(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T, E = GateError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub p: f64,
    pub df: f64,
}

/// Two-sided Welch t-test with Welch–Satterthwaite degrees of freedom.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(GateError::Degenerate(format!(
            "samples of size {} and {}; need at least 2 each",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let va = sample_variance(a) / na;
    let vb = sample_variance(b) / nb;
    let se2 = va + vb;
    if se2 == 0.0 || !se2.is_finite() {
        return Err(GateError::Degenerate("both samples have zero variance".into()));
    }
    let t = (mean(a) - mean(b)) / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    Ok(WelchResult {
        t,
        p: t_two_sided_p(t, df),
        df,
    })
}

/// Benjamini–Hochberg step-up adjustment. Returns adjusted p-values and the
/// rejection flags (adjusted p ≤ alpha), both in input order.
pub fn bh_fdr_adjust(pvalues: &[f64], alpha: f64) -> Result<(Vec<f64>, Vec<bool>)> {
    if let Some(p) = pvalues.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(GateError::Invalid(format!("p-value {p} outside [0, 1]")));
    }
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| pvalues[i].total_cmp(&pvalues[j]).then(i.cmp(&j)));
    let mut adjusted = vec![1.0; m];
    let mut running = 1.0f64;
    for rank in (0..m).rev() {
        let i = order[rank];
        running = running.min(pvalues[i] * (m as f64 / (rank + 1) as f64));
        adjusted[i] = running.min(1.0);
    }
    let rejected = adjusted.iter().map(|&p| p <= alpha).collect();
    Ok((adjusted, rejected))
}

/// One model at one temperature: per-cue appropriateness values and the
/// mean CDAT novelty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdatCell {
    pub model: String,
    pub temperature: f64,
    pub appropriateness: Vec<f64>,
    pub novelty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub model: String,
    pub temperature: f64,
    pub t: f64,
    pub raw_p: f64,
    pub adjusted_p: f64,
    pub passed: bool,
    pub mean_appropriateness: f64,
    pub baseline_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatedScore {
    pub passing_temperatures: Vec<f64>,
    /// Mean novelty over passing temperatures; absent if none passed.
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateOutcome {
    pub decisions: Vec<GateDecision>,
    pub scores: BTreeMap<String, GatedScore>,
}

pub const DEFAULT_GATE_ALPHA: f64 = 0.001;

/// Admits (model, temperature) cells whose appropriateness beats the
/// random-noun baseline after BH correction across models within each
/// temperature, then averages novelty over the admitted temperatures.
///
/// A cell whose Welch test is degenerate is kept in the BH family with p = 1.
pub fn cdat_gate(cells: &[CdatCell], baseline: &[f64], alpha: f64) -> Result<GateOutcome> {
    if baseline.is_empty() {
        return Err(GateError::Config("missing random-noun baseline".into()));
    }
    if cells.is_empty() {
        return Err(GateError::Invalid("no model-temperature cells".into()));
    }
    let baseline_mean = mean(baseline);

    let mut temps: Vec<f64> = cells.iter().map(|c| c.temperature).collect();
    temps.sort_by(f64::total_cmp);
    temps.dedup();

    let mut decisions = Vec::with_capacity(cells.len());
    for &temp in &temps {
        let family: Vec<&CdatCell> = cells.iter().filter(|c| c.temperature == temp).collect();
        let tests: Vec<(f64, f64)> = family
            .iter()
            .map(|c| match welch_t_test(&c.appropriateness, baseline) {
                Ok(w) => (w.t, w.p),
                Err(_) => (0.0, 1.0),
            })
            .collect();
        let raw: Vec<f64> = tests.iter().map(|t| t.1).collect();
        let (adjusted, rejected) = bh_fdr_adjust(&raw, alpha)?;
        for (i, cell) in family.iter().enumerate() {
            let m = if cell.appropriateness.is_empty() {
                f64::NAN
            } else {
                mean(&cell.appropriateness)
            };
            decisions.push(GateDecision {
                model: cell.model.clone(),
                temperature: temp,
                t: tests[i].0,
                raw_p: raw[i],
                adjusted_p: adjusted[i],
                passed: rejected[i] && m > baseline_mean,
                mean_appropriateness: m,
                baseline_mean,
            });
        }
    }

    let mut scores: BTreeMap<String, GatedScore> = BTreeMap::new();
    for cell in cells {
        let entry = scores.entry(cell.model.clone()).or_insert(GatedScore {
            passing_temperatures: Vec::new(),
            score: None,
        });
        let passed = decisions
            .iter()
            .any(|d| d.model == cell.model && d.temperature == cell.temperature && d.passed);
        if passed {
            entry.passing_temperatures.push(cell.temperature);
        }
    }
    for (model, gs) in scores.iter_mut() {
        gs.passing_temperatures.sort_by(f64::total_cmp);
        let novelties: Vec<f64> = cells
            .iter()
            .filter(|c| &c.model == model && gs.passing_temperatures.contains(&c.temperature))
            .map(|c| c.novelty)
            .collect();
        if !novelties.is_empty() {
            gs.score = Some(mean(&novelties));
        }
    }
    Ok(GateOutcome { decisions, scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn welch_examples() {
        let w = welch_t_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((w.t, w.p), (0.0, 1.0));

        let w = welch_t_test(&[10.0, 11.0, 12.0], &[0.0, 1.0, 2.0]).unwrap();
        assert!((w.t - 10.0 / (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((w.df - 4.0).abs() < 1e-12);
        assert!((w.p - 2.6e-4).abs() < 0.2e-4, "{}", w.p);

        let s = welch_t_test(&[0.0, 1.0, 2.0], &[10.0, 11.0, 12.0]).unwrap();
        assert_eq!(s.t, -w.t);
        assert_eq!(s.p, w.p);

        assert!(welch_t_test(&[1.0, 1.0], &[2.0, 2.0]).is_err());
        assert!(welch_t_test(&[1.0], &[2.0, 3.0]).is_err());
    }

    #[test]
    fn welch_matches_reference_t_cdf() {
        use statrs::distribution::{ContinuousCDF, StudentsT};
        let a = [3.2, 4.1, 5.5, 2.9, 4.4];
        let b = [1.0, 2.2, 1.7, 3.9, 2.0, 2.5, 1.1];
        let w = welch_t_test(&a, &b).unwrap();
        let dist = StudentsT::new(0.0, 1.0, w.df).unwrap();
        assert!((w.p - 2.0 * dist.cdf(-w.t.abs())).abs() < 1e-10);
    }

    #[test]
    fn bh_examples() {
        let (adj, rej) = bh_fdr_adjust(&[0.01, 0.02, 0.03, 0.04], 0.05).unwrap();
        assert!(rej.iter().all(|&r| r));
        assert!(adj.iter().all(|&p| (p - 0.04).abs() < 1e-12));

        let (adj, rej) = bh_fdr_adjust(&[0.0005], 0.001).unwrap();
        assert_eq!((adj[0], rej[0]), (0.0005, true));

        let (adj, rej) = bh_fdr_adjust(&[1.0, 1.0, 1.0], 0.05).unwrap();
        assert!(adj.iter().all(|&p| p == 1.0) && rej.iter().all(|&r| !r));

        assert!(bh_fdr_adjust(&[0.5, 1.5], 0.05).is_err());
    }

    fn cell(model: &str, temp: f64, appropriateness: Vec<f64>, novelty: f64) -> CdatCell {
        CdatCell {
            model: model.into(),
            temperature: temp,
            appropriateness,
            novelty,
        }
    }

    fn spread(center: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| center + (i % 7) as f64 - 3.0).collect()
    }

    #[test]
    fn gate_examples() {
        let baseline = spread(10.0, 1000);
        let mut cells = Vec::new();
        for (t, nov) in [(1.0, 80.0), (1.5, 82.0), (2.0, 87.0)] {
            cells.push(cell("strong", t, spread(30.0, 50), nov));
            cells.push(cell("null", t, spread(10.0, 50), 90.0));
        }
        let out = cdat_gate(&cells, &baseline, DEFAULT_GATE_ALPHA).unwrap();
        assert_eq!(out.scores["strong"].passing_temperatures, vec![1.0, 1.5, 2.0]);
        assert!((out.scores["strong"].score.unwrap() - 83.0).abs() < 1e-12);
        assert_eq!(out.scores["null"].score, None);
        assert_eq!(out.decisions.len(), 6);
        for d in &out.decisions {
            if d.passed {
                assert!(d.adjusted_p <= DEFAULT_GATE_ALPHA && d.mean_appropriateness > d.baseline_mean);
            }
        }
    }

    #[test]
    fn gate_requires_direction_and_baseline() {
        let baseline = spread(10.0, 1000);
        let cells = vec![cell("below", 1.0, spread(-20.0, 50), 70.0)];
        let out = cdat_gate(&cells, &baseline, DEFAULT_GATE_ALPHA).unwrap();
        assert!(out.decisions[0].adjusted_p <= DEFAULT_GATE_ALPHA);
        assert!(!out.decisions[0].passed);
        assert_eq!(out.scores["below"].score, None);
        assert!(matches!(cdat_gate(&cells, &[], 0.001), Err(GateError::Config(_))));
    }

    #[test]
    fn models_missing_a_temperature_are_skipped_there() {
        let baseline = spread(10.0, 1000);
        let cells = vec![
            cell("a", 1.0, spread(30.0, 50), 80.0),
            cell("a", 2.0, spread(30.0, 50), 90.0),
            cell("b", 1.0, spread(30.0, 50), 70.0),
        ];
        let out = cdat_gate(&cells, &baseline, 0.001).unwrap();
        assert_eq!(out.scores["b"].passing_temperatures, vec![1.0]);
        assert_eq!(out.scores["a"].score, Some(85.0));
    }

    proptest! {
        #[test]
        fn bh_properties(ps in prop::collection::vec(0.0f64..=1.0, 1..30), a1 in 0.0f64..0.5, a2 in 0.0f64..0.5, perm_seed in any::<u64>()) {
            let (adj, _) = bh_fdr_adjust(&ps, 0.05).unwrap();
            for (p, q) in ps.iter().zip(&adj) {
                prop_assert!(q >= p && *q <= 1.0);
            }
            let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
            let (_, r_lo) = bh_fdr_adjust(&ps, lo).unwrap();
            let (_, r_hi) = bh_fdr_adjust(&ps, hi).unwrap();
            for (a, b) in r_lo.iter().zip(&r_hi) {
                prop_assert!(!a || *b);
            }
            // permuting the inputs permutes the outputs
            use rand::{seq::SliceRandom, SeedableRng};
            let mut idx: Vec<usize> = (0..ps.len()).collect();
            idx.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(perm_seed));
            let shuffled: Vec<f64> = idx.iter().map(|&i| ps[i]).collect();
            let (adj_s, _) = bh_fdr_adjust(&shuffled, 0.05).unwrap();
            for (k, &i) in idx.iter().enumerate() {
                prop_assert!((adj_s[k] - adj[i]).abs() < 1e-15);
            }
        }

        #[test]
        fn welch_symmetry(a in prop::collection::vec(-10.0f64..10.0, 2..10), b in prop::collection::vec(-10.0f64..10.0, 2..10)) {
            if let (Ok(x), Ok(y)) = (welch_t_test(&a, &b), welch_t_test(&b, &a)) {
                prop_assert_eq!(x.t, -y.t);
                prop_assert!((x.p - y.p).abs() < 1e-15);
            }
        }
    }
}
