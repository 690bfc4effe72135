//! Wait-time statistics, paired cross-policy comparison and a few
//! regressions over simulation traces.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{DvrpError, Result};
use crate::sim::SimulationTrace;

/// Summary statistics of a set of waits. `std` is the population standard
/// deviation; quantiles interpolate linearly between order statistics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaitStats {
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub p95: f64,
    pub max: f64,
    pub count: usize,
}

/// Quantile `q` of ascending `sorted`, interpolating at rank `q (n - 1)`.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of an empty sample");
    let h = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl WaitStats {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(DvrpError::InsufficientData("no waits to summarize".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mean = sorted.iter().sum::<f64>() / n;
        let var = sorted.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / n;
        Ok(Self {
            mean,
            std: var.sqrt(),
            median: quantile(&sorted, 0.5),
            q25: quantile(&sorted, 0.25),
            q75: quantile(&sorted, 0.75),
            p95: quantile(&sorted, 0.95),
            max: *sorted.last().expect("non-empty"),
            count: sorted.len(),
        })
    }
}

/// Waits of the trace, dropping the earliest-arriving `warmup_fraction`.
pub fn retained_waits(trace: &SimulationTrace, warmup_fraction: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&warmup_fraction) {
        return Err(DvrpError::InvalidParameter(format!(
            "warm-up fraction must lie in [0, 1), got {warmup_fraction}"
        )));
    }
    let mut records: Vec<_> = trace.waits.iter().collect();
    records.sort_by(|a, b| a.arrival.total_cmp(&b.arrival).then(a.task_id.cmp(&b.task_id)));
    let skip = (warmup_fraction * records.len() as f64).floor() as usize;
    Ok(records[skip..].iter().map(|r| r.wait()).collect())
}

pub fn summarize(trace: &SimulationTrace, warmup_fraction: f64) -> Result<WaitStats> {
    WaitStats::from_values(&retained_waits(trace, warmup_fraction)?)
}

/// Per-vehicle summaries of a fleet trace, by vehicle id.
pub fn summarize_vehicles(trace: &SimulationTrace, warmup_fraction: f64) -> Result<Vec<(usize, WaitStats)>> {
    let ids: BTreeSet<usize> = trace.clocks.iter().map(|c| c.vehicle_id).collect();
    ids.into_iter()
        .map(|v| {
            let sub = SimulationTrace {
                waits: trace.waits_of(v).copied().collect(),
                ..SimulationTrace::default()
            };
            summarize(&sub, warmup_fraction).map(|s| (v, s))
        })
        .collect()
}

/// Retained waits of one (policy, load, seed) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellWaits {
    pub policy: String,
    pub rho: f64,
    pub seed: u64,
    pub waits: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub policy: String,
    pub rho: f64,
    /// Statistics over the waits of all seeds pooled.
    pub pooled: WaitStats,
    /// Pooled mean over the reference policy's pooled mean.
    pub ratio: f64,
    /// Same ratio per paired seed, in seed order.
    pub seed_ratios: Vec<(u64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub reference: String,
    pub rows: Vec<ComparisonRow>,
    /// Per policy, the mean over loads of the pooled-mean ratio.
    pub aggregate: BTreeMap<String, f64>,
    pub std_convention: String,
    pub quantile_convention: String,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn rho_key(rho: f64) -> u64 {
    rho.to_bits()
}

/// Compares every policy against `reference` on paired workloads. Each
/// (policy, load) must cover the same seeds with the same task counts as
/// the reference.
pub fn compare(cells: &[CellWaits], reference: &str) -> Result<Comparison> {
    let mut grid: BTreeMap<(String, u64), BTreeMap<u64, &CellWaits>> = BTreeMap::new();
    let mut policies: Vec<String> = Vec::new();
    let mut rhos: Vec<f64> = Vec::new();
    for c in cells {
        if !policies.contains(&c.policy) {
            policies.push(c.policy.clone());
        }
        if !rhos.iter().any(|r| r.to_bits() == c.rho.to_bits()) {
            rhos.push(c.rho);
        }
        let slot = grid.entry((c.policy.clone(), rho_key(c.rho))).or_default();
        if slot.insert(c.seed, c).is_some() {
            return Err(DvrpError::Pairing(format!(
                "duplicate cell {} rho={} seed={}",
                c.policy, c.rho, c.seed
            )));
        }
    }
    if !policies.iter().any(|p| p == reference) {
        return Err(DvrpError::Pairing(format!("reference policy {reference:?} has no cells")));
    }
    if policies.len() < 2 {
        return Err(DvrpError::Pairing("need at least two policies to compare".into()));
    }
    rhos.sort_by(f64::total_cmp);
    let mut rows = Vec::new();
    let mut aggregate = BTreeMap::new();
    for policy in &policies {
        let mut ratios = Vec::new();
        for &rho in &rhos {
            let reference_cells = grid.get(&(reference.to_string(), rho_key(rho))).ok_or_else(|| {
                DvrpError::Pairing(format!("reference {reference} has no cells at rho={rho}"))
            })?;
            let Some(mine) = grid.get(&(policy.clone(), rho_key(rho))) else {
                return Err(DvrpError::Pairing(format!("{policy} has no cells at rho={rho}")));
            };
            if mine.keys().ne(reference_cells.keys()) {
                return Err(DvrpError::Pairing(format!(
                    "{policy} at rho={rho} is not run on the reference seeds"
                )));
            }
            let mut seed_ratios = Vec::new();
            for (seed, cell) in mine {
                let base = reference_cells[seed];
                if cell.waits.len() != base.waits.len() || cell.waits.is_empty() {
                    return Err(DvrpError::Pairing(format!(
                        "{policy} rho={rho} seed={seed}: {} waits vs {} for the reference",
                        cell.waits.len(),
                        base.waits.len()
                    )));
                }
                seed_ratios.push((*seed, mean(&cell.waits) / mean(&base.waits)));
            }
            let pooled_of = |m: &BTreeMap<u64, &CellWaits>| {
                let all: Vec<f64> = m.values().flat_map(|c| c.waits.iter().copied()).collect();
                WaitStats::from_values(&all)
            };
            let pooled = pooled_of(mine)?;
            let base = pooled_of(reference_cells)?;
            let ratio = pooled.mean / base.mean;
            ratios.push(ratio);
            rows.push(ComparisonRow {
                policy: policy.clone(),
                rho,
                pooled,
                ratio,
                seed_ratios,
            });
        }
        aggregate.insert(policy.clone(), mean(&ratios));
    }
    Ok(Comparison {
        reference: reference.to_string(),
        rows,
        aggregate,
        std_convention: "population".into(),
        quantile_convention: "linear interpolation at rank q(n-1)".into(),
    })
}

pub fn write_summary_header<W: Write>(w: &mut csv::Writer<W>) -> Result<()> {
    w.write_record(["policy", "rho", "seed", "mean", "std", "median", "q25", "q75", "p95", "max", "count"])
        .map_err(|e| DvrpError::InvalidInput(format!("writing summary: {e}")))
}

pub fn write_summary_row<W: Write>(
    w: &mut csv::Writer<W>,
    policy: &str,
    rho: f64,
    seed: u64,
    s: &WaitStats,
) -> Result<()> {
    w.write_record([
        policy.to_string(),
        rho.to_string(),
        seed.to_string(),
        s.mean.to_string(),
        s.std.to_string(),
        s.median.to_string(),
        s.q25.to_string(),
        s.q75.to_string(),
        s.p95.to_string(),
        s.max.to_string(),
        s.count.to_string(),
    ])
    .map_err(|e| DvrpError::InvalidInput(format!("writing summary: {e}")))
}

/// For every served task, how many planning epochs of its vehicle passed
/// between its arrival and the epoch that committed it.
pub fn replans_survived(trace: &SimulationTrace) -> Vec<usize> {
    let mut epochs: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in &trace.iterations {
        epochs.entry(r.vehicle_id).or_default().push(r.epoch);
    }
    trace
        .waits
        .iter()
        .map(|w| {
            let e = &epochs[&w.vehicle_id];
            // iterations are one-based and epochs ascending
            let first = e.partition_point(|&t| t < w.arrival);
            (w.iteration - 1).saturating_sub(first)
        })
        .collect()
}

/// Least-squares fit of `N_{k+1}` on `N_k` and the iteration span.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueueRegression {
    pub intercept: f64,
    pub coef_n: f64,
    pub coef_span: f64,
    pub samples: usize,
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in 0..3 {
            if row != col {
                let f = a[row][col] / a[col][col];
                let pivot = a[col];
                for (x, p) in a[row].iter_mut().zip(pivot).skip(col) {
                    *x -= f * p;
                }
                b[row] -= f * b[col];
            }
        }
    }
    Some([b[0] / a[0][0], b[1] / a[1][1], b[2] / a[2][2]])
}

/// Regression over vehicle 0's iterations, skipping the leading
/// `warmup_fraction` of them.
pub fn queue_regression(trace: &SimulationTrace, warmup_fraction: f64) -> Result<QueueRegression> {
    let it: Vec<_> = trace.iterations_of(0).collect();
    let skip = (warmup_fraction.clamp(0.0, 0.9) * it.len() as f64) as usize;
    let it = &it[skip..];
    if it.len() < 10 {
        return Err(DvrpError::InsufficientData(format!("{} iterations", it.len())));
    }
    let mut xtx = [[0.0; 3]; 3];
    let mut xty = [0.0; 3];
    for w in it.windows(2) {
        let x = [1.0, w[0].n_outstanding as f64, w[0].span];
        let y = w[1].n_outstanding as f64;
        for i in 0..3 {
            for j in 0..3 {
                xtx[i][j] += x[i] * x[j];
            }
            xty[i] += x[i] * y;
        }
    }
    let beta = solve3(xtx, xty)
        .ok_or_else(|| DvrpError::InsufficientData("degenerate regressors".into()))?;
    Ok(QueueRegression {
        intercept: beta[0],
        coef_n: beta[1],
        coef_span: beta[2],
        samples: it.len() - 1,
    })
}

/// Trend test on a series: least-squares slope of its batch means against
/// batch position, with a two-sided Student-t test. Batching absorbs the
/// serial correlation of queue-length series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeTest {
    /// Slope per original sample.
    pub slope: f64,
    pub std_err: f64,
    pub t: f64,
    pub p_value: f64,
    pub batches: usize,
}

impl SlopeTest {
    pub fn significant(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

pub fn slope_test(series: &[f64], batches: usize) -> Result<SlopeTest> {
    if batches < 3 {
        return Err(DvrpError::InvalidParameter("slope test needs at least 3 batches".into()));
    }
    let size = series.len() / batches;
    if size == 0 {
        return Err(DvrpError::InsufficientData(format!(
            "{} samples for {batches} batches",
            series.len()
        )));
    }
    let ys: Vec<f64> = (0..batches).map(|b| mean(&series[b * size..(b + 1) * size])).collect();
    let xs: Vec<f64> = (0..batches).map(|b| (b * size) as f64 + (size as f64 - 1.0) / 2.0).collect();
    let (mx, my) = (mean(&xs), mean(&ys));
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - my - slope * (x - mx)).powi(2))
        .sum();
    let df = (batches - 2) as f64;
    let std_err = (rss / df / sxx).sqrt();
    let (t, p_value) = if std_err > 0.0 {
        let t = slope / std_err;
        let dist = StudentsT::new(0.0, 1.0, df)
            .map_err(|e| DvrpError::InvalidParameter(format!("t distribution: {e}")))?;
        (t, 2.0 * (1.0 - dist.cdf(t.abs())))
    } else if slope == 0.0 {
        (0.0, 1.0)
    } else {
        (slope.signum() * f64::INFINITY, 0.0)
    };
    Ok(SlopeTest {
        slope,
        std_err,
        t,
        p_value,
        batches,
    })
}

/// Queue lengths of vehicle 0 over the final half of the iterations that
/// start while tasks are still arriving.
pub fn steady_queue_series(trace: &SimulationTrace) -> Vec<f64> {
    let last_arrival = trace.waits.iter().map(|w| w.arrival).fold(0.0, f64::max);
    let series: Vec<f64> = trace
        .iterations_of(0)
        .filter(|r| r.epoch <= last_arrival)
        .map(|r| r.n_outstanding as f64)
        .collect();
    series[series.len() / 2..].to_vec()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub slope: SlopeTest,
    pub mean_n: f64,
    pub max_n: f64,
    /// No significant trend at 95% and the peak stays under 50 times the mean.
    pub stable: bool,
}

pub fn stability(trace: &SimulationTrace, batches: usize) -> Result<StabilityReport> {
    let series = steady_queue_series(trace);
    let slope = slope_test(&series, batches)?;
    let mean_n = mean(&series);
    let max_n = series.iter().copied().fold(0.0, f64::max);
    Ok(StabilityReport {
        slope,
        mean_n,
        max_n,
        stable: !slope.significant(0.05) && max_n < 50.0 * mean_n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{IterationRecord, WaitRecord};

    #[test]
    fn hand_statistics() {
        let s = WaitStats::from_values(&[5.0, 1.0, 4.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.mean, 3.0);
        assert_eq!(s.median, 3.0);
        assert!((s.p95 - 4.8).abs() < 1e-12);
        assert_eq!((s.q25, s.q75, s.max, s.count), (2.0, 4.0, 5.0, 5));
        assert!((s.std - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn constant_waits() {
        let s = WaitStats::from_values(&[2.0, 2.0, 2.0]).unwrap();
        assert_eq!((s.std, s.p95), (0.0, 2.0));
    }

    #[test]
    fn empty_is_insufficient() {
        assert!(matches!(WaitStats::from_values(&[]), Err(DvrpError::InsufficientData(_))));
    }

    fn trace_of(arrivals: &[f64], starts: &[f64]) -> SimulationTrace {
        SimulationTrace {
            waits: arrivals
                .iter()
                .zip(starts)
                .enumerate()
                .map(|(k, (&a, &s))| WaitRecord {
                    task_id: k,
                    vehicle_id: 0,
                    arrival: a,
                    service_start: s,
                    service_end: s + 1.0,
                    iteration: 1,
                })
                .collect(),
            ..SimulationTrace::default()
        }
    }

    #[test]
    fn warmup_drops_earliest_arrivals() {
        let t = trace_of(&[3.0, 0.0, 1.0, 2.0], &[3.5, 10.0, 1.0, 2.0]);
        let s = summarize(&t, 0.25).unwrap();
        assert_eq!(s.count, 3);
        assert_eq!(s.max, 0.5);
        let few = trace_of(&[0.0, 1.0], &[1.0, 1.0]);
        assert!(matches!(summarize(&few, 0.5), Ok(WaitStats { count: 1, .. })));
        assert!(summarize(&trace_of(&[], &[]), 0.0).is_err());
        assert!(summarize(&few, 1.0).is_err());
    }

    fn cell(policy: &str, rho: f64, seed: u64, waits: &[f64]) -> CellWaits {
        CellWaits {
            policy: policy.into(),
            rho,
            seed,
            waits: waits.to_vec(),
        }
    }

    #[test]
    fn identical_cells_have_unit_ratio() {
        let cells = [cell("a", 0.5, 1, &[1.0, 2.0]), cell("b", 0.5, 1, &[1.0, 2.0])];
        let c = compare(&cells, "a").unwrap();
        assert_eq!(c.aggregate["b"], 1.0);
        assert_eq!(c.aggregate["a"], 1.0);
    }

    #[test]
    fn aggregate_is_mean_over_loads() {
        let cells = [
            cell("a", 0.5, 1, &[1.0]),
            cell("b", 0.5, 1, &[2.0]),
            cell("a", 0.9, 1, &[2.0]),
            cell("b", 0.9, 1, &[8.0]),
        ];
        let c = compare(&cells, "a").unwrap();
        assert_eq!(c.aggregate["b"], 3.0);
        let back = compare(&cells, "b").unwrap();
        for (x, y) in c.rows.iter().filter(|r| r.policy == "b").zip(back.rows.iter().filter(|r| r.policy == "a")) {
            assert!((x.ratio * y.ratio - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unpaired_seeds_are_rejected() {
        let cells = [cell("a", 0.5, 1, &[1.0]), cell("b", 0.5, 2, &[1.0])];
        assert!(matches!(compare(&cells, "a"), Err(DvrpError::Pairing(_))));
        let cells = [cell("a", 0.5, 1, &[1.0]), cell("b", 0.5, 1, &[1.0, 2.0])];
        assert!(matches!(compare(&cells, "a"), Err(DvrpError::Pairing(_))));
        let cells = [cell("a", 0.5, 1, &[1.0])];
        assert!(matches!(compare(&cells, "a"), Err(DvrpError::Pairing(_))));
    }

    #[test]
    fn slope_of_a_line() {
        let up: Vec<f64> = (0..100).map(|k| k as f64 * 0.5 + if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let t = slope_test(&up, 10).unwrap();
        assert!((t.slope - 0.5).abs() < 1e-9);
        assert!(t.significant(0.05));
        let flat: Vec<f64> = (0..100).map(|k| if k % 3 == 0 { 1.0 } else { 2.0 }).collect();
        assert!(!slope_test(&flat, 5).unwrap().significant(0.05));
    }

    #[test]
    fn regression_recovers_coefficients() {
        // N_{k+1} = 1 + 0.5 N_k + 2 span, with spans varying independently
        let mut n = 4.0;
        let iterations: Vec<IterationRecord> = (0..60)
            .map(|k| {
                let span = ((k * 7) % 5) as f64 * 0.3;
                let r = IterationRecord {
                    vehicle_id: 0,
                    iteration: k + 1,
                    epoch: k as f64,
                    n_outstanding: 0,
                    planned_length: 0.0,
                    fragment_len: 1,
                    span,
                };
                let out = (r, n);
                n = 1.0 + 0.5 * n + 2.0 * span;
                out
            })
            .map(|(mut r, n)| {
                // integers only in the trace; scale to keep them exact
                r.n_outstanding = (n * 1000.0).round() as usize;
                r
            })
            .collect();
        let trace = SimulationTrace {
            iterations,
            ..SimulationTrace::default()
        };
        let fit = queue_regression(&trace, 0.0).unwrap();
        assert!((fit.coef_n - 0.5).abs() < 1e-3, "{fit:?}");
        assert!((fit.coef_span - 2000.0).abs() < 1.0, "{fit:?}");
    }

    #[test]
    fn survived_replans() {
        let trace = SimulationTrace {
            waits: vec![WaitRecord {
                task_id: 0,
                vehicle_id: 0,
                arrival: 0.5,
                service_start: 3.0,
                service_end: 4.0,
                iteration: 3,
            }],
            iterations: (0..3)
                .map(|k| IterationRecord {
                    vehicle_id: 0,
                    iteration: k + 1,
                    epoch: k as f64,
                    n_outstanding: 1,
                    planned_length: 0.0,
                    fragment_len: 1,
                    span: 1.0,
                })
                .collect(),
            ..SimulationTrace::default()
        };
        // epochs 0, 1, 2; arrival 0.5 sees epoch 1 pass without it
        assert_eq!(replans_survived(&trace), vec![1]);
    }
}
