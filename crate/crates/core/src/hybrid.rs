//! Stochastic interpolation between a baseline and a learned predictor.
//!
//! For a case with baseline label `f0` and learned label `f1`, the hybrid
//! moves from `f0` toward `f1` by a Binomial(|f1 - f0|, μ) number of steps.
//! Every Monte Carlo run draws fresh Bernoulli variables for every case from
//! a stream derived from `(master seed, μ index, run index)`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::RiskLabel;
use crate::error::{Error, Result};
use crate::metrics::{ConfusionMatrix, MetricId};
use crate::seeds;

/// Normal-approximation multiplier for a 95% interval.
pub const Z95: f64 = 1.96;

fn check_mu(mu: f64) -> Result<()> {
    if (0.0..=1.0).contains(&mu) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("mu must lie in [0, 1], got {mu}")))
    }
}

fn draw<R: Rng>(f0: RiskLabel, f1: RiskLabel, mu: f64, rng: &mut R) -> RiskLabel {
    let (a, b) = (f0.index(), f1.index());
    let steps = (0..a.abs_diff(b)).filter(|_| rng.gen_bool(mu)).count();
    let out = if b >= a { a + steps } else { a - steps };
    RiskLabel::ALL[out]
}

/// One hybrid label; always between `f0` and `f1` inclusive.
pub fn hybrid_predict<R: Rng>(f0: RiskLabel, f1: RiskLabel, mu: f64, rng: &mut R) -> Result<RiskLabel> {
    check_mu(mu)?;
    Ok(draw(f0, f1, mu, rng))
}

/// Hybrid labels for a whole prediction list from one random stream.
pub fn hybrid_predictions<R: Rng>(
    f0: &[RiskLabel],
    f1: &[RiskLabel],
    mu: f64,
    rng: &mut R,
) -> Result<Vec<RiskLabel>> {
    check_mu(mu)?;
    check_lengths(f0, f1, f0)?;
    Ok(f0.iter().zip(f1).map(|(&a, &b)| draw(a, b, mu, rng)).collect())
}

fn check_lengths(f0: &[RiskLabel], f1: &[RiskLabel], truths: &[RiskLabel]) -> Result<()> {
    if f0.len() != f1.len() || f0.len() != truths.len() {
        return Err(Error::InvalidInput(format!(
            "prediction lists differ in length: f0 {}, f1 {}, truth {}",
            f0.len(),
            f1.len(),
            truths.len()
        )));
    }
    if f0.is_empty() {
        return Err(Error::InvalidInput("no cases to evaluate".into()));
    }
    Ok(())
}

/// Confusion matrix of one hybrid run.
fn run_confusion(f0: &[RiskLabel], f1: &[RiskLabel], truths: &[RiskLabel], mu: f64, seed: u64) -> ConfusionMatrix {
    let mut rng = seeds::rng(seed);
    let mut counts = [[0u64; 3]; 3];
    for ((&a, &b), &t) in f0.iter().zip(f1).zip(truths) {
        counts[draw(a, b, mu, &mut rng).index()][t.index()] += 1;
    }
    ConfusionMatrix::from_counts(counts)
}

fn run_seed(master: u64, run: usize) -> u64 {
    seeds::derive(master, &[run as u64])
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    // identical runs report their common value exactly, free of rounding
    if values.iter().all(|v| *v == values[0]) {
        return (values[0], 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Monte Carlo summary of a metric over independent hybrid runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridStats {
    pub mean: f64,
    /// Sample standard deviation across runs.
    pub std: f64,
    /// `1.96 * std / sqrt(n_runs)`; absent for a single run.
    pub ci_half_width: Option<f64>,
    pub n_runs: usize,
    pub values: Vec<f64>,
}

impl HybridStats {
    fn from_values(values: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&values);
        let n = values.len();
        Self {
            mean,
            std,
            ci_half_width: (n >= 2).then(|| Z95 * std / (n as f64).sqrt()),
            n_runs: n,
            values,
        }
    }
}

fn check_runs(n_runs: usize) -> Result<()> {
    if n_runs == 0 {
        return Err(Error::InvalidInput("n_runs must be at least 1".into()));
    }
    Ok(())
}

/// Run `r` uses the stream seeded by `derive(master_seed, [r])`.
pub fn evaluate_hybrid(
    f0: &[RiskLabel],
    f1: &[RiskLabel],
    truths: &[RiskLabel],
    mu: f64,
    metric: MetricId,
    n_runs: usize,
    master_seed: u64,
) -> Result<HybridStats> {
    check_mu(mu)?;
    check_runs(n_runs)?;
    check_lengths(f0, f1, truths)?;
    let values = (0..n_runs)
        .into_par_iter()
        .map(|r| metric.evaluate(&run_confusion(f0, f1, truths, mu, run_seed(master_seed, r))))
        .collect::<Result<Vec<_>>>()?;
    Ok(HybridStats::from_values(values))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub mu: f64,
    pub mean: f64,
    pub std: f64,
    pub ci_half_width: Option<f64>,
    pub n_runs: usize,
}

/// Metric statistics along a uniform μ grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub metric: MetricId,
    pub points: Vec<SweepPoint>,
}

pub const DEFAULT_GRID_SIZE: usize = 200;
pub const DEFAULT_SWEEP_RUNS: usize = 10;
pub const DEFAULT_PROFILE_RUNS: usize = 50;

/// `grid_size` equispaced values from 0 to 1 inclusive.
pub fn mu_grid(grid_size: usize) -> Result<Vec<f64>> {
    if grid_size < 2 {
        return Err(Error::InvalidInput(format!("grid size must be >= 2, got {grid_size}")));
    }
    let last = (grid_size - 1) as f64;
    Ok((0..grid_size).map(|i| i as f64 / last).collect())
}

/// Grid point `i` evaluates with master seed `derive(master_seed, [i])`.
/// Calling this for several metrics with one seed reuses the same hybrid
/// draws for each of them.
pub fn mu_sweep(
    f0: &[RiskLabel],
    f1: &[RiskLabel],
    truths: &[RiskLabel],
    grid_size: usize,
    metric: MetricId,
    n_runs: usize,
    master_seed: u64,
) -> Result<SweepResult> {
    check_runs(n_runs)?;
    check_lengths(f0, f1, truths)?;
    let grid = mu_grid(grid_size)?;
    let points = grid
        .par_iter()
        .enumerate()
        .map(|(i, &mu)| {
            let s = evaluate_hybrid(f0, f1, truths, mu, metric, n_runs, seeds::derive(master_seed, &[i as u64]))?;
            Ok(SweepPoint {
                mu,
                mean: s.mean,
                std: s.std,
                ci_half_width: s.ci_half_width,
                n_runs: s.n_runs,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { metric, points })
}

impl SweepResult {
    pub fn means(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mean).collect()
    }

    /// Least-squares slope of the means against μ.
    pub fn slope(&self) -> f64 {
        let n = self.points.len() as f64;
        let mx = self.points.iter().map(|p| p.mu).sum::<f64>() / n;
        let my = self.points.iter().map(|p| p.mean).sum::<f64>() / n;
        let sxy: f64 = self.points.iter().map(|p| (p.mu - mx) * (p.mean - my)).sum();
        let sxx: f64 = self.points.iter().map(|p| (p.mu - mx).powi(2)).sum();
        sxy / sxx
    }

    /// Tidy rows `mu,mean,std,ci_lo,ci_hi,metric,tau,n_runs`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["mu", "mean", "std", "ci_lo", "ci_hi", "metric", "tau", "n_runs"])?;
        let tau = self.metric.tau().map(|t| t.to_string()).unwrap_or_default();
        for p in &self.points {
            let (lo, hi) = match p.ci_half_width {
                Some(h) => ((p.mean - h).to_string(), (p.mean + h).to_string()),
                None => (String::new(), String::new()),
            };
            w.write_record([
                p.mu.to_string(),
                p.mean.to_string(),
                p.std.to_string(),
                lo,
                hi,
                self.metric.name().to_string(),
                tau.clone(),
                p.n_runs.to_string(),
            ])?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?)
            .expect("csv output is utf-8"))
    }
    /// Reads the format written by [`SweepResult::to_csv`]. Lines starting
    /// with `#` are skipped. All rows must name the same metric.
    pub fn from_csv(text: &str, source: &std::path::Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        let col = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::parse(source, format!("missing '{name}' column")))
        };
        let (c_mu, c_mean, c_std, c_hi, c_metric, c_tau, c_runs) =
            (col("mu")?, col("mean")?, col("std")?, col("ci_hi")?, col("metric")?, col("tau")?, col("n_runs")?);
        let mut metric: Option<MetricId> = None;
        let mut points = Vec::new();
        for (line, row) in reader.records().enumerate() {
            let row = row?;
            let bad = |what: &str| Error::parse(source, format!("data row {}: bad {what}", line + 1));
            let num = |c: usize, what: &str| row.get(c).unwrap_or("").parse::<f64>().map_err(|_| bad(what));
            let tau = row.get(c_tau).unwrap_or("");
            let name = row.get(c_metric).unwrap_or("");
            let id: MetricId = if tau.is_empty() { name.parse() } else { format!("{name}({tau})").parse() }
                .map_err(|_| bad("metric"))?;
            match metric {
                Some(m) if m != id => return Err(Error::parse(source, "rows name different metrics")),
                _ => metric = Some(id),
            }
            let mean = num(c_mean, "mean")?;
            let hi = row.get(c_hi).unwrap_or("");
            points.push(SweepPoint {
                mu: num(c_mu, "mu")?,
                mean,
                std: num(c_std, "std")?,
                ci_half_width: if hi.is_empty() { None } else { Some(num(c_hi, "ci_hi")? - mean) },
                n_runs: row.get(c_runs).unwrap_or("").parse().map_err(|_| bad("n_runs"))?,
            });
        }
        let metric = metric.ok_or_else(|| Error::parse(source, "sweep file has no rows"))?;
        Ok(Self { metric, points })
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Distribution of PoliceResource(τ) over runs at a fixed μ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceSummary {
    pub tau: f64,
    pub mu: f64,
    pub stats: HybridStats,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Every τ is scored on the same hybrid draws (run `r` seeded by
/// `derive(master_seed, [r])`), so differences across τ are not sampling noise.
pub fn resource_profile(
    f0: &[RiskLabel],
    f1: &[RiskLabel],
    truths: &[RiskLabel],
    mu: f64,
    taus: &[f64],
    n_runs: usize,
    master_seed: u64,
) -> Result<Vec<ResourceSummary>> {
    check_mu(mu)?;
    check_runs(n_runs)?;
    check_lengths(f0, f1, truths)?;
    if let Some(t) = taus.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
        return Err(Error::InvalidInput(format!("tau must be finite and >= 0, got {t}")));
    }
    let matrices: Vec<ConfusionMatrix> = (0..n_runs)
        .into_par_iter()
        .map(|r| run_confusion(f0, f1, truths, mu, run_seed(master_seed, r)))
        .collect();
    taus.iter()
        .map(|&tau| {
            let metric = MetricId::PoliceResource { tau };
            let values = matrices.iter().map(|cm| metric.evaluate(cm)).collect::<Result<Vec<_>>>()?;
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            Ok(ResourceSummary {
                tau,
                mu,
                min: sorted[0],
                q1: quantile(&sorted, 0.25),
                median: quantile(&sorted, 0.5),
                q3: quantile(&sorted, 0.75),
                max: sorted[sorted.len() - 1],
                stats: HybridStats::from_values(values),
            })
        })
        .collect()
}

/// Box statistics per τ, then one row per individual run value.
pub fn resource_profile_csv(profile: &[ResourceSummary]) -> Result<(String, String)> {
    let mut summary = csv::Writer::from_writer(Vec::new());
    summary.write_record([
        "mu", "tau", "mean", "std", "ci_lo", "ci_hi", "min", "q1", "median", "q3", "max", "n_runs",
    ])?;
    let mut raw = csv::Writer::from_writer(Vec::new());
    raw.write_record(["mu", "tau", "run", "value"])?;
    for p in profile {
        let (lo, hi) = match p.stats.ci_half_width {
            Some(h) => ((p.stats.mean - h).to_string(), (p.stats.mean + h).to_string()),
            None => (String::new(), String::new()),
        };
        summary.write_record([
            p.mu.to_string(),
            p.tau.to_string(),
            p.stats.mean.to_string(),
            p.stats.std.to_string(),
            lo,
            hi,
            p.min.to_string(),
            p.q1.to_string(),
            p.median.to_string(),
            p.q3.to_string(),
            p.max.to_string(),
            p.stats.n_runs.to_string(),
        ])?;
        for (r, v) in p.stats.values.iter().enumerate() {
            raw.write_record([p.mu.to_string(), p.tau.to_string(), r.to_string(), v.to_string()])?;
        }
    }
    let finish = |w: csv::Writer<Vec<u8>>| {
        w.into_inner()
            .map(|b| String::from_utf8(b).expect("csv output is utf-8"))
            .map_err(|e| Error::InvalidInput(e.to_string()))
    };
    Ok((finish(summary)?, finish(raw)?))
}

/// How the resource curve is read before thresholding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    /// Raw Monte Carlo means.
    #[default]
    None,
    /// Monotone least-squares fit in the direction of the curve's overall
    /// trend (pool-adjacent-violators).
    Isotonic,
}

/// Pool-adjacent-violators fit, non-decreasing, equal weights.
pub fn isotonic_increasing(values: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() >= 2 {
            let (b, nb) = blocks[blocks.len() - 1];
            let (a, na) = blocks[blocks.len() - 2];
            if a <= b {
                break;
            }
            blocks.pop();
            let n = na + nb;
            *blocks.last_mut().unwrap() = ((a * na as f64 + b * nb as f64) / n as f64, n);
        }
    }
    blocks.into_iter().flat_map(|(v, n)| std::iter::repeat(v).take(n)).collect()
}

fn smoothed_means(curve: &SweepResult, smoothing: Smoothing) -> Vec<f64> {
    let means = curve.means();
    match smoothing {
        Smoothing::None => means,
        Smoothing::Isotonic => {
            if means.last() >= means.first() {
                isotonic_increasing(&means)
            } else {
                let neg: Vec<f64> = means.iter().map(|v| -v).collect();
                isotonic_increasing(&neg).into_iter().map(|v| -v).collect()
            }
        }
    }
}

/// Largest grid μ whose mean resource is at most `r0`, scanning down from
/// the top of the grid; 0 when no point qualifies.
pub fn decide_mu(curve: &SweepResult, r0: f64) -> Result<f64> {
    decide_mu_with(curve, r0, Smoothing::None)
}

pub fn decide_mu_with(curve: &SweepResult, r0: f64, smoothing: Smoothing) -> Result<f64> {
    if curve.points.is_empty() {
        return Err(Error::InvalidInput("resource curve is empty".into()));
    }
    if !(r0 >= 0.0) {
        return Err(Error::InvalidInput(format!("resource budget must be >= 0, got {r0}")));
    }
    let means = smoothed_means(curve, smoothing);
    Ok(curve
        .points
        .iter()
        .zip(&means)
        .rev()
        .find(|(_, m)| **m <= r0)
        .map_or(0.0, |(p, _)| p.mu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use RiskLabel::{High, Low, No};

    fn lists() -> (Vec<RiskLabel>, Vec<RiskLabel>, Vec<RiskLabel>) {
        let f0 = vec![No, No, Low, High, Low, No, High, Low];
        let f1 = vec![High, Low, Low, No, High, No, Low, No];
        let t = vec![High, No, Low, Low, High, No, High, No];
        (f0, f1, t)
    }

    #[test]
    fn endpoints_are_exact() {
        let mut rng = seeds::rng(3);
        for a in RiskLabel::ALL {
            for b in RiskLabel::ALL {
                assert_eq!(hybrid_predict(a, b, 0.0, &mut rng).unwrap(), a);
                assert_eq!(hybrid_predict(a, b, 1.0, &mut rng).unwrap(), b);
            }
        }
        assert!(hybrid_predict(No, High, 1.5, &mut rng).is_err());
        assert!(hybrid_predict(No, High, -0.1, &mut rng).is_err());
    }

    #[test]
    fn binomial_distribution_from_no_to_high() {
        let mut rng = seeds::rng(9);
        let mut counts = [0usize; 3];
        let n = 100_000;
        for _ in 0..n {
            counts[hybrid_predict(No, High, 0.5, &mut rng).unwrap().index()] += 1;
        }
        for (c, p) in counts.iter().zip([0.25, 0.5, 0.25]) {
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((*c as f64 / n as f64 - p).abs() < 4.0 * se);
        }
    }

    #[test]
    fn mu_zero_has_no_spread() {
        let (f0, f1, t) = lists();
        let s = evaluate_hybrid(&f0, &f1, &t, 0.0, MetricId::PoliceProtection, 7, 1).unwrap();
        assert_eq!(s.std, 0.0);
        assert_eq!(s.mean, MetricId::PoliceProtection.score(&f0, &t).unwrap());
        assert_eq!(s.ci_half_width, Some(0.0));
    }

    #[test]
    fn equal_sources_have_no_spread() {
        let (f0, _, t) = lists();
        for mu in [0.1, 0.5, 0.9] {
            let s = evaluate_hybrid(&f0, &f0, &t, mu, MetricId::PoliceProtection, 5, 2).unwrap();
            assert_eq!(s.std, 0.0);
        }
    }

    #[test]
    fn single_run_has_no_interval() {
        let (f0, f1, t) = lists();
        let s = evaluate_hybrid(&f0, &f1, &t, 0.4, MetricId::WeightedF1, 1, 2).unwrap();
        assert_eq!(s.ci_half_width, None);
        assert!(evaluate_hybrid(&f0, &f1[..3], &t, 0.4, MetricId::WeightedF1, 2, 2).is_err());
    }

    #[test]
    fn two_point_sweep_is_the_endpoints() {
        let (f0, f1, t) = lists();
        let s = mu_sweep(&f0, &f1, &t, 2, MetricId::PoliceProtection, 4, 8).unwrap();
        assert_eq!(s.points.len(), 2);
        assert_eq!(s.points[0].mean, MetricId::PoliceProtection.score(&f0, &t).unwrap());
        assert_eq!(s.points[1].mean, MetricId::PoliceProtection.score(&f1, &t).unwrap());
        assert_eq!(s.points[0].std, 0.0);
        assert_eq!(s.points[1].std, 0.0);
        assert!(mu_sweep(&f0, &f1, &t, 1, MetricId::PoliceProtection, 4, 8).is_err());
    }

    #[test]
    fn sweep_is_independent_of_thread_count() {
        let (f0, f1, t) = lists();
        let metric = MetricId::PoliceResource { tau: 0.5 };
        let a = mu_sweep(&f0, &f1, &t, 21, metric, 6, 4).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let b = pool.install(|| mu_sweep(&f0, &f1, &t, 21, metric, 6, 4).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.to_csv().unwrap(), b.to_csv().unwrap());
    }

    #[test]
    fn csv_columns() {
        let (f0, f1, t) = lists();
        let s = mu_sweep(&f0, &f1, &t, 3, MetricId::PoliceResource { tau: 0.85 }, 2, 0).unwrap();
        let text = s.to_csv().unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("mu,mean,std,ci_lo,ci_hi,metric,tau,n_runs"));
        assert!(lines.next().unwrap().starts_with("0,"));
        assert!(text.contains(",police_resource,0.85,2"));
    }

    #[test]
    fn csv_reads_back() {
        let (f0, f1, t) = lists();
        let s = mu_sweep(&f0, &f1, &t, 7, MetricId::PoliceResource { tau: 0.85 }, 3, 2).unwrap();
        let text = format!("# manifest: m.toml\n{}", s.to_csv().unwrap());
        let back = SweepResult::from_csv(&text, std::path::Path::new("s.csv")).unwrap();
        assert_eq!(back.metric, s.metric);
        assert_eq!(back.means(), s.means());
        assert_eq!(decide_mu(&back, 0.1).unwrap(), decide_mu(&s, 0.1).unwrap());
        assert!(SweepResult::from_csv("mu,mean\n", std::path::Path::new("s.csv")).is_err());
    }

    #[test]
    fn resource_profile_constant_at_mu_zero() {
        let (f0, f1, t) = lists();
        let p = resource_profile(&f0, &f1, &t, 0.0, &[0.0], 9, 5).unwrap();
        let expected = MetricId::PoliceResource { tau: 0.0 }.score(&f0, &t).unwrap();
        assert_eq!(p[0].stats.values, vec![expected; 9]);
        assert_eq!((p[0].min, p[0].median, p[0].max), (expected, expected, expected));
        assert!(resource_profile(&f0, &f1, &t, 0.5, &[-1.0], 9, 5).is_err());
    }

    #[test]
    fn quantiles_interpolate_linearly() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(quantile(&v, 1.0), 4.0);
    }

    fn curve(means: &[f64]) -> SweepResult {
        let n = means.len();
        SweepResult {
            metric: MetricId::PoliceResource { tau: 0.85 },
            points: means
                .iter()
                .enumerate()
                .map(|(i, &m)| SweepPoint {
                    mu: i as f64 / (n - 1) as f64,
                    mean: m,
                    std: 0.0,
                    ci_half_width: Some(0.0),
                    n_runs: 2,
                })
                .collect(),
        }
    }

    #[test]
    fn decide_mu_rules() {
        let c = curve(&[0.10, 0.12, 0.11, 0.15, 0.2]);
        assert_eq!(decide_mu(&c, 0.5).unwrap(), 1.0);
        assert_eq!(decide_mu(&c, 0.05).unwrap(), 0.0);
        assert_eq!(decide_mu(&c, 0.115).unwrap(), 0.5);
        assert_eq!(decide_mu(&c, 0.15).unwrap(), 0.75);
        assert!(decide_mu(&curve(&[]), 0.1).is_err());
        // smoothing pools the 0.12/0.11 dip into 0.115 for both points
        assert_eq!(decide_mu_with(&c, 0.115, Smoothing::Isotonic).unwrap(), 0.5);
        assert_eq!(decide_mu_with(&c, 0.112, Smoothing::Isotonic).unwrap(), 0.0);
    }

    #[test]
    fn isotonic_fit() {
        assert_eq!(isotonic_increasing(&[1.0, 3.0, 2.0, 4.0]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(isotonic_increasing(&[3.0, 2.0, 1.0]), vec![2.0, 2.0, 2.0]);
    }

    fn label() -> impl Strategy<Value = RiskLabel> {
        (0usize..3).prop_map(|i| RiskLabel::ALL[i])
    }

    proptest! {
        #[test]
        fn draws_stay_between_sources(a in label(), b in label(), mu in 0.0f64..=1.0, seed in any::<u64>()) {
            let mut rng = seeds::rng(seed);
            for _ in 0..20 {
                let h = hybrid_predict(a, b, mu, &mut rng).unwrap();
                prop_assert!(h >= a.min(b) && h <= a.max(b));
            }
        }

        #[test]
        fn decide_mu_monotone_in_budget(
            means in proptest::collection::vec(0.0f64..0.5, 2..40),
            r1 in 0.0f64..0.6,
            r2 in 0.0f64..0.6,
        ) {
            let c = curve(&means);
            let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            prop_assert!(decide_mu(&c, lo).unwrap() <= decide_mu(&c, hi).unwrap());
            prop_assert!(
                decide_mu_with(&c, lo, Smoothing::Isotonic).unwrap()
                    <= decide_mu_with(&c, hi, Smoothing::Isotonic).unwrap()
            );
        }
    }
}
