//! Run metrics and multi-run aggregation.

use crate::tensor::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct RocPoint {
    pub threshold: Real,
    pub fpr: Real,
    pub fnr: Real,
}

#[derive(Debug, Clone)]
pub struct RunMetrics {
    pub top1: Real,
    pub params: u64,
    pub madds: u64,
    pub roc: Vec<RocPoint>,
}

impl RunMetrics {
    /// One CSV row under the header `run_id,seed,top1,params,madds`.
    pub fn csv_row(&self, run_id: &str, seed: u64) -> String {
        format!(
            "{run_id},{seed},{},{},{}\n",
            self.top1, self.params, self.madds
        )
    }

    pub fn roc_csv(&self) -> String {
        let mut out = String::from("threshold,fpr,fnr\n");
        for p in &self.roc {
            out.push_str(&format!("{},{},{}\n", p.threshold, p.fpr, p.fnr));
        }
        out
    }
}

pub const METRICS_CSV_HEADER: &str = "run_id,seed,top1,params,madds\n";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

/// Mean and sample standard deviation (n - 1 denominator; zero for a single
/// value), the "avg +/- std over n runs" aggregation.
pub fn mean_std(values: &[f64]) -> MeanStd {
    assert!(!values.is_empty(), "mean_std of no values");
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    MeanStd { mean, std, n }
}

/// Aggregate of repeated runs (or of several searched models): accuracy
/// mean +/- std and average cost figures.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport {
    pub top1: MeanStd,
    pub params_mean: f64,
    pub madds_mean: f64,
    pub n: usize,
}

pub fn aggregate_runs(runs: &[RunMetrics]) -> AggregateReport {
    assert!(!runs.is_empty(), "aggregate of no runs");
    let top1: Vec<f64> = runs.iter().map(|r| r.top1 as f64).collect();
    AggregateReport {
        top1: mean_std(&top1),
        params_mean: runs.iter().map(|r| r.params as f64).sum::<f64>() / runs.len() as f64,
        madds_mean: runs.iter().map(|r| r.madds as f64).sum::<f64>() / runs.len() as f64,
        n: runs.len(),
    }
}

impl AggregateReport {
    /// Table-style line: `96.64 +/- 0.20 (n=7), params 305K, madds 13.4M`.
    pub fn summary_line(&self) -> String {
        format!(
            "top1 {:.4} +/- {:.4} (n={}), params {:.0}, madds {:.0}",
            self.top1.mean, self.top1.std, self.n, self.params_mean, self.madds_mean
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_matches_hand_computation() {
        // Hand-computed: mean = 2.0, sample var = ((1)^2 + 0 + (-1)^2) / 2 = 1.
        let ms = mean_std(&[1.0, 2.0, 3.0]);
        assert!((ms.mean - 2.0).abs() < 1e-12);
        assert!((ms.std - 1.0).abs() < 1e-12);
        assert_eq!(ms.n, 3);
    }

    #[test]
    fn single_value_has_zero_std() {
        let ms = mean_std(&[0.9664]);
        assert_eq!(ms.std, 0.0);
        assert_eq!(ms.n, 1);
    }

    #[test]
    fn seven_run_fixture() {
        // Accuracy-style figures with a hand-computed aggregate.
        let vals = [96.64, 96.44, 96.84, 96.64, 96.24, 97.04, 96.64];
        let ms = mean_std(&vals);
        assert!((ms.mean - 96.64).abs() < 1e-9);
        // Sample variance: sum of squared deviations = 2 * (0.04 + 0.16) +
        // 2 * 0.0 ... computed directly:
        let mean = 96.64;
        let var: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 6.0;
        assert!((ms.std - var.sqrt()).abs() < 1e-12);
        assert_eq!(ms.n, 7);
    }

    #[test]
    fn eight_model_aggregation_fixture() {
        let runs: Vec<RunMetrics> = (0..8)
            .map(|i| RunMetrics {
                top1: 0.96 + 0.001 * i as Real,
                params: 100_000 + 1_000 * i as u64,
                madds: 5_000_000 + 10_000 * i as u64,
                roc: Vec::new(),
            })
            .collect();
        let agg = aggregate_runs(&runs);
        assert_eq!(agg.n, 8);
        assert!((agg.top1.mean - 0.9635).abs() < 1e-12);
        assert!((agg.params_mean - 103_500.0).abs() < 1e-9);
        assert!((agg.madds_mean - 5_035_000.0).abs() < 1e-9);
    }
}
