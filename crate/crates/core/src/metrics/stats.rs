//! Comparing strategies over a paired sample of scenarios.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};

use crate::error::{Error, Result};

/// One-way repeated-measures ANOVA; scenarios are subjects, strategies are
/// treatments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaTable {
    pub subjects: usize,
    pub treatments: usize,
    pub ss_treatment: f64,
    pub ss_subjects: f64,
    pub ss_error: f64,
    pub ss_total: f64,
    pub df_treatment: usize,
    pub df_error: usize,
    pub ms_treatment: f64,
    pub ms_error: f64,
    /// `None` when the residual variance is zero but treatments differ.
    pub f: Option<f64>,
    pub p_value: f64,
}

/// Repeated-measures ANOVA of `matrix[scenario][strategy]`.
///
/// ```text
/// SS_treatment = n Σ_j (x̄_.j - x̄)^2
/// SS_subjects  = k Σ_i (x̄_i. - x̄)^2
/// SS_error     = Σ_ij (x_ij - x̄_i. - x̄_.j + x̄)^2
/// F = (SS_treatment / (k - 1)) / (SS_error / ((k - 1)(n - 1)))
/// ```
pub fn repeated_measures_anova(matrix: &[Vec<f64>]) -> Result<AnovaTable> {
    let n = matrix.len();
    let k = matrix.first().map_or(0, Vec::len);
    if n < 2 || k < 2 {
        return Err(Error::Statistics(format!(
            "repeated-measures ANOVA needs at least 2 scenarios and 2 strategies (got {n} x {k})"
        )));
    }
    if matrix.iter().any(|row| row.len() != k || row.iter().any(|v| !v.is_finite())) {
        return Err(Error::Statistics("EOH matrix is incomplete or has non-finite entries".into()));
    }
    let grand = matrix.iter().flatten().sum::<f64>() / (n * k) as f64;
    let row_mean: Vec<f64> = matrix.iter().map(|r| r.iter().sum::<f64>() / k as f64).collect();
    let col_mean: Vec<f64> = (0..k).map(|j| matrix.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();

    // identical column means would otherwise leave rounding noise in SS_treatment
    let ss_treatment = if col_mean.iter().all(|&m| m == col_mean[0]) {
        0.0
    } else {
        n as f64 * col_mean.iter().map(|m| (m - grand).powi(2)).sum::<f64>()
    };
    let ss_subjects = k as f64 * row_mean.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let mut ss_error = 0.0;
    let mut ss_total = 0.0;
    for (i, row) in matrix.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            ss_error += (x - row_mean[i] - col_mean[j] + grand).powi(2);
            ss_total += (x - grand).powi(2);
        }
    }
    let df_treatment = k - 1;
    let df_error = (k - 1) * (n - 1);
    let ms_treatment = ss_treatment / df_treatment as f64;
    let ms_error = ss_error / df_error as f64;
    let (f, p_value) = if ss_treatment == 0.0 {
        (Some(0.0), 1.0)
    } else if ms_error == 0.0 {
        (None, 0.0)
    } else {
        let f = ms_treatment / ms_error;
        let dist = FisherSnedecor::new(df_treatment as f64, df_error as f64)
            .map_err(|e| Error::Statistics(e.to_string()))?;
        (Some(f), dist.sf(f))
    };
    Ok(AnovaTable {
        subjects: n,
        treatments: k,
        ss_treatment,
        ss_subjects,
        ss_error,
        ss_total,
        df_treatment,
        df_error,
        ms_treatment,
        ms_error,
        f,
        p_value,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub n: usize,
    /// mean of `a - b`
    pub mean_difference: f64,
    /// `None` when the differences are constant and nonzero.
    pub t: Option<f64>,
    pub df: usize,
    /// two-sided
    pub p_value: f64,
}

/// Paired-sample t test of `a` against `b`.
///
/// ```
/// use lifeline::metrics::paired_comparison;
/// let c = paired_comparison(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
/// assert_eq!((c.mean_difference, c.t, c.p_value), (0.0, Some(0.0), 1.0));
/// ```
pub fn paired_comparison(a: &[f64], b: &[f64]) -> Result<PairedComparison> {
    if a.len() != b.len() {
        return Err(Error::Statistics(format!("paired samples differ in length ({} vs {})", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Statistics("a paired comparison needs at least 2 pairs".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let df = n - 1;
    let (t, p_value) = if var == 0.0 {
        if mean == 0.0 {
            (Some(0.0), 1.0)
        } else {
            (None, 0.0)
        }
    } else {
        let t = mean / (var / n as f64).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::Statistics(e.to_string()))?;
        (Some(t), (2.0 * dist.sf(t.abs())).min(1.0))
    };
    Ok(PairedComparison { n, mean_difference: mean, t, df, p_value })
}

/// Benjamini-Hochberg adjusted p-values, in input order.
///
/// ```
/// use lifeline::metrics::benjamini_hochberg;
/// let q = benjamini_hochberg(&[0.01, 0.04, 0.03]);
/// for (q, expect) in q.iter().zip([0.03, 0.04, 0.04]) {
///     assert!((q - expect).abs() < 1e-15);
/// }
/// ```
pub fn benjamini_hochberg(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        running = running.min(p[i] * (m as f64 / (rank + 1) as f64));
        adjusted[i] = running.min(1.0);
    }
    adjusted
}
