//! Confusion matrices, per-class precision/recall/F-measure, Pearson
//! correlation and the 2x2 chi-square test of independence.
//!
//! Everything that produces a real number is generic over
//! [`num_traits::Float`]; the crate root exports `f64` aliases.

use std::fmt::{self, Write as _};

use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::special::chi_square_sf_df1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("label {0:?} is not one of the matrix classes")]
    UnknownLabel(String),
    #[error("confusion matrix has no observations")]
    EmptyMatrix,
    #[error("a row or column of the 2x2 table sums to zero")]
    DegenerateMargin,
    #[error("input lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least two observations")]
    TooFewObservations,
    #[error("one of the inputs has zero variance")]
    ZeroVariance,
    #[error("counts grid must be {0}x{0}")]
    Shape(usize),
}

#[inline]
fn lit<T: Float>(v: f64) -> T {
    T::from(v).expect("literal representable in target float")
}

#[inline]
fn count<T: Float>(v: u64) -> T {
    T::from(v).expect("count representable in target float")
}

/// Rows are actual classes, columns are predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros<S: AsRef<str>>(classes: &[S]) -> Self {
        let n = classes.len();
        ConfusionMatrix {
            classes: classes.iter().map(|c| c.as_ref().to_string()).collect(),
            counts: vec![vec![0; n]; n],
        }
    }

    pub fn from_counts<S: AsRef<str>>(classes: &[S], counts: Vec<Vec<u64>>) -> Result<Self, EvalError> {
        let n = classes.len();
        if counts.len() != n || counts.iter().any(|r| r.len() != n) {
            return Err(EvalError::Shape(n));
        }
        Ok(ConfusionMatrix {
            classes: classes.iter().map(|c| c.as_ref().to_string()).collect(),
            counts,
        })
    }

    pub fn class_index(&self, label: &str) -> Result<usize, EvalError> {
        self.classes
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| EvalError::UnknownLabel(label.to_string()))
    }

    pub fn record(&mut self, actual: &str, predicted: &str) -> Result<(), EvalError> {
        let i = self.class_index(actual)?;
        let j = self.class_index(predicted)?;
        self.counts[i][j] += 1;
        Ok(())
    }

    pub fn record_index(&mut self, actual: usize, predicted: usize) {
        self.counts[actual][predicted] += 1;
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn get(&self, actual: usize, predicted: usize) -> u64 {
        self.counts[actual][predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn column_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }

    /// Adds another matrix over the same classes.
    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.classes, other.classes, "class lists differ");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    /// Aligned text rendering, actual classes as rows.
    pub fn render(&self) -> String {
        let width = self
            .classes
            .iter()
            .map(|c| c.len())
            .chain(self.counts.iter().flatten().map(|v| v.to_string().len()))
            .max()
            .unwrap_or(1)
            .max("actual\\pred".len());
        let mut out = format!("{:<width$}", "actual\\pred");
        for c in &self.classes {
            let _ = write!(out, " {c:>width$}");
        }
        out.push('\n');
        for (c, row) in self.classes.iter().zip(&self.counts) {
            let _ = write!(out, "{c:<width$}");
            for v in row {
                let _ = write!(out, " {v:>width$}");
            }
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Builds a matrix from (actual, predicted) label pairs.
pub fn confusion_matrix<S: AsRef<str>, L: AsRef<str>>(
    pairs: &[(L, L)],
    classes: &[S],
) -> Result<ConfusionMatrix, EvalError> {
    let mut m = ConfusionMatrix::zeros(classes);
    for (actual, predicted) in pairs {
        m.record(actual.as_ref(), predicted.as_ref())?;
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages<T> {
    pub precision: T,
    pub recall: T,
    pub f_measure: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics<T> {
    pub classes: Vec<String>,
    pub precision: Vec<T>,
    pub recall: Vec<T>,
    pub f_measure: Vec<T>,
    /// Row sums (actual occurrences) per class.
    pub support: Vec<u64>,
    /// Averages weighted by support.
    pub weighted_avg: Averages<T>,
    /// Unweighted mean over classes.
    pub macro_avg: Averages<T>,
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f_measure<T: Float>(precision: T, recall: T) -> T {
    let sum = precision + recall;
    if sum > T::zero() {
        lit::<T>(2.0) * precision * recall / sum
    } else {
        T::zero()
    }
}

/// Per-class metrics. An empty predicted column has precision 0 and an
/// empty actual row has recall 0.
pub fn class_metrics<T: Float>(m: &ConfusionMatrix) -> Result<ClassMetrics<T>, EvalError> {
    let total = m.total();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let n = m.classes.len();
    let ratio = |num: u64, den: u64| {
        if den == 0 {
            T::zero()
        } else {
            count::<T>(num) / count::<T>(den)
        }
    };
    let support: Vec<u64> = (0..n).map(|i| m.row_sum(i)).collect();
    let precision: Vec<T> = (0..n).map(|i| ratio(m.get(i, i), m.column_sum(i))).collect();
    let recall: Vec<T> = (0..n).map(|i| ratio(m.get(i, i), support[i])).collect();
    let f: Vec<T> = precision
        .iter()
        .zip(&recall)
        .map(|(&p, &r)| f_measure(p, r))
        .collect();

    let weighted = |xs: &[T]| {
        xs.iter()
            .zip(&support)
            .fold(T::zero(), |acc, (&x, &s)| acc + x * count::<T>(s))
            / count::<T>(total)
    };
    let mean = |xs: &[T]| xs.iter().fold(T::zero(), |acc, &x| acc + x) / count::<T>(n as u64);

    Ok(ClassMetrics {
        classes: m.classes.clone(),
        weighted_avg: Averages {
            precision: weighted(&precision),
            recall: weighted(&recall),
            f_measure: weighted(&f),
        },
        macro_avg: Averages {
            precision: mean(&precision),
            recall: mean(&recall),
            f_measure: mean(&f),
        },
        precision,
        recall,
        f_measure: f,
        support,
    })
}

impl<T: Float + fmt::Display> ClassMetrics<T> {
    pub fn index_of(&self, class: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == class)
    }

    /// Aligned text table with one row per class and both averages.
    pub fn render(&self) -> String {
        let width = self
            .classes
            .iter()
            .map(|c| c.len())
            .max()
            .unwrap_or(0)
            .max("Weighted Avg.".len());
        let mut out = format!(
            "{:<width$} {:>9} {:>9} {:>9} {:>8}\n",
            "Class", "Precision", "Recall", "F-Measure", "Support"
        );
        for i in 0..self.classes.len() {
            let _ = writeln!(
                out,
                "{:<width$} {:>9.3} {:>9.3} {:>9.3} {:>8}",
                self.classes[i], self.precision[i], self.recall[i], self.f_measure[i], self.support[i]
            );
        }
        let total: u64 = self.support.iter().sum();
        for (name, avg) in [("Weighted Avg.", &self.weighted_avg), ("Avg.", &self.macro_avg)] {
            let _ = writeln!(
                out,
                "{:<width$} {:>9.3} {:>9.3} {:>9.3} {:>8}",
                name, avg.precision, avg.recall, avg.f_measure, total
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult<T> {
    pub statistic: T,
    pub df: u32,
    pub p_value: T,
}

/// Pearson chi-square test of independence on a 2x2 table, without
/// continuity correction.
pub fn chi_square_2x2<T: Float>(table: [[u64; 2]; 2]) -> Result<ChiSquareResult<T>, EvalError> {
    let rows = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
    let cols = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
    if rows.contains(&0) || cols.contains(&0) {
        return Err(EvalError::DegenerateMargin);
    }
    let n = count::<T>(rows[0] + rows[1]);
    let mut statistic = T::zero();
    for (i, row) in table.iter().enumerate() {
        for (j, &observed) in row.iter().enumerate() {
            let expected = count::<T>(rows[i]) * count::<T>(cols[j]) / n;
            let diff = count::<T>(observed) - expected;
            statistic = statistic + diff * diff / expected;
        }
    }
    Ok(ChiSquareResult {
        statistic,
        df: 1,
        p_value: chi_square_sf_df1(statistic),
    })
}

/// Sample Pearson correlation coefficient, clamped to [-1, 1].
pub fn pearson_correlation<T: Float>(xs: &[T], ys: &[T]) -> Result<T, EvalError> {
    if xs.len() != ys.len() {
        return Err(EvalError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(EvalError::TooFewObservations);
    }
    let n = count::<T>(xs.len() as u64);
    let mean = |v: &[T]| v.iter().fold(T::zero(), |a, &x| a + x) / n;
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx == T::zero() || syy == T::zero() {
        return Err(EvalError::ZeroVariance);
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Ok(r.max(-T::one()).min(T::one()))
}
