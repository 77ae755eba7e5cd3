//! `pmtc eval`: in-sample and out-of-sample total R² of group loadings on
//! observed factors, against the market benchmark.
//!
//! Memberships are held fixed. Loadings are re-estimated on each in-sample
//! window and applied unchanged to the following out-of-sample window.

use std::ops::Range;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use pmtc::factors::{estimate_observed, Averaging};
use pmtc::membership::Membership;
use pmtc::metrics::{total_r2, EvalInput};

use crate::failure::{CliResult, Failure, EXIT_SHAPE};
use crate::fit::read_matrix;

#[derive(Debug, Clone)]
pub enum Split {
    /// First `train` periods in sample, the rest out of sample.
    Index { train: usize },
    /// Consecutive windows; each is in sample once and the next one is its
    /// out-of-sample period.
    Rolling { windows: Vec<Range<usize>> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowResult {
    pub in_sample: Range<usize>,
    pub out_of_sample: Option<Range<usize>>,
    pub ins: f64,
    pub oos: Option<f64>,
}

/// Windows of `width` periods; a shorter tail joins the last window.
pub fn fixed_windows(periods: usize, width: usize) -> Vec<Range<usize>> {
    let n = (periods / width.max(1)).max(1);
    (0..n).map(|k| k * width..if k + 1 == n { periods } else { (k + 1) * width }).collect()
}

/// Runs of equal labels (for instance calendar years, one per period).
pub fn label_windows(labels: &[f64]) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for t in 1..=labels.len() {
        if t == labels.len() || labels[t] != labels[start] {
            out.push(start..t);
            start = t;
        }
    }
    out
}

fn columns(m: &DMatrix<f64>, r: &Range<usize>) -> DMatrix<f64> {
    m.columns(r.start, r.len()).into_owned()
}

fn r2(y: &DMatrix<f64>, f: &DMatrix<f64>, mkt: &DVector<f64>, m1: &Membership, b: &DMatrix<f64>, r: &Range<usize>) -> CliResult<f64> {
    let (y, f) = (columns(y, r), columns(f, r));
    let mkt = mkt.rows(r.start, r.len()).into_owned();
    Ok(total_r2(&EvalInput { returns: &y, factors: &f, market_excess: &mkt, membership: m1, loadings: b })?)
}

pub fn evaluate(y: &DMatrix<f64>, f: &DMatrix<f64>, mkt: &DVector<f64>, m1: &Membership, split: &Split, demean: bool) -> CliResult<Vec<WindowResult>> {
    let t = y.ncols();
    if f.ncols() != t || mkt.len() != t {
        return Err(Failure::new(EXIT_SHAPE, format!("returns span {t} periods, factors {}, market {}", f.ncols(), mkt.len())));
    }
    if y.nrows() != m1.len() {
        return Err(Failure::new(EXIT_SHAPE, format!("returns have {} rows, membership {} entries", y.nrows(), m1.len())));
    }
    let pairs: Vec<(Range<usize>, Option<Range<usize>>)> = match split {
        Split::Index { train } => {
            if *train == 0 || *train > t {
                return Err(Failure::config(format!("split index {train} outside 1..={t}")));
            }
            vec![(0..*train, (*train < t).then_some(*train..t))]
        }
        Split::Rolling { windows } => {
            if windows.len() < 2 {
                return Err(Failure::config("rolling evaluation needs at least two windows"));
            }
            windows.windows(2).map(|w| (w[0].clone(), Some(w[1].clone()))).collect()
        }
    };
    let mut out = Vec::new();
    for (ins, oos) in pairs {
        let fe = estimate_observed(&columns(y, &ins), m1, &columns(f, &ins), demean, Averaging::GroupMean)?;
        let ins_r2 = r2(y, f, mkt, m1, &fe.loadings, &ins)?;
        let oos_r2 = oos.as_ref().map(|r| r2(y, f, mkt, m1, &fe.loadings, r)).transpose()?;
        out.push(WindowResult { in_sample: ins, out_of_sample: oos, ins: ins_r2, oos: oos_r2 });
    }
    Ok(out)
}

pub struct EvalArgs {
    pub memberships: PathBuf,
    pub returns: PathBuf,
    pub factors: PathBuf,
    pub market: PathBuf,
    pub split: Split,
    pub demean: bool,
}

fn read_membership(path: &Path) -> CliResult<Membership> {
    let file = std::fs::File::open(path).map_err(|e| Failure::reading(path, e.into()))?;
    Membership::read_csv(file, None).map_err(|e| Failure::reading(path, e))
}

pub fn read_series(path: &Path) -> CliResult<DVector<f64>> {
    let file = std::fs::File::open(path).map_err(|e| Failure::reading(path, e.into()))?;
    pmtc::io::read_vector_csv(file).map_err(|e| Failure::reading(path, e))
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |v| format!("{:.4}", 100.0 * v))
}

pub fn run(args: &EvalArgs, out: Option<&Path>) -> CliResult<Vec<PathBuf>> {
    let m1 = read_membership(&args.memberships)?;
    let y = read_matrix(&args.returns)?;
    let f = read_matrix(&args.factors)?;
    let mkt = read_series(&args.market)?;
    let results = evaluate(&y, &f, &mkt, &m1, &args.split, args.demean)?;
    let mut rows = vec!["in_sample,out_of_sample,ins_r2_pct,oos_r2_pct".to_string()];
    let span = |r: &Range<usize>| format!("{}-{}", r.start + 1, r.end);
    for w in &results {
        rows.push(format!("{},{},{},{}", span(&w.in_sample), w.out_of_sample.as_ref().map_or("NA".into(), span), pct(Some(w.ins)), pct(w.oos)));
    }
    let n = results.len() as f64;
    let mean_ins = results.iter().map(|w| w.ins).sum::<f64>() / n;
    let oos: Vec<f64> = results.iter().filter_map(|w| w.oos).collect();
    let mean_oos = (!oos.is_empty()).then(|| oos.iter().sum::<f64>() / oos.len() as f64);
    if results.len() > 1 {
        rows.push(format!("mean,,{},{}", pct(Some(mean_ins)), pct(mean_oos)));
    }
    for r in &rows {
        println!("{}", r.replace(',', "\t"));
    }
    let mut written = Vec::new();
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Failure::writing(dir, e))?;
        let path = dir.join("eval.csv");
        std::fs::write(&path, rows.join("\n") + "\n").map_err(|e| Failure::writing(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_cover_the_sample() {
        assert_eq!(fixed_windows(10, 3), vec![0..3, 3..6, 6..10]);
        assert_eq!(fixed_windows(2, 5), vec![0..2]);
        assert_eq!(label_windows(&[2001.0, 2001.0, 2002.0, 2003.0, 2003.0]), vec![0..2, 2..3, 3..5]);
    }

    #[test]
    fn perfect_and_benchmark_fits() {
        let m1 = Membership::new(vec![0, 1, 0], 2).unwrap();
        let f = DMatrix::from_fn(1, 8, |_, t| (t as f64 * 0.7).sin() + 0.1);
        let b = DMatrix::from_column_slice(2, 1, &[1.0, 2.0]);
        let y = DMatrix::from_fn(3, 8, |i, t| b[(m1.label(i), 0)] * f[(0, t)]);
        let mkt = DVector::from_fn(8, |t, _| 0.5 * f[(0, t)]);
        let res = evaluate(&y, &f, &mkt, &m1, &Split::Index { train: 5 }, false).unwrap();
        assert!((res[0].ins - 1.0).abs() < 1e-12 && (res[0].oos.unwrap() - 1.0).abs() < 1e-12);

        // pooled loading 1 on the market factor reproduces the benchmark
        let one = Membership::new(vec![0, 0], 1).unwrap();
        let noisy = DMatrix::from_fn(2, 8, |i, t| f[(0, t)] + if i == 0 { 0.3 } else { -0.3 } * (t as f64).cos());
        let res = evaluate(&noisy, &f, &DVector::from_fn(8, |t, _| f[(0, t)]), &one, &Split::Rolling { windows: fixed_windows(8, 4) }, false).unwrap();
        assert_eq!(res.len(), 1);
        assert!(res[0].ins.abs() < 1e-12 && res[0].oos.unwrap().abs() < 1e-12);
    }

    #[test]
    fn misaligned_inputs_are_shape_errors() {
        let m1 = Membership::new(vec![0, 0], 1).unwrap();
        let err = evaluate(&DMatrix::zeros(2, 4), &DMatrix::zeros(1, 3), &DVector::zeros(4), &m1, &Split::Index { train: 2 }, false).unwrap_err();
        assert_eq!(err.code, EXIT_SHAPE);
    }
}
