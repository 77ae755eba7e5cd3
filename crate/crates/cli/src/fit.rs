//! `pmtc fit`: cluster a characteristics tensor (optionally coupled with a
//! returns panel) and estimate group factor loadings.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use pmtc::data::{rank_normalize, CoupledData};
use pmtc::factors::{estimate_latent, estimate_observed, write_asset_loadings_csv, write_loadings_csv, Averaging};
use pmtc::io::{read_matrix_csv, read_tensor, write_matrix_csv};
use pmtc::lloyd::{Projection, Schedule};
use pmtc::par::Exec;
use pmtc::pipeline::{fit_pmtc, FitOptions};

use crate::failure::{CliResult, Failure, EXIT_SHAPE};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factors {
    None,
    Observed,
    Latent(usize),
}

#[derive(Debug, Clone)]
pub struct FitArgs {
    pub tensor: PathBuf,
    pub returns: Option<PathBuf>,
    pub factors_file: Option<PathBuf>,
    pub factors: Factors,
    pub clusters: Vec<usize>,
    pub omega: f64,
    pub demean: bool,
    pub rank_normalize: bool,
    pub refine: Option<Projection>,
    pub schedule: Schedule,
    pub lloyd_iter: Option<usize>,
    /// Fit on the first `train` periods only.
    pub train: Option<usize>,
    pub seed: u64,
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| Failure::reading(path, e.into()))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure::writing(path, e))
}

pub fn read_matrix(path: &Path) -> CliResult<DMatrix<f64>> {
    read_matrix_csv(open(path)?).map_err(|e| Failure::reading(path, e))
}

fn shape(message: String) -> Failure {
    Failure::new(EXIT_SHAPE, message)
}

pub fn run(args: &FitArgs, out: &Path) -> CliResult<Vec<PathBuf>> {
    let mut x = read_tensor(open(&args.tensor)?).map_err(|e| Failure::reading(&args.tensor, e))?;
    if args.rank_normalize {
        x = rank_normalize(&x)?;
    }
    let y = args.returns.as_deref().map(read_matrix).transpose()?;
    let mut data = CoupledData::new(x, y)?;
    if data.num_modes() != args.clusters.len() {
        return Err(shape(format!("{} cluster counts given for a tensor with {} clustered modes", args.clusters.len(), data.num_modes())));
    }
    let mut factors = match (args.factors, &args.factors_file) {
        (Factors::Observed, Some(path)) => Some(read_matrix(path)?),
        (Factors::Observed, None) => return Err(Failure::config("--factors-observed needs --factors FILE")),
        _ => None,
    };
    if factors.is_some() && data.y.is_none() || matches!(args.factors, Factors::Latent(_)) && data.y.is_none() {
        return Err(Failure::config("factor loadings need --returns"));
    }
    if let Some(f) = &factors {
        if f.ncols() != data.periods() {
            return Err(shape(format!("factors span {} periods, tensor {}", f.ncols(), data.periods())));
        }
    }
    if let Some(train) = args.train {
        if train == 0 || train > data.periods() {
            return Err(Failure::config(format!("--train {train} outside 1..={}", data.periods())));
        }
        data = data.slice_time(0..train)?;
        factors = factors.map(|f| f.columns(0, train).into_owned());
    }

    let opts = FitOptions {
        omega: args.omega,
        use_outcome: data.y.is_some(),
        refine: args.refine,
        schedule: args.schedule,
        lloyd_iter: args.lloyd_iter,
        exec: Exec::Parallel,
        ..FitOptions::new(args.clusters.clone(), args.seed)
    };
    let est = fit_pmtc(&data, &opts)?;

    std::fs::create_dir_all(out).map_err(|e| Failure::writing(out, e))?;
    let mut written = Vec::new();
    for (i, m) in est.memberships.iter().enumerate() {
        let path = out.join(format!("membership_mode{}.csv", i + 1));
        m.write_csv(create(&path)?)?;
        written.push(path);
    }
    if let Some(trace) = &est.trace {
        let path = out.join("trace.csv");
        trace.write_csv(None, create(&path)?)?;
        written.push(path);
    }

    let m1 = &est.memberships[0];
    let loadings = match (args.factors, data.y.as_ref()) {
        (Factors::Observed, Some(y)) => Some(estimate_observed(y, m1, factors.as_ref().expect("checked above"), args.demean, Averaging::GroupMean)?),
        (Factors::Latent(m), Some(y)) => Some(estimate_latent(y, m1, m, Averaging::GroupMean)?),
        _ => None,
    };
    if let Some(fe) = &loadings {
        let path = out.join("loadings.csv");
        write_loadings_csv(&fe.loadings, create(&path)?)?;
        let asset = out.join("asset_loadings.csv");
        write_asset_loadings_csv(&fe.loadings, m1, create(&asset)?)?;
        written.extend([path, asset]);
        if let Some(f) = &fe.factors {
            let path = out.join("latent_factors.csv");
            write_matrix_csv(f, None, create(&path)?)?;
            written.push(path);
        }
    }

    println!("mode\tclusters\tsizes");
    for (i, m) in est.memberships.iter().enumerate() {
        let sizes: Vec<String> = m.cluster_sizes().iter().map(ToString::to_string).collect();
        println!("{}\t{}\t{}", i + 1, m.num_clusters(), sizes.join(","));
    }
    if let Some(t) = &est.trace {
        println!("lloyd_iterations\t{}\tconverged\t{}", t.iterations_used(), t.converged);
    }
    Ok(written)
}
